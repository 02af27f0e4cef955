#include "th2/shards.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "th2/errors.hpp"
#include "th2/rng.hpp"

namespace th2 {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- samples ------------------------------------------------------------------

const std::string* Sample::member(const std::string& ext) const {
    for (const auto& [e, bytes] : members) {
        if (e == ext) return &bytes;
    }
    return nullptr;
}

std::string sample_key(std::size_t index) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%09zu", index);
    return buf;
}

std::string hex_encode(const std::string& bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(kDigits[c >> 4]);
        out.push_back(kDigits[c & 15]);
    }
    return out;
}

std::string hex_decode(const std::string& hex) {
    if (hex.size() % 2) throw InputError("odd-length hex string");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw InputError(std::string("bad hex digit '") + c + "'");
    };
    std::string out(hex.size() / 2, '\0');
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<char>(nibble(hex[2 * i]) * 16 + nibble(hex[2 * i + 1]));
    return out;
}

json sample_to_json(const Sample& s) {
    json members = json::array();
    for (const auto& [ext, bytes] : s.members) members.push_back({{"ext", ext}, {"hex", hex_encode(bytes)}});
    return {{"key", s.key}, {"members", members}};
}

Sample sample_from_json(const json& j) {
    Sample s;
    s.key = j.at("key").get<std::string>();
    for (const auto& m : j.at("members")) s.members.emplace_back(m.at("ext").get<std::string>(), hex_decode(m.at("hex").get<std::string>()));
    return s;
}

// ---- shard sets ---------------------------------------------------------------

json ShardSet::manifest() const {
    json chunk_list = json::array();
    for (const auto& c : chunks) chunk_list.push_back({{"file", c.file}, {"samples", c.samples}});
    return {{"format", "th2-shards/1"},
            {"dataset", dataset},
            {"samples_per_chunk", samples_per_chunk},
            {"seed", seed},
            {"total", total},
            {"chunks", chunk_list}};
}

void ShardSet::save() const {
    std::ofstream out(manifest_path(), std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write manifest " + manifest_path().string());
    out << manifest().dump(2) << '\n';
}

ShardSet ShardSet::load(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw InputError("cannot open manifest " + manifest.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw IntegrityError("unreadable manifest " + manifest.string() + ": " + e.what());
    }
    ShardSet s;
    try {
        if (j.at("format") != "th2-shards/1") throw IntegrityError("unknown manifest format in " + manifest.string());
        s.dataset = j.at("dataset").get<std::string>();
        s.dir = manifest.parent_path();
        s.samples_per_chunk = j.at("samples_per_chunk").get<std::size_t>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.total = j.at("total").get<std::size_t>();
        for (const auto& c : j.at("chunks")) s.chunks.push_back({c.at("file").get<std::string>(), c.at("samples").get<std::size_t>()});
    } catch (const json::exception& e) {
        throw IntegrityError("malformed manifest " + manifest.string() + ": " + e.what());
    }
    std::size_t sum = 0;
    for (std::size_t i = 0; i < s.chunks.size(); ++i) {
        const auto& c = s.chunks[i];
        sum += c.samples;
        const bool last = i + 1 == s.chunks.size();
        if (c.samples == 0 || c.samples > s.samples_per_chunk || (!last && c.samples != s.samples_per_chunk)) {
            throw IntegrityError("chunk " + c.file + " count " + std::to_string(c.samples) + " breaks equal sizing");
        }
        if (!fs::exists(s.dir / c.file)) throw IntegrityError("missing chunk file " + c.file);
    }
    if (sum != s.total) throw IntegrityError("manifest chunk counts sum to " + std::to_string(sum) + ", total says " + std::to_string(s.total));
    return s;
}

void ShardSet::verify() const {
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        ChunkReader reader(std::make_unique<FileSource>(chunk_path(i)), chunks[i].samples);
        while (reader.skip()) {
        }
    }
}

ShardSet build_shards(std::vector<Sample> samples, std::size_t samples_per_chunk, std::uint64_t seed,
                      const fs::path& dir, const std::string& dataset) {
    if (samples.empty()) throw InputError("cannot shard an empty dataset");
    if (samples_per_chunk == 0) throw InputError("samples_per_chunk must be positive");
    if (dataset.empty() || dataset.find('/') != std::string::npos) throw InputError("bad dataset name '" + dataset + "'");
    std::set<std::string> keys;
    for (const auto& s : samples) {
        if (s.key.empty() || s.key.find('.') != std::string::npos) throw InputError("sample key '" + s.key + "' must be non-empty without '.'");
        if (!keys.insert(s.key).second) throw InputError("duplicate sample key " + s.key);
        if (s.members.empty()) throw InputError("sample " + s.key + " has no members");
    }

    Rng rng(seed);
    for (std::size_t i = samples.size() - 1; i > 0; --i) std::swap(samples[i], samples[rng.below(i + 1)]);

    fs::create_directories(dir);
    ShardSet set;
    set.dataset = dataset;
    set.dir = dir;
    set.samples_per_chunk = samples_per_chunk;
    set.seed = seed;
    set.total = samples.size();
    for (std::size_t begin = 0; begin < samples.size(); begin += samples_per_chunk) {
        const std::size_t end = std::min(begin + samples_per_chunk, samples.size());
        std::vector<TarMember> members;
        for (std::size_t i = begin; i < end; ++i) {
            for (const auto& [ext, bytes] : samples[i].members) members.push_back({samples[i].key + "." + ext, bytes});
        }
        char name[32];
        std::snprintf(name, sizeof name, "-%06zu.tar", set.chunks.size());
        ChunkInfo info{dataset + name, end - begin};
        write_tar(dir / info.file, members);
        set.chunks.push_back(std::move(info));
    }
    set.save();
    return set;
}

std::vector<std::vector<std::size_t>> assign_chunks(std::size_t chunk_count, std::size_t workers) {
    if (workers == 0) throw ConfigError("need at least one worker");
    std::vector<std::vector<std::size_t>> out(workers);
    for (std::size_t i = 0; i < chunk_count; ++i) out[i % workers].push_back(i);
    return out;
}

std::vector<std::vector<std::size_t>> assign_chunks(const ShardSet& shards, std::size_t workers) {
    return assign_chunks(shards.chunks.size(), workers);
}

// ---- chunk reader ---------------------------------------------------------------

ChunkReader::ChunkReader(std::unique_ptr<ByteSource> source, std::size_t expected_samples)
    : tar_(std::move(source)), expected_(expected_samples) {}

std::optional<std::string> ChunkReader::next_key() {
    const auto& h = tar_.peek();
    if (!h) {
        check_end();
        return std::nullopt;
    }
    const auto dot = h->name.find('.');
    if (dot == std::string::npos || dot == 0) throw StreamError(tar_.archive_name(), h->name, "member name lacks key.ext form");
    if (consumed_ >= expected_) {
        throw IntegrityError("chunk '" + tar_.archive_name() + "' holds more than the " + std::to_string(expected_) +
                             " samples in its manifest");
    }
    return h->name.substr(0, dot);
}

void ChunkReader::check_end() {
    if (consumed_ != expected_) {
        throw IntegrityError("chunk '" + tar_.archive_name() + "' holds " + std::to_string(consumed_) +
                             " samples, manifest says " + std::to_string(expected_));
    }
}

std::optional<Sample> ChunkReader::next() {
    auto key = next_key();
    if (!key) return std::nullopt;
    Sample s;
    s.key = *key;
    while (const auto& h = tar_.peek()) {
        const auto dot = h->name.find('.');
        if (dot == std::string::npos || h->name.compare(0, dot, s.key) != 0 || dot != s.key.size()) break;
        std::string ext = h->name.substr(dot + 1);
        s.members.emplace_back(std::move(ext), tar_.read_member());
    }
    ++consumed_;
    return s;
}

bool ChunkReader::skip() {
    auto key = next_key();
    if (!key) return false;
    while (const auto& h = tar_.peek()) {
        const auto dot = h->name.find('.');
        if (dot != key->size() || h->name.compare(0, dot, *key) != 0) break;
        tar_.skip_member();
    }
    ++consumed_;
    return true;
}

// ---- worker streams -------------------------------------------------------------

WorkerStream::WorkerStream(std::shared_ptr<const ShardSet> shards, std::size_t worker, std::size_t workers,
                           std::optional<WorkerCursor> from)
    : shards_(std::move(shards)) {
    if (worker >= workers) throw ConfigError("worker index out of range");
    assigned_ = assign_chunks(*shards_, workers)[worker];
    if (from) {
        if (from->chunk >= shards_->chunks.size()) {
            slot_ = assigned_.size();
            return;
        }
        const auto it = std::find(assigned_.begin(), assigned_.end(), from->chunk);
        if (it == assigned_.end()) {
            throw IntegrityError("resume cursor names chunk " + std::to_string(from->chunk) + " not owned by worker " +
                                 std::to_string(worker));
        }
        slot_ = static_cast<std::size_t>(it - assigned_.begin());
        offset_ = from->offset;
        if (offset_ > shards_->chunks[from->chunk].samples) throw IntegrityError("resume offset beyond chunk size");
    }
}

void WorkerStream::open_current(std::size_t skip) {
    const std::size_t chunk = assigned_[slot_];
    reader_ = std::make_unique<ChunkReader>(std::make_unique<FileSource>(shards_->chunk_path(chunk)),
                                            shards_->chunks[chunk].samples);
    for (std::size_t i = 0; i < skip; ++i) {
        if (!reader_->skip()) throw IntegrityError("resume offset beyond end of " + shards_->chunks[chunk].file);
    }
}

std::optional<Sample> WorkerStream::next() {
    while (slot_ < assigned_.size()) {
        if (!reader_) open_current(offset_);
        if (auto s = reader_->next()) {
            ++offset_;
            return s;
        }
        reader_.reset();
        ++slot_;
        offset_ = 0;
    }
    return std::nullopt;
}

WorkerCursor WorkerStream::position() const {
    if (finished()) return {shards_->chunks.size(), 0};
    return {assigned_[slot_], offset_};
}

// ---- loader ------------------------------------------------------------------------

json LoaderState::to_json() const {
    json ws = json::array();
    for (std::size_t w = 0; w < workers.size(); ++w) {
        json p = json::array();
        for (const auto& s : pending[w]) p.push_back(sample_to_json(s));
        ws.push_back({{"chunk", workers[w].chunk}, {"offset", workers[w].offset}, {"pending", p}});
    }
    return {{"workers", ws}, {"next_worker", next_worker}, {"epoch", epoch}};
}

LoaderState LoaderState::from_json(const json& j) {
    LoaderState st;
    for (const auto& w : j.at("workers")) {
        st.workers.push_back({w.at("chunk").get<std::size_t>(), w.at("offset").get<std::size_t>()});
        auto& p = st.pending.emplace_back();
        for (const auto& s : w.at("pending")) p.push_back(sample_from_json(s));
    }
    st.next_worker = j.at("next_worker").get<std::size_t>();
    st.epoch = j.at("epoch").get<std::size_t>();
    return st;
}

DatasetLoader::DatasetLoader(std::shared_ptr<const ShardSet> shards, std::size_t workers, std::size_t prefetch,
                             std::optional<LoaderState> from)
    : shards_(std::move(shards)), prefetch_(std::max<std::size_t>(prefetch, 1)) {
    if (workers == 0) throw ConfigError("need at least one worker");
    if (from && (from->workers.size() != workers || from->pending.size() != workers || from->next_worker >= workers)) {
        throw ConfigError("resume state was taken with a different worker count");
    }
    for (std::size_t w = 0; w < workers; ++w) {
        streams_.emplace_back(shards_, w, workers, from ? std::optional<WorkerCursor>(from->workers[w]) : std::nullopt);
    }
    pending_.resize(workers);
    if (from) {
        pending_ = from->pending;
        next_worker_ = from->next_worker;
        epoch_ = from->epoch;
    }
}

std::optional<Sample> DatasetLoader::next() {
    const std::size_t W = streams_.size();
    for (std::size_t attempt = 0; attempt < W; ++attempt) {
        const std::size_t w = next_worker_;
        next_worker_ = (next_worker_ + 1) % W;
        auto& buf = pending_[w];
        while (buf.size() < prefetch_) {
            auto s = streams_[w].next();
            if (!s) break;
            buf.push_back(std::move(*s));
        }
        if (!buf.empty()) {
            Sample out = std::move(buf.front());
            buf.erase(buf.begin());
            return out;
        }
    }
    return std::nullopt;
}

LoaderState DatasetLoader::snapshot() const {
    LoaderState st;
    for (const auto& s : streams_) st.workers.push_back(s.position());
    st.pending = pending_;
    st.next_worker = next_worker_;
    st.epoch = epoch_;
    return st;
}

void DatasetLoader::restart() {
    const std::size_t W = streams_.size();
    streams_.clear();
    for (std::size_t w = 0; w < W; ++w) streams_.emplace_back(shards_, w, W);
    pending_.assign(W, {});
    next_worker_ = 0;
    ++epoch_;
}

}  // namespace th2
