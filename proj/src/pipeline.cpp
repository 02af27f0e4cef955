#include "th2/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "th2/errors.hpp"

namespace th2 {

using nlohmann::json;

// ---- packing -------------------------------------------------------------------

PackItem pack_item_from_sample(const Sample& s) {
    const std::string* payload = s.member("json");
    if (!payload) throw InputError("sample " + s.key + " has no json member");
    try {
        const json j = json::parse(*payload);
        return {s.key, j.at("tokens").get<std::vector<std::int32_t>>(), j.at("tiles").get<std::size_t>()};
    } catch (const json::exception& e) {
        throw InputError("sample " + s.key + " has a malformed json member: " + e.what());
    }
}

Sample sample_from_pack_item(const PackItem& item) {
    const json j = {{"tokens", item.tokens}, {"tiles", item.tiles}};
    return {item.key, {{"json", j.dump()}}};
}

void PackConfig::validate() const {
    if (context == 0) throw ConfigError("context length must be positive");
}

std::vector<std::uint8_t> PackedBatch::dense_mask() const {
    const std::size_t n = segments.size();
    std::vector<std::uint8_t> mask(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) mask[i * n + j] = visible(i, j) ? 1 : 0;
    return mask;
}

json PackedBatch::to_json() const {
    return {{"keys", keys}, {"used", used}, {"tiles", tiles}, {"tokens", tokens}, {"segments", segments}};
}

Packer::Packer(PackConfig cfg, std::vector<PackItem> pending) : cfg_(cfg), open_(std::move(pending)) {
    cfg_.validate();
    for (const auto& it : open_) {
        open_tokens_ += it.tokens.size();
        open_tiles_ += it.tiles;
    }
    if (open_tokens_ > cfg_.context || open_tiles_ > cfg_.max_tiles) throw ConfigError("pending pack exceeds budgets");
}

PackedBatch Packer::seal() {
    PackedBatch b;
    b.tokens.reserve(cfg_.context);
    b.segments.reserve(cfg_.context);
    std::uint32_t segment = 1;
    for (auto& it : open_) {
        b.tokens.insert(b.tokens.end(), it.tokens.begin(), it.tokens.end());
        b.segments.insert(b.segments.end(), it.tokens.size(), segment++);
        b.keys.push_back(std::move(it.key));
    }
    b.used = b.tokens.size();
    b.tiles = open_tiles_;
    b.tokens.resize(cfg_.context, cfg_.pad_id);
    b.segments.resize(cfg_.context, kPadSegment);
    open_.clear();
    open_tokens_ = open_tiles_ = 0;
    return b;
}

std::optional<PackedBatch> Packer::push(PackItem item) {
    if (item.tokens.size() > cfg_.context) {
        throw SampleTooLargeError(item.key, std::to_string(item.tokens.size()) + " tokens exceed context " +
                                                std::to_string(cfg_.context));
    }
    if (item.tiles > cfg_.max_tiles) {
        throw SampleTooLargeError(item.key, std::to_string(item.tiles) + " tiles exceed limit " + std::to_string(cfg_.max_tiles));
    }
    std::optional<PackedBatch> done;
    if (!open_.empty() &&
        (open_tokens_ + item.tokens.size() > cfg_.context || open_tiles_ + item.tiles > cfg_.max_tiles)) {
        done = seal();
    }
    open_tokens_ += item.tokens.size();
    open_tiles_ += item.tiles;
    open_.push_back(std::move(item));
    return done;
}

std::optional<PackedBatch> Packer::flush() {
    if (open_.empty()) return std::nullopt;
    return seal();
}

std::vector<PackedBatch> pack(std::span<const PackItem> items, const PackConfig& cfg) {
    Packer packer(cfg);
    std::vector<PackedBatch> out;
    for (const auto& it : items) {
        if (auto b = packer.push(it)) out.push_back(std::move(*b));
    }
    if (auto b = packer.flush()) out.push_back(std::move(*b));
    return out;
}

// ---- mixing ----------------------------------------------------------------------

std::string to_string(ExhaustPolicy p) { return p == ExhaustPolicy::Drop ? "drop" : "cycle"; }

ExhaustPolicy exhaust_policy_from_string(const std::string& s) {
    if (s == "drop") return ExhaustPolicy::Drop;
    if (s == "cycle") return ExhaustPolicy::Cycle;
    throw ConfigError("exhaust policy must be 'drop' or 'cycle', got '" + s + "'");
}

namespace {

void check_weights(const std::vector<double>& weights, std::size_t sources) {
    if (sources == 0) throw ConfigError("mixer needs at least one source");
    if (weights.size() != sources) throw ConfigError("one weight per source required");
    for (double w : weights) {
        if (!std::isfinite(w) || w <= 0.0) throw ConfigError("mixing weights must be positive and finite");
    }
}

}  // namespace

Mixer::Mixer(std::vector<DatasetLoader> sources, std::vector<double> weights, std::uint64_t seed, ExhaustPolicy policy)
    : sources_(std::move(sources)), weights_(std::move(weights)), rng_(seed), policy_(policy) {
    check_weights(weights_, sources_.size());
    active_.assign(sources_.size(), true);
}

Mixer::Mixer(std::vector<DatasetLoader> sources, std::vector<double> weights, const MixerState& state,
             ExhaustPolicy policy)
    : sources_(std::move(sources)), weights_(std::move(weights)), rng_(Rng::from_hex(state.rng)), policy_(policy) {
    check_weights(weights_, sources_.size());
    if (state.active.size() != sources_.size()) throw ConfigError("resume state has a different source count");
    active_ = state.active;
}

std::size_t Mixer::draw() {
    double total = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (active_[i]) total += weights_[i];
    }
    const double u = rng_.uniform() * total;
    double acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (!active_[i]) continue;
        acc += weights_[i];
        last = i;
        if (u < acc) return i;
    }
    return last;  // rounding at the top of the range
}

std::optional<MixedSample> Mixer::next() {
    while (std::find(active_.begin(), active_.end(), true) != active_.end()) {
        const std::size_t src = draw();
        if (auto s = sources_[src].next()) return MixedSample{src, std::move(*s)};
        if (policy_ == ExhaustPolicy::Cycle) {
            sources_[src].restart();
            if (auto s = sources_[src].next()) return MixedSample{src, std::move(*s)};
        }
        active_[src] = false;
    }
    return std::nullopt;
}

MixerState Mixer::snapshot() const {
    MixerState st{rng_.state_hex(), active_, {}};
    for (const auto& s : sources_) st.sources.push_back(s.snapshot());
    return st;
}

// ---- pipeline ----------------------------------------------------------------------

json PipelineConfig::to_json() const {
    return {{"manifests", manifests},
            {"weights", weights},
            {"workers", workers},
            {"prefetch", prefetch},
            {"seed", seed},
            {"policy", to_string(policy)},
            {"context", pack.context},
            {"max_tiles", pack.max_tiles},
            {"pad_id", pack.pad_id}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    c.manifests = j.at("manifests").get<std::vector<std::string>>();
    c.weights = j.at("weights").get<std::vector<double>>();
    c.workers = j.at("workers").get<std::size_t>();
    c.prefetch = j.at("prefetch").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.policy = exhaust_policy_from_string(j.at("policy").get<std::string>());
    c.pack.context = j.at("context").get<std::size_t>();
    c.pack.max_tiles = j.at("max_tiles").get<std::size_t>();
    c.pack.pad_id = j.at("pad_id").get<std::int32_t>();
    return c;
}

json ResumeState::to_json() const {
    json sources = json::array();
    for (const auto& s : mixer.sources) sources.push_back(s.to_json());
    json pending = json::array();
    for (const auto& it : packer_pending) pending.push_back(sample_to_json(sample_from_pack_item(it)));
    json active = json::array();
    for (bool a : mixer.active) active.push_back(a);
    return {{"format", "th2-resume/1"},
            {"mode", mode},
            {"config", config.to_json()},
            {"mixer", {{"rng", mixer.rng}, {"active", active}, {"sources", sources}}},
            {"packer_pending", pending},
            {"emitted", emitted}};
}

ResumeState ResumeState::from_json(const json& j) {
    if (j.at("format") != "th2-resume/1") throw InputError("not a resume state document");
    ResumeState st;
    st.mode = j.at("mode").get<std::string>();
    if (st.mode != "stream" && st.mode != "pack") throw InputError("unknown resume mode " + st.mode);
    st.config = PipelineConfig::from_json(j.at("config"));
    const json& m = j.at("mixer");
    st.mixer.rng = m.at("rng").get<std::string>();
    st.mixer.active = m.at("active").get<std::vector<bool>>();
    for (const auto& s : m.at("sources")) st.mixer.sources.push_back(LoaderState::from_json(s));
    for (const auto& s : j.at("packer_pending")) st.packer_pending.push_back(pack_item_from_sample(sample_from_json(s)));
    st.emitted = j.at("emitted").get<std::size_t>();
    return st;
}

ResumeState ResumeState::parse(const std::string& text) {
    try {
        return from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed resume state: ") + e.what());
    }
}

SampleStream::SampleStream(PipelineConfig cfg) : cfg_(std::move(cfg)) { build(nullptr); }

SampleStream::SampleStream(const ResumeState& state) : cfg_(state.config) { build(&state); }

void SampleStream::build(const ResumeState* from) {
    if (cfg_.manifests.empty()) throw ConfigError("pipeline needs at least one manifest");
    if (cfg_.weights.empty()) cfg_.weights.assign(cfg_.manifests.size(), 1.0);
    if (from && from->mixer.sources.size() != cfg_.manifests.size()) throw ConfigError("resume state source count mismatch");
    std::vector<DatasetLoader> loaders;
    for (std::size_t i = 0; i < cfg_.manifests.size(); ++i) {
        auto shards = std::make_shared<const ShardSet>(ShardSet::load(cfg_.manifests[i]));
        loaders.emplace_back(shards, cfg_.workers, cfg_.prefetch,
                             from ? std::optional<LoaderState>(from->mixer.sources[i]) : std::nullopt);
    }
    if (from) {
        mixer_ = std::make_unique<Mixer>(std::move(loaders), cfg_.weights, from->mixer, cfg_.policy);
        emitted_ = from->emitted;
    } else {
        mixer_ = std::make_unique<Mixer>(std::move(loaders), cfg_.weights, cfg_.seed, cfg_.policy);
    }
}

std::optional<MixedSample> SampleStream::next() {
    auto s = mixer_->next();
    if (s) ++emitted_;
    return s;
}

ResumeState SampleStream::snapshot() const { return {"stream", cfg_, mixer_->snapshot(), {}, emitted_}; }

Pipeline::Pipeline(PipelineConfig cfg) : samples_(std::move(cfg)), packer_(samples_.config().pack) {}

Pipeline::Pipeline(const ResumeState& state)
    : samples_(state), packer_(state.config.pack, state.packer_pending), emitted_(state.emitted) {
    if (state.mode != "pack") throw ConfigError("resume state was taken from a sample stream, not a packer");
}

std::optional<PackedBatch> Pipeline::next() {
    while (!drained_) {
        auto s = samples_.next();
        if (!s) {
            drained_ = true;
            break;
        }
        if (auto b = packer_.push(pack_item_from_sample(s->sample))) {
            ++emitted_;
            return b;
        }
    }
    auto b = packer_.flush();
    if (b) ++emitted_;
    return b;
}

ResumeState Pipeline::snapshot() const {
    ResumeState st = samples_.snapshot();
    st.mode = "pack";
    st.packer_pending = packer_.pending();
    st.emitted = emitted_;
    return st;
}

}  // namespace th2
