#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "th2/errors.hpp"
#include "th2/pipeline.hpp"
#include "th2/shards.hpp"
#include "th2/tar.hpp"

using namespace th2;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("th2-test-" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) + "-" +
                std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<Sample> make_samples(std::size_t n, std::size_t tokens = 5, std::size_t tiles = 1) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        PackItem it{sample_key(i), std::vector<std::int32_t>(tokens + i % 3, static_cast<std::int32_t>(i + 1)), tiles};
        Sample s = sample_from_pack_item(it);
        s.members.emplace_back("txt", "caption " + std::to_string(i));
        out.push_back(std::move(s));
    }
    return out;
}

template <class... L>
std::vector<DatasetLoader> loaders(L&&... l) {
    std::vector<DatasetLoader> out;
    (out.push_back(std::move(l)), ...);
    return out;
}

std::vector<std::string> drain(WorkerStream& ws) {
    std::vector<std::string> keys;
    while (auto s = ws.next()) keys.push_back(s->key);
    return keys;
}

}  // namespace

TEST_CASE("tar archives are deterministic and readable") {
    const std::vector<TarMember> members{{"000000001.json", "{}"}, {"000000001.txt", std::string(700, 'x')},
                                         {"000000002.json", ""}};
    const std::string a = tar_bytes(members), b = tar_bytes(members);
    CHECK(a == b);
    CHECK(a.size() % 512 == 0);
    TarReader r(std::make_unique<MemorySource>(a, "mem"));
    REQUIRE(r.peek());
    CHECK(r.peek()->name == "000000001.json");
    CHECK(r.read_member() == "{}");
    CHECK(r.peek()->size == 700);
    r.skip_member();
    CHECK(r.read_member().empty());
    CHECK_FALSE(r.peek().has_value());
}

TEST_CASE("corrupt archives name the chunk and member") {
    const std::vector<TarMember> members{{"000000001.json", "{}"}, {"000000002.json", "[]"}};
    std::string bytes = tar_bytes(members);
    bytes[1024 + 3] ^= 0x20;  // second header's name
    TarReader r(std::make_unique<MemorySource>(bytes, "chunk-7.tar"));
    r.read_member();
    try {
        r.peek();
        FAIL("corruption not detected");
    } catch (const StreamError& e) {
        CHECK(e.chunk == "chunk-7.tar");
        CHECK_FALSE(e.member.empty());
    }
    TarReader truncated(std::make_unique<MemorySource>(tar_bytes(members).substr(0, 513), "short.tar"));
    CHECK_THROWS_AS(truncated.peek(), StreamError);  // payload extent is checked with the header
}

TEST_CASE("sharding") {
    TempDir dir;
    SUBCASE("ten samples in chunks of four") {
        const ShardSet s = build_shards(make_samples(10), 4, 1, dir.path, "ds");
        REQUIRE(s.chunks.size() == 3);
        CHECK(s.chunks[0].samples == 4);
        CHECK(s.chunks[1].samples == 4);
        CHECK(s.chunks[2].samples == 2);
        CHECK(s.chunks[0].file == "ds-000000.tar");
        CHECK(fs::exists(s.manifest_path()));
        s.verify();
        const ShardSet loaded = ShardSet::load(s.manifest_path());
        CHECK(loaded.total == 10);
        CHECK(loaded.chunks.size() == 3);
    }
    SUBCASE("same seed gives identical bytes") {
        build_shards(make_samples(9), 2, 5, dir.path / "a", "ds");
        build_shards(make_samples(9), 2, 5, dir.path / "b", "ds");
        for (std::string f : {"ds-000000.tar", "ds-000003.tar", "ds-000004.tar", "ds.manifest.json"}) {
            CHECK(read_file(dir.path / "a" / f) == read_file(dir.path / "b" / f));
        }
    }
    SUBCASE("different seeds permute the same keys") {
        auto order = [&](std::uint64_t seed, const std::string& sub) {
            auto shards = std::make_shared<const ShardSet>(build_shards(make_samples(30), 7, seed, dir.path / sub, "ds"));
            WorkerStream ws(shards, 0, 1);
            return drain(ws);
        };
        const auto a = order(1, "x"), b = order(2, "y");
        CHECK(a != b);
        CHECK(std::multiset<std::string>(a.begin(), a.end()) == std::multiset<std::string>(b.begin(), b.end()));
    }
    SUBCASE("bad inputs") {
        CHECK_THROWS_AS(build_shards({}, 4, 1, dir.path, "ds"), InputError);
        auto dup = make_samples(3);
        dup[2].key = dup[0].key;
        CHECK_THROWS_AS(build_shards(dup, 4, 1, dir.path, "ds"), InputError);
        auto dotted = make_samples(2);
        dotted[0].key = "a.b";
        CHECK_THROWS_AS(build_shards(dotted, 4, 1, dir.path, "ds"), InputError);
    }
    SUBCASE("manifest mismatches") {
        const ShardSet s = build_shards(make_samples(10), 4, 1, dir.path, "ds");
        fs::remove(s.chunk_path(1));
        CHECK_THROWS_AS(ShardSet::load(s.manifest_path()), IntegrityError);
        ShardSet lying = build_shards(make_samples(10), 4, 1, dir.path / "l", "ds");
        lying.chunks[2].samples = 3;
        lying.total = 11;
        lying.save();
        const ShardSet reloaded = ShardSet::load(lying.manifest_path());
        CHECK_THROWS_AS(reloaded.verify(), IntegrityError);
    }
}

TEST_CASE("chunk assignment") {
    const auto a = assign_chunks(6, 2);
    CHECK(a == std::vector<std::vector<std::size_t>>{{0, 2, 4}, {1, 3, 5}});
    CHECK(assign_chunks(4, 1) == std::vector<std::vector<std::size_t>>{{0, 1, 2, 3}});
    const auto many = assign_chunks(2, 4);
    CHECK(many[3].empty());
    CHECK_THROWS_AS(assign_chunks(3, 0), ConfigError);
}

TEST_CASE("worker streams") {
    TempDir dir;
    auto shards = std::make_shared<const ShardSet>(build_shards(make_samples(23), 3, 4, dir.path, "ds"));
    SUBCASE("workers partition the dataset") {
        for (std::size_t W : {1, 2, 3, 5, 9}) {
            std::multiset<std::string> all;
            for (std::size_t w = 0; w < W; ++w) {
                WorkerStream ws(shards, w, W);
                for (auto& k : drain(ws)) all.insert(k);
                CHECK(ws.finished());
            }
            CHECK(all.size() == 23);
            CHECK(std::set<std::string>(all.begin(), all.end()).size() == 23);
        }
    }
    SUBCASE("resuming from any position continues the stream") {
        WorkerStream full(shards, 1, 2);
        const auto expect = drain(full);
        for (std::size_t k = 0; k <= expect.size(); ++k) {
            WorkerStream head(shards, 1, 2);
            std::vector<std::string> got;
            for (std::size_t i = 0; i < k; ++i) got.push_back(head.next()->key);
            WorkerStream tail(shards, 1, 2, head.position());
            for (auto& key : drain(tail)) got.push_back(key);
            CHECK(got == expect);
        }
    }
    SUBCASE("cursor for a chunk the worker does not own") {
        CHECK_THROWS_AS(WorkerStream(shards, 0, 2, WorkerCursor{1, 0}), IntegrityError);
    }
}

TEST_CASE("chunk reader detects count mismatches") {
    const auto s = make_samples(3);
    std::vector<TarMember> members;
    for (const auto& smp : s)
        for (const auto& [ext, bytes] : smp.members) members.push_back({smp.key + "." + ext, bytes});
    ChunkReader fewer(std::make_unique<MemorySource>(tar_bytes(members), "c.tar"), 4);
    CHECK_THROWS_AS(while (fewer.next()) {}, IntegrityError);
    ChunkReader more(std::make_unique<MemorySource>(tar_bytes(members), "c.tar"), 2);
    CHECK_THROWS_AS(while (more.next()) {}, IntegrityError);
    ChunkReader exact(std::make_unique<MemorySource>(tar_bytes(members), "c.tar"), 3);
    std::size_t n = 0;
    while (auto smp = exact.next()) {
        CHECK(*smp == s[n]);
        ++n;
    }
    CHECK(n == 3);
}

TEST_CASE("dataset loader snapshots") {
    TempDir dir;
    auto shards = std::make_shared<const ShardSet>(build_shards(make_samples(40), 3, 8, dir.path, "ds"));
    for (std::size_t workers : {1, 3}) {
        for (std::size_t prefetch : {1, 4}) {
            DatasetLoader straight(shards, workers, prefetch);
            std::vector<Sample> expect;
            while (auto s = straight.next()) expect.push_back(*s);
            REQUIRE(expect.size() == 40);
            for (std::size_t k : {std::size_t{0}, std::size_t{1}, std::size_t{17}, std::size_t{39}, std::size_t{40}}) {
                DatasetLoader head(shards, workers, prefetch);
                std::vector<Sample> got;
                for (std::size_t i = 0; i < k; ++i) got.push_back(*head.next());
                const auto text = head.snapshot().to_json().dump();
                DatasetLoader tail(shards, workers, prefetch, LoaderState::from_json(nlohmann::json::parse(text)));
                while (auto s = tail.next()) got.push_back(*s);
                CHECK(got == expect);
            }
        }
    }
    DatasetLoader l(shards, 2, 1);
    CHECK_THROWS_AS(DatasetLoader(shards, 3, 1, l.snapshot()), ConfigError);
}

TEST_CASE("mixer") {
    TempDir dir;
    auto a = std::make_shared<const ShardSet>(build_shards(make_samples(20), 4, 1, dir.path / "a", "a"));
    auto b = std::make_shared<const ShardSet>(build_shards(make_samples(5000), 100, 2, dir.path / "b", "b"));
    auto c = std::make_shared<const ShardSet>(build_shards(make_samples(5000), 100, 3, dir.path / "c", "c"));
    SUBCASE("a single source passes through") {
        Mixer m(loaders(DatasetLoader(a, 2, 1)), {1.0}, 7);
        DatasetLoader ref(a, 2, 1);
        while (auto s = ref.next()) {
            auto got = m.next();
            REQUIRE(got);
            CHECK(got->sample == *s);
            CHECK(got->source == 0);
        }
        CHECK_FALSE(m.next());
    }
    SUBCASE("equal weights draw each source about half the time") {
        Mixer m(loaders(DatasetLoader(b, 1, 1), DatasetLoader(c, 1, 1)), {1.0, 1.0}, 11);
        std::size_t first = 0;
        const std::size_t n = 10000;
        for (std::size_t i = 0; i < n; ++i) first += m.next()->source == 0;
        // 3 sigma band of Binomial(n, 1/2), while neither source is exhausted
        const double sigma = std::sqrt(n * 0.25);
        CHECK(std::fabs(double(first) - n / 2.0) <= 3 * sigma);
    }
    SUBCASE("drop retires an exhausted source") {
        Mixer m(loaders(DatasetLoader(a, 1, 1), DatasetLoader(b, 1, 1)), {100.0, 1.0}, 3, ExhaustPolicy::Drop);
        std::size_t from_a = 0, total = 0;
        while (auto s = m.next()) {
            from_a += s->source == 0;
            ++total;
        }
        CHECK(from_a == 20);
        CHECK(total == 5020);
    }
    SUBCASE("cycle restarts an exhausted source") {
        Mixer m(loaders(DatasetLoader(a, 1, 1)), {1.0}, 3, ExhaustPolicy::Cycle);
        std::vector<std::string> keys;
        for (int i = 0; i < 45; ++i) keys.push_back(m.next()->sample.key);
        CHECK(std::equal(keys.begin(), keys.begin() + 20, keys.begin() + 20));
    }
    SUBCASE("bad weights") {
        CHECK_THROWS_AS(Mixer(loaders(DatasetLoader(a, 1, 1)), {0.0}, 1), ConfigError);
        CHECK_THROWS_AS(Mixer(loaders(DatasetLoader(a, 1, 1)), {1.0, 1.0}, 1), ConfigError);
        CHECK_THROWS_AS(exhaust_policy_from_string("wrap"), ConfigError);
    }
}

TEST_CASE("packing") {
    PackConfig cfg;
    auto item = [](std::string key, std::size_t tokens, std::size_t tiles) {
        return PackItem{std::move(key), std::vector<std::int32_t>(tokens, 3), tiles};
    };
    SUBCASE("two halves share one pack") {
        const std::vector<PackItem> items{item("a", 2000, 0), item("b", 2000, 0)};
        const auto out = pack(items, cfg);
        REQUIRE(out.size() == 1);
        CHECK(out[0].padding() == 96);
        CHECK(out[0].keys == std::vector<std::string>{"a", "b"});
    }
    SUBCASE("tile budget caps a pack at 36 three-tile samples") {
        std::vector<PackItem> items;
        for (int i = 0; i < 100; ++i) items.push_back(item("s" + std::to_string(i), 10, 3));
        const auto out = pack(items, cfg);
        const auto expect = oracle::greedy_pack_keys(items, cfg);
        REQUIRE(out.size() == expect.size());
        CHECK(out[0].keys.size() == 36);
        CHECK(out[0].tiles == 108);
        for (std::size_t k = 0; k < out.size(); ++k) CHECK(out[k].keys == expect[k]);
    }
    SUBCASE("mask is block diagonal") {
        PackConfig small{12, 10, -1};
        const std::vector<PackItem> items{item("a", 3, 0), item("b", 5, 0)};
        const auto b = pack(items, small).at(0);
        CHECK(b.tokens[10] == -1);
        CHECK(b.visible(0, 2));
        CHECK(b.visible(3, 7));
        CHECK_FALSE(b.visible(2, 3));
        CHECK_FALSE(b.visible(3, 2));
        CHECK_FALSE(b.visible(9, 9));
        CHECK_FALSE(b.visible(0, 9));
        const auto mask = b.dense_mask();
        std::size_t on = 0;
        for (auto v : mask) on += v;
        CHECK(on == 3 * 3 + 5 * 5);
    }
    SUBCASE("a sealed pack could not take the next sample") {
        Rng rng(4);
        std::vector<PackItem> items;
        for (int i = 0; i < 3000; ++i) items.push_back(item(sample_key(i), 1 + rng.below(3000), rng.below(30)));
        const auto out = pack(items, cfg);
        std::size_t next = 0;
        for (std::size_t k = 0; k + 1 < out.size(); ++k) {
            next += out[k].keys.size();
            const auto& nxt = items[next];
            CHECK((nxt.tokens.size() > out[k].padding() || out[k].tiles + nxt.tiles > cfg.max_tiles));
        }
    }
    SUBCASE("oversized samples are rejected by key") {
        Packer p(cfg);
        p.push(item("ok", 10, 1));
        try {
            p.push(item("huge", 5000, 0));
            FAIL("accepted");
        } catch (const SampleTooLargeError& e) {
            CHECK(e.key == "huge");
        }
        CHECK_THROWS_AS(p.push(item("tiled", 1, 109)), SampleTooLargeError);
        CHECK(p.pending().size() == 1);
    }
}

TEST_CASE("pipeline resume") {
    TempDir dir;
    Rng rng(5);
    PipelineConfig cfg;
    for (int d = 0; d < 2; ++d) {
        std::vector<Sample> samples;
        for (std::size_t i = 0; i < 60; ++i) {
            PackItem it{sample_key(i), std::vector<std::int32_t>(1 + rng.below(900), d + 1), rng.below(12)};
            samples.push_back(sample_from_pack_item(it));
        }
        const std::string name = "d" + std::to_string(d);
        cfg.manifests.push_back(build_shards(samples, 7, 10 + d, dir.path / name, name).manifest_path().string());
    }
    cfg.weights = {2.0, 1.0};
    cfg.workers = 3;
    cfg.prefetch = 2;
    cfg.seed = 77;
    cfg.pack.context = 2048;
    cfg.pack.max_tiles = 40;

    std::vector<std::string> expect;
    {
        Pipeline p(cfg);
        while (auto b = p.next()) expect.push_back(b->serialize());
    }
    REQUIRE(expect.size() > 10);
    for (std::size_t k : {std::size_t{0}, std::size_t{1}, expect.size() / 2, expect.size() - 1, expect.size()}) {
        Pipeline head(cfg);
        std::vector<std::string> got;
        for (std::size_t i = 0; i < k; ++i) got.push_back(head.next()->serialize());
        const std::string state = head.snapshot().dump();
        Pipeline tail(ResumeState::parse(state));
        while (auto b = tail.next()) got.push_back(b->serialize());
        CHECK(got == expect);
    }
    SUBCASE("state documents are validated") {
        CHECK_THROWS_AS(ResumeState::parse("{\"format\": \"other\"}"), InputError);
        CHECK_THROWS_AS(ResumeState::parse("not json"), InputError);
        SampleStream s(cfg);
        s.next();
        CHECK_THROWS_AS(Pipeline(s.snapshot()), ConfigError);
    }
}
