#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "th2/rng.hpp"
#include "th2/shards.hpp"

namespace th2 {

// ---- packing -------------------------------------------------------------------

struct PackItem {
    std::string key;
    std::vector<std::int32_t> tokens;
    std::size_t tiles = 0;

    bool operator==(const PackItem&) const = default;
};

// Reads the `json` member: {"tokens": [...], "tiles": n}.
PackItem pack_item_from_sample(const Sample& s);
Sample sample_from_pack_item(const PackItem& item);

struct PackConfig {
    std::size_t context = 4096;
    std::size_t max_tiles = 108;
    std::int32_t pad_id = 0;

    void validate() const;
};

inline constexpr std::uint32_t kPadSegment = 0;

/// Fixed-length buffer of several samples that must not see each other.
struct PackedBatch {
    std::vector<std::int32_t> tokens;    // length == context
    std::vector<std::uint32_t> segments; // 1..k per sample, 0 for padding
    std::size_t tiles = 0;
    std::size_t used = 0;  // tokens before padding
    std::vector<std::string> keys;

    // Attention visibility: same sample, never padding.
    bool visible(std::size_t i, std::size_t j) const {
        return segments[i] != kPadSegment && segments[i] == segments[j];
    }
    std::vector<std::uint8_t> dense_mask() const;  // context x context, row-major
    std::size_t padding() const { return tokens.size() - used; }

    nlohmann::json to_json() const;
    std::string serialize() const { return to_json().dump(); }
};

/// Greedy first-fit in arrival order: a sample joins the open pack while
/// both the token and tile budgets hold; otherwise the pack is emitted and
/// the sample starts the next one.
class Packer {
   public:
    explicit Packer(PackConfig cfg, std::vector<PackItem> pending = {});

    // A completed batch when `item` did not fit the open pack.
    std::optional<PackedBatch> push(PackItem item);
    std::optional<PackedBatch> flush();

    const std::vector<PackItem>& pending() const { return open_; }
    const PackConfig& config() const { return cfg_; }

   private:
    PackedBatch seal();

    PackConfig cfg_;
    std::vector<PackItem> open_;
    std::size_t open_tokens_ = 0;
    std::size_t open_tiles_ = 0;
};

std::vector<PackedBatch> pack(std::span<const PackItem> items, const PackConfig& cfg = {});

// ---- mixing ----------------------------------------------------------------------

enum class ExhaustPolicy { Drop, Cycle };

std::string to_string(ExhaustPolicy p);
ExhaustPolicy exhaust_policy_from_string(const std::string& s);

struct MixedSample {
    std::size_t source = 0;
    Sample sample;
};

struct MixerState {
    std::string rng;  // hex
    std::vector<bool> active;
    std::vector<LoaderState> sources;
};

/// Weighted interleaving of dataset loaders. Each step draws a source from
/// the categorical over the still-active normalized weights.
class Mixer {
   public:
    Mixer(std::vector<DatasetLoader> sources, std::vector<double> weights, std::uint64_t seed,
          ExhaustPolicy policy = ExhaustPolicy::Drop);
    Mixer(std::vector<DatasetLoader> sources, std::vector<double> weights, const MixerState& state,
          ExhaustPolicy policy = ExhaustPolicy::Drop);

    std::optional<MixedSample> next();
    MixerState snapshot() const;

   private:
    std::size_t draw();

    std::vector<DatasetLoader> sources_;
    std::vector<double> weights_;
    std::vector<bool> active_;
    Rng rng_;
    ExhaustPolicy policy_;
};

// ---- composed pipeline ---------------------------------------------------------

struct PipelineConfig {
    std::vector<std::string> manifests;
    std::vector<double> weights;  // one per manifest; empty = uniform
    std::size_t workers = 1;
    std::size_t prefetch = 2;
    std::uint64_t seed = 0;
    ExhaustPolicy policy = ExhaustPolicy::Drop;
    PackConfig pack;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
};

/// Everything needed to continue a pipeline exactly where it stopped.
struct ResumeState {
    std::string mode = "pack";  // "stream" (samples) or "pack" (batches)
    PipelineConfig config;
    MixerState mixer;
    std::vector<PackItem> packer_pending;
    std::size_t emitted = 0;

    nlohmann::json to_json() const;
    static ResumeState from_json(const nlohmann::json& j);
    std::string dump() const { return to_json().dump(2); }
    static ResumeState parse(const std::string& text);
};

/// worker streams -> dataset loaders -> mixer, emitting samples.
class SampleStream {
   public:
    explicit SampleStream(PipelineConfig cfg);
    explicit SampleStream(const ResumeState& state);

    std::optional<MixedSample> next();
    // Call between samples only.
    ResumeState snapshot() const;
    const PipelineConfig& config() const { return cfg_; }

   private:
    void build(const ResumeState* from);

    PipelineConfig cfg_;
    std::unique_ptr<Mixer> mixer_;
    std::size_t emitted_ = 0;
};

/// SampleStream followed by the packer, emitting batches.
class Pipeline {
   public:
    explicit Pipeline(PipelineConfig cfg);
    explicit Pipeline(const ResumeState& state);

    std::optional<PackedBatch> next();
    // Call between batches only.
    ResumeState snapshot() const;

   private:
    SampleStream samples_;
    Packer packer_;
    bool drained_ = false;
    std::size_t emitted_ = 0;
};

}  // namespace th2
