#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "th2/tar.hpp"

namespace th2 {

/// One training sample: members stored as `{key}.{ext}` in a shard.
struct Sample {
    std::string key;
    std::vector<std::pair<std::string, std::string>> members;  // (ext, bytes)

    const std::string* member(const std::string& ext) const;
    bool operator==(const Sample&) const = default;
};

// Zero-padded decimal key, e.g. 000000042.
std::string sample_key(std::size_t index);

nlohmann::json sample_to_json(const Sample& s);  // payloads hex-encoded
Sample sample_from_json(const nlohmann::json& j);

std::string hex_encode(const std::string& bytes);
std::string hex_decode(const std::string& hex);

struct ChunkInfo {
    std::string file;  // relative to the manifest directory
    std::size_t samples = 0;
};

/// A pre-shuffled dataset cut into equal-sized tar chunks.
struct ShardSet {
    std::string dataset;
    std::filesystem::path dir;
    std::size_t samples_per_chunk = 0;
    std::uint64_t seed = 0;
    std::size_t total = 0;
    std::vector<ChunkInfo> chunks;

    std::filesystem::path manifest_path() const { return dir / (dataset + ".manifest.json"); }
    std::filesystem::path chunk_path(std::size_t i) const { return dir / chunks.at(i).file; }

    nlohmann::json manifest() const;
    void save() const;
    static ShardSet load(const std::filesystem::path& manifest);
    // Scans every chunk header-by-header; IntegrityError on any count mismatch.
    void verify() const;
};

/// Seeded Fisher-Yates over the samples, then sequential cuts of
/// samples_per_chunk into `{dataset}-{nnnnnn}.tar` plus a JSON manifest.
ShardSet build_shards(std::vector<Sample> samples, std::size_t samples_per_chunk, std::uint64_t seed,
                      const std::filesystem::path& dir, const std::string& dataset);

// chunk i -> worker i mod workers
std::vector<std::vector<std::size_t>> assign_chunks(std::size_t chunk_count, std::size_t workers);
std::vector<std::vector<std::size_t>> assign_chunks(const ShardSet& shards, std::size_t workers);

/// Sequential sample reader over one chunk.
class ChunkReader {
   public:
    ChunkReader(std::unique_ptr<ByteSource> source, std::size_t expected_samples);

    std::optional<Sample> next();
    // Advances past one sample without reading payloads; false at end.
    bool skip();
    std::size_t consumed() const { return consumed_; }

   private:
    std::optional<std::string> next_key();
    void check_end();

    TarReader tar_;
    std::size_t expected_;
    std::size_t consumed_ = 0;
};

/// Position of one worker: the next sample it will read.
struct WorkerCursor {
    std::size_t chunk = 0;   // global chunk index; == chunk count when finished
    std::size_t offset = 0;  // samples already taken from that chunk
};

/// One data worker: its assigned chunks, read in order, each sequentially.
class WorkerStream {
   public:
    WorkerStream(std::shared_ptr<const ShardSet> shards, std::size_t worker, std::size_t workers,
                 std::optional<WorkerCursor> from = std::nullopt);

    std::optional<Sample> next();
    WorkerCursor position() const;
    bool finished() const { return slot_ >= assigned_.size(); }

   private:
    void open_current(std::size_t skip);

    std::shared_ptr<const ShardSet> shards_;
    std::vector<std::size_t> assigned_;
    std::size_t slot_ = 0;    // index into assigned_
    std::size_t offset_ = 0;  // samples emitted from the current chunk
    std::unique_ptr<ChunkReader> reader_;
};

/// Snapshot of a dataset loader: worker cursors plus samples workers read
/// ahead but the loader had not handed out yet.
struct LoaderState {
    std::vector<WorkerCursor> workers;
    std::vector<std::vector<Sample>> pending;
    std::size_t next_worker = 0;
    std::size_t epoch = 0;

    nlohmann::json to_json() const;
    static LoaderState from_json(const nlohmann::json& j);
};

/// Round-robin over worker streams; each worker reads ahead up to `prefetch`
/// samples into its pending buffer.
class DatasetLoader {
   public:
    DatasetLoader(std::shared_ptr<const ShardSet> shards, std::size_t workers, std::size_t prefetch,
                  std::optional<LoaderState> from = std::nullopt);

    std::optional<Sample> next();
    LoaderState snapshot() const;
    // Starts the next epoch from the first chunk.
    void restart();

    const ShardSet& shards() const { return *shards_; }
    std::size_t workers() const { return streams_.size(); }

   private:
    std::shared_ptr<const ShardSet> shards_;
    std::size_t prefetch_;
    std::vector<WorkerStream> streams_;
    std::vector<std::vector<Sample>> pending_;  // front = oldest
    std::size_t next_worker_ = 0;
    std::size_t epoch_ = 0;
};

}  // namespace th2
