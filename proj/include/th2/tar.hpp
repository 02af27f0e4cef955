#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace th2 {

struct TarMember {
    std::string name;
    std::string data;
};

// POSIX ustar with fixed metadata (mode 0644, uid/gid 0, mtime 0), so equal
// member lists give byte-identical archives.
std::string tar_bytes(std::span<const TarMember> members);
void write_tar(const std::filesystem::path& path, std::span<const TarMember> members);

/// Random-access bytes behind an archive. Local files today; an object-store
/// client only has to implement ranged reads.
class ByteSource {
   public:
    virtual ~ByteSource() = default;
    virtual std::uint64_t size() const = 0;
    // Returns fewer bytes only at end of source.
    virtual std::string read(std::uint64_t offset, std::size_t length) = 0;
    virtual const std::string& name() const = 0;
};

class FileSource : public ByteSource {
   public:
    explicit FileSource(const std::filesystem::path& path);
    std::uint64_t size() const override { return size_; }
    std::string read(std::uint64_t offset, std::size_t length) override;
    const std::string& name() const override { return name_; }

   private:
    std::ifstream in_;
    std::uint64_t size_ = 0;
    std::string name_;
};

class MemorySource : public ByteSource {
   public:
    MemorySource(std::string bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}
    std::uint64_t size() const override { return bytes_.size(); }
    std::string read(std::uint64_t offset, std::size_t length) override;
    const std::string& name() const override { return name_; }

   private:
    std::string bytes_;
    std::string name_;
};

struct TarHeader {
    std::string name;
    std::uint64_t size = 0;
    std::uint64_t data_offset = 0;
};

/// Forward-only member iterator. Headers are checksum-verified; payloads are
/// read or skipped on demand, so skipping never touches payload bytes.
class TarReader {
   public:
    explicit TarReader(std::unique_ptr<ByteSource> source);

    // Header at the cursor without consuming it; nullopt at end of archive.
    const std::optional<TarHeader>& peek();
    std::string read_member();  // payload of the peeked member, then advance
    void skip_member();

    const std::string& archive_name() const { return source_->name(); }

   private:
    void load_header();

    std::unique_ptr<ByteSource> source_;
    std::uint64_t cursor_ = 0;
    bool loaded_ = false;
    std::optional<TarHeader> current_;
};

}  // namespace th2
