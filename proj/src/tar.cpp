#include "th2/tar.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstring>

#include "th2/errors.hpp"

namespace th2 {

namespace {

constexpr std::size_t kBlock = 512;

std::uint64_t padded(std::uint64_t n) { return (n + kBlock - 1) / kBlock * kBlock; }

void put_octal(char* field, std::size_t width, std::uint64_t value) {
    // width-1 zero-padded octal digits plus NUL
    std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

std::array<char, kBlock> make_header(const TarMember& m) {
    if (m.name.empty() || m.name.size() > 100) throw InputError("tar member name must be 1..100 bytes: " + m.name);
    std::array<char, kBlock> h{};
    std::memcpy(h.data(), m.name.data(), m.name.size());
    put_octal(h.data() + 100, 8, 0644);
    put_octal(h.data() + 108, 8, 0);
    put_octal(h.data() + 116, 8, 0);
    put_octal(h.data() + 124, 12, m.data.size());
    put_octal(h.data() + 136, 12, 0);
    h[156] = '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    std::memset(h.data() + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    std::snprintf(h.data() + 148, 7, "%06o", sum);
    h[154] = '\0';
    h[155] = ' ';
    return h;
}

std::uint64_t parse_octal(const char* field, std::size_t width, bool& ok) {
    std::uint64_t v = 0;
    std::size_t i = 0;
    while (i < width && field[i] == ' ') ++i;
    bool any = false;
    for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) {
        v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
        any = true;
    }
    for (; i < width; ++i) {
        if (field[i] != '\0' && field[i] != ' ') ok = false;
    }
    if (!any) ok = false;
    return v;
}

}  // namespace

std::string tar_bytes(std::span<const TarMember> members) {
    std::string out;
    for (const auto& m : members) {
        const auto h = make_header(m);
        out.append(h.data(), h.size());
        out += m.data;
        out.append(padded(m.data.size()) - m.data.size(), '\0');
    }
    out.append(2 * kBlock, '\0');
    return out;
}

void write_tar(const std::filesystem::path& path, std::span<const TarMember> members) {
    const std::string bytes = tar_bytes(members);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("short write to " + path.string());
}

FileSource::FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary), name_(path.filename().string()) {
    if (!in_) throw StreamError(name_, "", "cannot open archive");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0);
}

std::string FileSource::read(std::uint64_t offset, std::size_t length) {
    if (offset >= size_) return {};
    length = static_cast<std::size_t>(std::min<std::uint64_t>(length, size_ - offset));
    std::string buf(length, '\0');
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(offset));
    in_.read(buf.data(), static_cast<std::streamsize>(length));
    buf.resize(static_cast<std::size_t>(in_.gcount()));
    return buf;
}

std::string MemorySource::read(std::uint64_t offset, std::size_t length) {
    if (offset >= bytes_.size()) return {};
    return bytes_.substr(static_cast<std::size_t>(offset), length);
}

TarReader::TarReader(std::unique_ptr<ByteSource> source) : source_(std::move(source)) {}

void TarReader::load_header() {
    loaded_ = true;
    current_.reset();
    const std::string block = source_->read(cursor_, kBlock);
    const std::string where = "<header@" + std::to_string(cursor_) + ">";
    if (block.size() < kBlock) throw StreamError(archive_name(), where, "truncated header block");
    if (std::all_of(block.begin(), block.end(), [](char c) { return c == '\0'; })) return;  // end marker

    std::string name(block.data(), strnlen(block.data(), 100));
    const std::string member = name.empty() ? where : name;
    if (std::memcmp(block.data() + 257, "ustar", 5) != 0) throw StreamError(archive_name(), member, "not a ustar header");
    bool ok = true;
    const std::uint64_t stored_sum = parse_octal(block.data() + 148, 8, ok);
    unsigned sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) {
        sum += (i >= 148 && i < 156) ? static_cast<unsigned>(' ') : static_cast<unsigned char>(block[i]);
    }
    if (!ok || stored_sum != sum) throw StreamError(archive_name(), member, "header checksum mismatch");
    const std::uint64_t size = parse_octal(block.data() + 124, 12, ok);
    if (!ok) throw StreamError(archive_name(), member, "bad size field");
    const std::uint64_t data_offset = cursor_ + kBlock;
    if (data_offset + size > source_->size()) throw StreamError(archive_name(), member, "payload runs past end of archive");
    current_ = TarHeader{std::move(name), size, data_offset};
}

const std::optional<TarHeader>& TarReader::peek() {
    if (!loaded_) load_header();
    return current_;
}

std::string TarReader::read_member() {
    const auto& h = peek();
    if (!h) throw ContractError("read past end of archive");
    std::string data = source_->read(h->data_offset, static_cast<std::size_t>(h->size));
    if (data.size() != h->size) throw StreamError(archive_name(), h->name, "short payload read");
    cursor_ = h->data_offset + padded(h->size);
    loaded_ = false;
    return data;
}

void TarReader::skip_member() {
    const auto& h = peek();
    if (!h) throw ContractError("skip past end of archive");
    cursor_ = h->data_offset + padded(h->size);
    loaded_ = false;
}

}  // namespace th2
