#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace th2 {

// Shape or extent mismatch between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller violated an operation precondition (non-scalar loss, empty batch...).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Bad user-supplied values: non-positive sizes, zero-norm vectors, empty images.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Inconsistent configuration: routing to unrecorded layers, infeasible stage counts.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed token sequence; position is the offending index.
struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t pos)
        : std::runtime_error(what + " at index " + std::to_string(pos)), position(pos) {}
    std::size_t position;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable archive data; names the chunk file and member.
struct StreamError : std::runtime_error {
    StreamError(const std::string& chunk_name, const std::string& member_name, const std::string& why)
        : std::runtime_error("chunk '" + chunk_name + "', member '" + member_name + "': " + why),
          chunk(chunk_name),
          member(member_name) {}
    std::string chunk;
    std::string member;
};

// Archive contents disagree with the manifest.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SampleTooLargeError : std::runtime_error {
    SampleTooLargeError(const std::string& sample_key, const std::string& why)
        : std::runtime_error("sample '" + sample_key + "' too large: " + why), key(sample_key) {}
    std::string key;
};

}  // namespace th2
