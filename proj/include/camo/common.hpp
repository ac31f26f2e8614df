#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace camo {

// Base error for every failure the library raises on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or dimension mismatch between tensors.
struct ShapeError : Error {
    using Error::Error;
};

// Caller violated an operation's contract (frozen probe mutated, non-scalar
// backward, missing gradient, ...).
struct ContractError : Error {
    using Error::Error;
};

// Bad external input: overlong sequence, unknown token, malformed file.
struct InputError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

inline void check_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

inline void check_contract(bool cond, const std::string& msg) {
    if (!cond) throw ContractError(msg);
}

inline void check_input(bool cond, const std::string& msg) {
    if (!cond) throw InputError(msg);
}

// ---------------------------------------------------------------------------
// Content hashing. FNV-1a over bytes, printed as 16 hex chars. Used for
// artifact provenance and cache keys, not for security.

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ull);
std::string hash_hex(std::uint64_t h);
std::string hash_bytes(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

// Incremental hasher for streaming larger artifacts.
class Hasher {
public:
    void update(const void* data, std::size_t n) { state_ = fnv1a(data, n, state_); }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t value() const { return state_; }
    std::string hex() const { return hash_hex(state_); }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ull;
};

// ---------------------------------------------------------------------------
// Small file helpers.

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, const void* data, std::size_t n);

// Shortest decimal string that round-trips the exact double. Keeps CSV and
// JSON output byte-stable across runs.
std::string format_double(double v);

}  // namespace camo
