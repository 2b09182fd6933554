#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cids {

// Error categories map 1:1 onto CLI exit codes.
enum class errc {
    config = 2,
    missing_artifact = 3,
    data = 4,
    runtime = 5,
};

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(errc::config, msg) {}
};

class MissingArtifactError : public Error {
public:
    explicit MissingArtifactError(const std::string& msg) : Error(errc::missing_artifact, msg) {}
};

// Data-layer failures carry a machine-checkable reason.
class DataError : public Error {
public:
    enum class reason {
        missing_file,
        missing_label_column,
        empty_file,
        empty_dataset,
        class_too_small,
        bad_value,
    };

    DataError(reason r, const std::string& msg) : Error(errc::data, msg), reason_(r) {}
    reason why() const { return reason_; }

private:
    reason reason_;
};

class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(errc::runtime, msg) {}
};

// 64-bit FNV-1a, used for seed fan-out and config fingerprints.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// All randomness flows from one root seed; each consumer derives its own
// stream by name so adding a stage never shifts another stage's stream.
inline uint64_t derive_seed(uint64_t root, std::string_view stream) {
    uint64_t h = fnv1a64(stream);
    h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

inline uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index) {
    return derive_seed(derive_seed(root, stream), std::to_string(index));
}

inline std::mt19937_64 make_rng(uint64_t root, std::string_view stream) {
    return std::mt19937_64(derive_seed(root, stream));
}

inline std::string to_hex(const std::vector<uint8_t>& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

std::vector<uint8_t> from_hex(std::string_view hex);

// Shortest round-trip decimal formatting (std::to_chars), the one float
// format used in every CSV/JSON artifact so re-exports are byte-identical.
std::string format_double(double v);

// Round half-up used by every stratified sampling rule.
inline long long round_half_up(double x) {
    return static_cast<long long>(std::floor(x + 0.5));
}

}  // namespace cids
