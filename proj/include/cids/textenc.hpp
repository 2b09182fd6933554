#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cids/flowdata.hpp"

namespace cids::textenc {

// Privacy-preserving fixed-length encoding. Numeric features become
// "f{index}b{bin}" tokens over equal-width bins; categorical features and
// any feature listed in hash_token_features become truncated keyed-hash
// tokens. Every token is exactly token_width characters.
struct PpfleConfig {
    int bins_per_feature = 32;
    int token_width = 6;
    std::vector<uint8_t> salt;
    std::set<std::string> hash_token_features;
    // Pinned so serialized configs identify the hash construction.
    std::string hash_algorithm = "sha256(salt||value)";
};

// Per-feature train-split statistics; test-time values clamp into edge bins.
struct PpfleStats {
    std::vector<std::string> schema;
    std::vector<double> min;
    std::vector<double> max;
    std::vector<uint8_t> numeric;  // 0 when the column is categorical
};

PpfleStats compute_stats(const flowdata::Dataset& train);

// Validates that feature indices and bin indices fit the token grammar.
void validate_ppfle(const PpfleConfig& cfg, size_t n_features);

std::string ppfle_encode(const flowdata::FlowRecord& rec, const std::vector<std::string>& schema,
                         const PpfleConfig& cfg, const PpfleStats& stats);

std::vector<std::string> ppfle_encode_all(const flowdata::Dataset& ds, const PpfleConfig& cfg,
                                          const PpfleStats& stats);

// Desk-scale collision watch over hashed tokens: records (token, value)
// pairs and reports when two distinct values share a token. Logged by the
// caller, never fatal.
class HashCollisionAudit {
public:
    // Returns a human-readable message when `token` was already seen for a
    // different value, empty otherwise.
    std::string record(const std::string& token, const std::string& value);
    size_t collisions() const { return collisions_; }

private:
    std::map<std::string, std::string> first_value_;
    size_t collisions_ = 0;
};

std::string ppfle_config_json(const PpfleConfig& cfg, const PpfleStats& stats);
std::pair<PpfleConfig, PpfleStats> ppfle_config_from_json(const std::string& text);

// Byte-level BPE. The base alphabet is the 256 byte values (ids 0..255),
// so any byte string round-trips losslessly; UNKFALLBACK exists only to
// complete the id space and is never emitted for byte-level input.
struct BpeTokenizer {
    static constexpr int kPad = 256;
    static constexpr int kCls = 257;
    static constexpr int kUnkFallback = 258;
    static constexpr int kFirstMergeId = 259;

    // id -> token byte string; ids 0..255 are single bytes, 259.. merges.
    std::vector<std::string> tokens;
    // ordered merge list as (left id, right id)
    std::vector<std::pair<int, int>> merges;

    int vocab_size() const { return static_cast<int>(tokens.size()) + 3; }

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

private:
    friend BpeTokenizer train_bpe(const std::vector<std::string>&, int, uint64_t);
    friend BpeTokenizer load_tokenizer(const std::string&);
    std::map<std::pair<int, int>, int> merge_rank_;
    void rebuild_ranks();
};

// Greedy highest-frequency pair merging until vocab_size is reached or no
// pair occurs at least twice. Ties break lexicographically on the pair's
// byte strings; the result is fully deterministic (seed reserved).
BpeTokenizer train_bpe(const std::vector<std::string>& corpus, int vocab_size, uint64_t seed = 0);

// Model input: CLS + subword ids truncated to max_len, PAD to max_len.
struct EncodedFlow {
    std::vector<int32_t> token_ids;
    std::vector<uint8_t> attention_mask;
};

EncodedFlow encode_flow(const std::string& text, const BpeTokenizer& tok, int max_len);

// vocab.txt + merges.txt (hex-encoded byte strings) + tokenizer.json.
void save_tokenizer(const BpeTokenizer& tok, const std::string& dir);
BpeTokenizer load_tokenizer(const std::string& dir);

}  // namespace cids::textenc
