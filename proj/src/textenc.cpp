#include "cids/textenc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace cids::textenc {

namespace {

std::string sha256_hex(const std::vector<uint8_t>& salt, const std::string& value) {
    std::vector<uint8_t> input(salt);
    input.insert(input.end(), value.begin(), value.end());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(errc::runtime, "sha256 digest failed");
    return to_hex(std::vector<uint8_t>(digest, digest + len));
}

// token_width minus the 'f' and 'b' markers, split index-first.
void digit_split(int token_width, int& idx_digits, int& bin_digits) {
    const int field = token_width - 2;
    idx_digits = (field + 1) / 2;
    bin_digits = field / 2;
}

std::string value_text(const flowdata::FeatureValue& v) {
    return flowdata::is_numeric(v) ? format_double(flowdata::num(v)) : flowdata::cat(v);
}

struct PairHash {
    size_t operator()(const std::pair<int, int>& p) const {
        return std::hash<long long>()((static_cast<long long>(p.first) << 32) ^ p.second);
    }
};

}  // namespace

PpfleStats compute_stats(const flowdata::Dataset& train) {
    PpfleStats st;
    st.schema = train.schema;
    const size_t n = train.schema.size();
    st.min.assign(n, 0.0);
    st.max.assign(n, 0.0);
    st.numeric.assign(n, 1);
    for (size_t f = 0; f < n; ++f) {
        bool any = false;
        double lo = 0.0, hi = 0.0;
        bool is_num = true;
        for (const auto& rec : train.records) {
            const auto& v = rec.values[f];
            if (!flowdata::is_numeric(v)) {
                is_num = false;
                break;
            }
            double x = flowdata::num(v);
            if (!any || x < lo) lo = x;
            if (!any || x > hi) hi = x;
            any = true;
        }
        st.numeric[f] = is_num ? 1 : 0;
        if (is_num && any) {
            st.min[f] = lo;
            st.max[f] = hi;
        }
    }
    return st;
}

void validate_ppfle(const PpfleConfig& cfg, size_t n_features) {
    if (cfg.bins_per_feature < 2) throw ConfigError("bins_per_feature must be >= 2");
    if (cfg.token_width < 2) throw ConfigError("token_width must be >= 2");
    int idx_digits, bin_digits;
    digit_split(cfg.token_width, idx_digits, bin_digits);
    if (idx_digits < 1 || bin_digits < 1) throw ConfigError("token_width too small for the token grammar");
    double max_idx = std::pow(10.0, idx_digits);
    double max_bin = std::pow(10.0, bin_digits);
    if (static_cast<double>(n_features) > max_idx)
        throw ConfigError("token_width cannot index " + std::to_string(n_features) + " features");
    if (static_cast<double>(cfg.bins_per_feature) > max_bin)
        throw ConfigError("token_width cannot index " + std::to_string(cfg.bins_per_feature) + " bins");
}

std::string ppfle_encode(const flowdata::FlowRecord& rec, const std::vector<std::string>& schema,
                         const PpfleConfig& cfg, const PpfleStats& stats) {
    if (stats.schema != schema)
        throw Error(errc::data, "ppfle stats do not cover the record schema");
    validate_ppfle(cfg, schema.size());
    int idx_digits, bin_digits;
    digit_split(cfg.token_width, idx_digits, bin_digits);

    std::string out;
    out.reserve(schema.size() * (cfg.token_width + 1));
    char buf[32];
    for (size_t f = 0; f < schema.size(); ++f) {
        if (f) out.push_back(' ');
        const auto& v = rec.values[f];
        const bool hash_it = !flowdata::is_numeric(v) || cfg.hash_token_features.count(schema[f]) > 0;
        if (hash_it) {
            out += sha256_hex(cfg.salt, value_text(v)).substr(0, cfg.token_width);
        } else {
            if (!stats.numeric[f])
                throw Error(errc::data, "feature '" + schema[f] + "' has no numeric stats");
            const double lo = stats.min[f], hi = stats.max[f];
            int bin = 0;
            if (hi > lo) {
                double t = (flowdata::num(v) - lo) / (hi - lo);
                bin = static_cast<int>(std::floor(t * cfg.bins_per_feature));
                bin = std::clamp(bin, 0, cfg.bins_per_feature - 1);
            }
            std::snprintf(buf, sizeof(buf), "f%0*zub%0*d", idx_digits, f, bin_digits, bin);
            out += buf;
        }
    }
    return out;
}

std::vector<std::string> ppfle_encode_all(const flowdata::Dataset& ds, const PpfleConfig& cfg,
                                          const PpfleStats& stats) {
    std::vector<std::string> out;
    out.reserve(ds.records.size());
    for (const auto& rec : ds.records) out.push_back(ppfle_encode(rec, ds.schema, cfg, stats));
    return out;
}

std::string HashCollisionAudit::record(const std::string& token, const std::string& value) {
    auto [it, inserted] = first_value_.emplace(token, value);
    if (!inserted && it->second != value) {
        ++collisions_;
        return "hash token collision: '" + token + "' covers both '" + it->second + "' and '" + value + "'";
    }
    return {};
}

std::string ppfle_config_json(const PpfleConfig& cfg, const PpfleStats& stats) {
    nlohmann::ordered_json j;
    j["bins_per_feature"] = cfg.bins_per_feature;
    j["token_width"] = cfg.token_width;
    j["salt_hex"] = to_hex(cfg.salt);
    j["hash_token_features"] = cfg.hash_token_features;
    j["hash_algorithm"] = cfg.hash_algorithm;
    j["stats"]["schema"] = stats.schema;
    j["stats"]["min"] = stats.min;
    j["stats"]["max"] = stats.max;
    j["stats"]["numeric"] = stats.numeric;
    return j.dump(2) + "\n";
}

std::pair<PpfleConfig, PpfleStats> ppfle_config_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    PpfleConfig cfg;
    cfg.bins_per_feature = j.at("bins_per_feature").get<int>();
    cfg.token_width = j.at("token_width").get<int>();
    cfg.salt = from_hex(j.at("salt_hex").get<std::string>());
    cfg.hash_token_features = j.at("hash_token_features").get<std::set<std::string>>();
    cfg.hash_algorithm = j.at("hash_algorithm").get<std::string>();
    PpfleStats st;
    st.schema = j.at("stats").at("schema").get<std::vector<std::string>>();
    st.min = j.at("stats").at("min").get<std::vector<double>>();
    st.max = j.at("stats").at("max").get<std::vector<double>>();
    st.numeric = j.at("stats").at("numeric").get<std::vector<uint8_t>>();
    return {cfg, st};
}

void BpeTokenizer::rebuild_ranks() {
    merge_rank_.clear();
    for (size_t r = 0; r < merges.size(); ++r) merge_rank_[merges[r]] = static_cast<int>(r);
}

std::vector<int> BpeTokenizer::encode(const std::string& text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    if (ids.size() < 2 || merge_rank_.empty()) return ids;

    while (true) {
        int best_rank = std::numeric_limits<int>::max();
        for (size_t i = 0; i + 1 < ids.size(); ++i) {
            auto it = merge_rank_.find({ids[i], ids[i + 1]});
            if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        const auto [l, r] = merges[best_rank];
        const int merged = kFirstMergeId + best_rank;
        std::vector<int> next;
        next.reserve(ids.size());
        for (size_t i = 0; i < ids.size();) {
            if (i + 1 < ids.size() && ids[i] == l && ids[i + 1] == r) {
                next.push_back(merged);
                i += 2;
            } else {
                next.push_back(ids[i]);
                ++i;
            }
        }
        ids.swap(next);
    }
    return ids;
}

std::string BpeTokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kCls || id == kUnkFallback) continue;
        int slot = id < 256 ? id : id - 3;  // specials occupy 256..258 in the id space
        out += tokens.at(static_cast<size_t>(slot));
    }
    return out;
}

BpeTokenizer train_bpe(const std::vector<std::string>& corpus, int vocab_size, uint64_t /*seed*/) {
    if (corpus.empty()) throw ConfigError("bpe corpus is empty");
    if (vocab_size < 259) throw ConfigError("vocab_size must be >= 259 (256 bytes + 3 specials)");

    BpeTokenizer tok;
    tok.tokens.reserve(static_cast<size_t>(vocab_size));
    for (int b = 0; b < 256; ++b) tok.tokens.push_back(std::string(1, static_cast<char>(b)));

    // Dedup identical corpus strings; pair counts carry multiplicities.
    std::map<std::string, long long> uniq;
    for (const auto& s : corpus) ++uniq[s];
    std::vector<std::vector<int>> seqs;
    std::vector<long long> mult;
    seqs.reserve(uniq.size());
    for (const auto& [s, m] : uniq) {
        std::vector<int> ids;
        ids.reserve(s.size());
        for (unsigned char c : s) ids.push_back(c);
        seqs.push_back(std::move(ids));
        mult.push_back(m);
    }

    auto token_of = [&tok](int id) -> const std::string& {
        return tok.tokens[static_cast<size_t>(id < 256 ? id : id - 3)];
    };

    const int target_merges = vocab_size - 259;
    for (int round = 0; round < target_merges; ++round) {
        std::unordered_map<std::pair<int, int>, long long, PairHash> counts;
        for (size_t s = 0; s < seqs.size(); ++s) {
            const auto& seq = seqs[s];
            for (size_t i = 0; i + 1 < seq.size(); ++i) counts[{seq[i], seq[i + 1]}] += mult[s];
        }
        std::pair<int, int> best{-1, -1};
        long long best_count = 0;
        for (const auto& [pair, c] : counts) {
            if (c < 2) continue;
            if (c > best_count) {
                best = pair;
                best_count = c;
            } else if (c == best_count) {
                // lexicographic tie-break on the pair's byte strings
                auto lhs = std::make_pair(token_of(pair.first), token_of(pair.second));
                auto rhs = std::make_pair(token_of(best.first), token_of(best.second));
                if (lhs < rhs) best = pair;
            }
        }
        if (best_count < 2) break;

        const int merged_id = BpeTokenizer::kFirstMergeId + static_cast<int>(tok.merges.size());
        tok.tokens.push_back(token_of(best.first) + token_of(best.second));
        tok.merges.push_back(best);
        for (auto& seq : seqs) {
            std::vector<int> next;
            next.reserve(seq.size());
            for (size_t i = 0; i < seq.size();) {
                if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
                    next.push_back(merged_id);
                    i += 2;
                } else {
                    next.push_back(seq[i]);
                    ++i;
                }
            }
            seq.swap(next);
        }
    }
    tok.rebuild_ranks();
    return tok;
}

EncodedFlow encode_flow(const std::string& text, const BpeTokenizer& tok, int max_len) {
    if (max_len < 2) throw ConfigError("max_len must be >= 2");
    EncodedFlow out;
    out.token_ids.reserve(static_cast<size_t>(max_len));
    out.token_ids.push_back(BpeTokenizer::kCls);
    auto ids = tok.encode(text);
    for (int id : ids) {
        if (out.token_ids.size() >= static_cast<size_t>(max_len)) break;
        out.token_ids.push_back(id);
    }
    out.attention_mask.assign(out.token_ids.size(), 1);
    while (out.token_ids.size() < static_cast<size_t>(max_len)) {
        out.token_ids.push_back(BpeTokenizer::kPad);
        out.attention_mask.push_back(0);
    }
    return out;
}

void save_tokenizer(const BpeTokenizer& tok, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream v(fs::path(dir) / "vocab.txt", std::ios::binary);
        for (size_t slot = 0; slot < tok.tokens.size(); ++slot) {
            const int id = slot < 256 ? static_cast<int>(slot) : static_cast<int>(slot) + 3;
            const auto& t = tok.tokens[slot];
            v << to_hex(std::vector<uint8_t>(t.begin(), t.end())) << ' ' << id << '\n';
        }
    }
    {
        std::ofstream m(fs::path(dir) / "merges.txt", std::ios::binary);
        for (const auto& [l, r] : tok.merges) {
            const std::string& lt = tok.tokens[static_cast<size_t>(l < 256 ? l : l - 3)];
            const std::string& rt = tok.tokens[static_cast<size_t>(r < 256 ? r : r - 3)];
            m << to_hex(std::vector<uint8_t>(lt.begin(), lt.end())) << ' '
              << to_hex(std::vector<uint8_t>(rt.begin(), rt.end())) << '\n';
        }
    }
    {
        nlohmann::ordered_json j;
        j["format_version"] = 1;
        j["vocab_size"] = tok.vocab_size();
        j["specials"] = {{"pad", BpeTokenizer::kPad},
                         {"cls", BpeTokenizer::kCls},
                         {"unkfallback", BpeTokenizer::kUnkFallback}};
        std::ofstream c(fs::path(dir) / "tokenizer.json", std::ios::binary);
        c << j.dump(2) << '\n';
    }
}

BpeTokenizer load_tokenizer(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream m(fs::path(dir) / "merges.txt", std::ios::binary);
    if (!m) throw MissingArtifactError("tokenizer merges.txt not found in '" + dir + "'");

    BpeTokenizer tok;
    for (int b = 0; b < 256; ++b) tok.tokens.push_back(std::string(1, static_cast<char>(b)));

    std::map<std::string, int> bytes_to_id;
    for (int b = 0; b < 256; ++b) bytes_to_id[tok.tokens[static_cast<size_t>(b)]] = b;

    std::string line;
    while (std::getline(m, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string lh, rh;
        ss >> lh >> rh;
        auto lb = from_hex(lh);
        auto rb = from_hex(rh);
        std::string ls(lb.begin(), lb.end()), rs(rb.begin(), rb.end());
        auto li = bytes_to_id.find(ls);
        auto ri = bytes_to_id.find(rs);
        if (li == bytes_to_id.end() || ri == bytes_to_id.end())
            throw Error(errc::data, "merges.txt references an unknown token");
        const int merged_id = BpeTokenizer::kFirstMergeId + static_cast<int>(tok.merges.size());
        tok.merges.emplace_back(li->second, ri->second);
        tok.tokens.push_back(ls + rs);
        bytes_to_id[ls + rs] = merged_id;
    }
    tok.rebuild_ranks();

    // Cross-check: merges applied in order must reproduce vocab.txt.
    std::ifstream v(fs::path(dir) / "vocab.txt", std::ios::binary);
    if (!v) throw MissingArtifactError("tokenizer vocab.txt not found in '" + dir + "'");
    size_t entries = 0;
    while (std::getline(v, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string hex;
        int id;
        ss >> hex >> id;
        auto bytes = from_hex(hex);
        std::string s(bytes.begin(), bytes.end());
        const size_t slot = static_cast<size_t>(id < 256 ? id : id - 3);
        if (slot >= tok.tokens.size() || tok.tokens[slot] != s)
            throw Error(errc::data, "vocab.txt disagrees with merges.txt");
        ++entries;
    }
    if (entries != tok.tokens.size()) throw Error(errc::data, "vocab.txt entry count mismatch");
    return tok;
}

}  // namespace cids::textenc
