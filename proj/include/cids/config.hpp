#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cids/common.hpp"
#include "cids/encoder.hpp"

namespace cids::pipeline {

struct SyntheticClassConfig {
    std::string label;
    std::vector<double> means;
    std::vector<double> stddevs;
    std::optional<size_t> count;  // overrides dataset.synthetic.n_per_class
};

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" | "csv"
    std::string csv_path;
    std::string label_column = "Label";
    size_t n_per_class = 400;
    std::vector<SyntheticClassConfig> classes;
    bool subsample_enabled = false;
    double benign_frac = 1.0;
    double total_frac = 1.0;
    std::vector<std::string> priority;
    std::string benign_label = "Benign";
    double train_frac = 0.8;
};

struct RolesConfig {
    std::vector<std::string> known_families;
    std::vector<std::string> boundary_families;  // trained into 0_other at baseline
    std::vector<std::vector<std::string>> chunks;
};

struct TextencConfig {
    int bins_per_feature = 32;
    int token_width = 6;
    std::string salt_hex = "a3c1";
    std::vector<std::string> hash_token_features;
    int vocab_size = 500;
    int max_len = 64;
};

struct TrainSection {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int epochs = 4;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    bool class_weighting = false;  // inverse-frequency weights for the identifier
};

struct DetectionConfig {
    double forward_frac = 0.05;
    std::optional<double> malicious_threshold;
    bool shared_encoder = false;  // warm-start the identifier from the detector encoder
};

struct IdentificationConfig {
    size_t replay_per_class = 200;
    double encoder_lr_scale = 0.1;
    std::optional<double> unknown_softmax_threshold;
    double recall_drop_budget = 0.05;
    int retrain_epochs = 4;
};

struct ClusteringConfig {
    int k_min = 2;
    int k_max = 10;
    int subsample_cap = 2000;
    size_t min_pool = 100;
    int max_iter = 200;
    double tol = 1e-6;
    double variance_floor = 1e-6;
};

struct RunConfig {
    uint64_t seed = 42;
    DatasetConfig dataset;
    RolesConfig roles;
    TextencConfig textenc;
    encoder::EncoderConfig enc;  // enc.vocab_size mirrors textenc.vocab_size
    TrainSection train;
    DetectionConfig detection;
    IdentificationConfig identification;
    ClusteringConfig clustering;

    void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);

// Applies one "dotted.key=value" override onto a config JSON tree. Unknown
// keys are rejected with the nearest valid key suggested.
void apply_override(nlohmann::ordered_json& tree, const std::string& assignment);

// Fingerprint of the resolved config; stamped into artifacts so stale
// checkpoints are detected instead of silently reused.
std::string config_hash(const RunConfig& cfg);

}  // namespace cids::pipeline
