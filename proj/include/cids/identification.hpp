#pragma once

#include <map>
#include <optional>

#include "cids/clustering.hpp"
#include "cids/encoder.hpp"
#include "cids/metrics.hpp"

namespace cids::identification {

inline constexpr const char* kOther = "0_other";

// Append-only ordered label set; "0_other" is pinned at index 0 and acts
// as the known/unknown decision boundary.
struct LabelRegistry {
    std::vector<std::string> labels;
    std::map<std::string, std::string> provenance;  // label -> "initial" | "chunk<N>"

    static LabelRegistry initial(const std::vector<std::string>& known_attacks);
    void append(const std::string& label, const std::string& from);
    int index_of(const std::string& label) const;
};

struct Identifier {
    encoder::EncoderModel model;
    encoder::ClassifierHead head;  // head.labels mirrors registry.labels
    LabelRegistry registry;
    // Optional max-softmax cutoff: predictions below it fall back to
    // 0_other. Unset = plain argmax, the default boundary rule.
    std::optional<double> unknown_softmax_threshold;
};

// Multi-class training over the registry. `labels` are registry label
// strings; 0_other examples (forwarded benign and held-out families) must
// be present. `warm_start` seeds the encoder from an existing model
// (shared-encoder mode) instead of random initialization.
Identifier train_identifier(const std::vector<textenc::EncodedFlow>& flows,
                            const std::vector<std::string>& labels, const LabelRegistry& registry,
                            const encoder::EncoderConfig& enc_cfg, const encoder::TrainConfig& train_cfg,
                            const encoder::EncoderModel* warm_start = nullptr);

// Predicted registry indices under the identifier's boundary rule.
std::vector<int> predict_labels(const Identifier& ident, const std::vector<textenc::EncodedFlow>& flows);

// Flows routed to the identifier whose prediction is 0_other, with their
// embeddings attached.
struct UnknownPool {
    std::vector<size_t> indices;  // into the routed flow list
    clustering::Mat embeddings;   // |indices| x d_model
};

UnknownPool collect_unknowns(const Identifier& ident, const std::vector<textenc::EncodedFlow>& flows);

// Grows the head by `new_labels` rows. Existing rows and biases are
// bit-identical afterwards; new rows start at zero so old-class logits are
// unchanged on any input until retraining.
void expand_head(Identifier& ident, const std::vector<std::string>& new_labels, int chunk_id);

// Class-balanced exemplar reservoir used to retain old-class knowledge
// through incremental retraining.
class ReplayStore {
public:
    explicit ReplayStore(size_t per_class = 200, uint64_t seed = 0) : per_class_(per_class), seed_(seed) {}

    void add(const std::string& label, const textenc::EncodedFlow& flow);
    const std::map<std::string, std::vector<textenc::EncodedFlow>>& exemplars() const { return store_; }
    size_t per_class() const { return per_class_; }
    size_t size() const;

    std::string to_json() const;
    static ReplayStore from_json(const std::string& text);

private:
    size_t per_class_ = 200;
    uint64_t seed_ = 0;
    std::map<std::string, std::vector<textenc::EncodedFlow>> store_;
    std::map<std::string, size_t> seen_;
};

struct RetrainOptions {
    encoder::TrainConfig train;
    // Encoder fine-tunes at this multiple of the head learning rate.
    double encoder_lr_scale = 0.1;
    // Old-class macro recall may drop at most this much (in recall points,
    // 0.05 = 5 points) before a warning is emitted.
    double recall_drop_budget = 0.05;
};

struct RetrainResult {
    encoder::TrainReport train;
    std::vector<std::string> warnings;
    std::optional<pipeline::MetricReport> post_eval;
};

// Trains on the new cluster-labeled flows mixed with replay exemplars of
// every pre-existing class. When an eval set is supplied the post-retrain
// report is produced and old-class recall is checked against
// `pre_old_class_recall` (macro over old classes).
RetrainResult retrain_incremental(Identifier& ident, const std::vector<textenc::EncodedFlow>& new_flows,
                                  const std::vector<std::string>& new_labels, const ReplayStore& replay,
                                  const RetrainOptions& opts,
                                  const std::vector<textenc::EncodedFlow>& eval_flows = {},
                                  const std::vector<std::string>& eval_labels = {},
                                  std::optional<double> pre_old_class_recall = {},
                                  size_t n_old_classes = 0);

}  // namespace cids::identification
