#include "cids/identification.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

namespace cids::identification {

LabelRegistry LabelRegistry::initial(const std::vector<std::string>& known_attacks) {
    LabelRegistry reg;
    reg.labels.push_back(kOther);
    reg.provenance[kOther] = "initial";
    for (const auto& label : known_attacks) reg.append(label, "initial");
    return reg;
}

void LabelRegistry::append(const std::string& label, const std::string& from) {
    if (label.empty()) throw ConfigError("empty label");
    if (std::find(labels.begin(), labels.end(), label) != labels.end())
        throw ConfigError("duplicate label '" + label + "' in registry");
    labels.push_back(label);
    provenance[label] = from;
}

int LabelRegistry::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    throw ConfigError("label '" + label + "' is not registered");
}

Identifier train_identifier(const std::vector<textenc::EncodedFlow>& flows,
                            const std::vector<std::string>& labels, const LabelRegistry& registry,
                            const encoder::EncoderConfig& enc_cfg, const encoder::TrainConfig& train_cfg,
                            const encoder::EncoderModel* warm_start) {
    if (flows.size() != labels.size()) throw ConfigError("flows/labels size mismatch");
    if (registry.labels.empty() || registry.labels[0] != kOther)
        throw ConfigError("registry must reserve index 0 for 0_other");
    if (std::find(labels.begin(), labels.end(), kOther) == labels.end())
        throw Error(errc::data, "identifier training data has no 0_other examples");

    Identifier ident;
    ident.registry = registry;
    if (warm_start) {
        if (!(warm_start->cfg == enc_cfg)) throw ConfigError("warm-start encoder config mismatch");
        ident.model = *warm_start;
    } else {
        ident.model =
            encoder::init_encoder<double>(enc_cfg, derive_seed(train_cfg.seed, "identifier-model"));
    }
    ident.head = encoder::init_head<double>(registry.labels, enc_cfg.d_model,
                                            derive_seed(train_cfg.seed, "identifier-head"));
    std::vector<int> idx(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) idx[i] = ident.registry.index_of(labels[i]);
    encoder::train(ident.model, ident.head, flows, idx, train_cfg);
    return ident;
}

std::vector<int> predict_labels(const Identifier& ident, const std::vector<textenc::EncodedFlow>& flows) {
    auto preds = encoder::predict(ident.model, ident.head, flows);
    if (ident.unknown_softmax_threshold) {
        for (size_t i = 0; i < flows.size(); ++i) {
            const double top = preds.probs.row(static_cast<Eigen::Index>(i)).maxCoeff();
            if (top < *ident.unknown_softmax_threshold) preds.argmax[i] = 0;
        }
    }
    return preds.argmax;
}

UnknownPool collect_unknowns(const Identifier& ident, const std::vector<textenc::EncodedFlow>& flows) {
    auto preds = encoder::predict(ident.model, ident.head, flows);
    std::vector<int> labels = preds.argmax;
    if (ident.unknown_softmax_threshold) {
        for (size_t i = 0; i < flows.size(); ++i) {
            const double top = preds.probs.row(static_cast<Eigen::Index>(i)).maxCoeff();
            if (top < *ident.unknown_softmax_threshold) labels[i] = 0;
        }
    }
    UnknownPool pool;
    for (size_t i = 0; i < flows.size(); ++i)
        if (labels[i] == 0) pool.indices.push_back(i);
    pool.embeddings.resize(static_cast<Eigen::Index>(pool.indices.size()), ident.model.cfg.d_model);
    for (size_t p = 0; p < pool.indices.size(); ++p)
        pool.embeddings.row(static_cast<Eigen::Index>(p)) =
            preds.embeddings.row(static_cast<Eigen::Index>(pool.indices[p]));
    return pool;
}

void expand_head(Identifier& ident, const std::vector<std::string>& new_labels, int chunk_id) {
    if (new_labels.empty()) return;
    std::set<std::string> uniq(new_labels.begin(), new_labels.end());
    if (uniq.size() != new_labels.size()) throw ConfigError("duplicate label in expansion");
    const Eigen::Index old_c = ident.head.W.rows();
    const Eigen::Index d = ident.head.W.cols();
    for (const auto& label : new_labels) ident.registry.append(label, "chunk" + std::to_string(chunk_id));

    encoder::Mat<double> W(old_c + static_cast<Eigen::Index>(new_labels.size()), d);
    W.topRows(old_c) = ident.head.W;
    W.bottomRows(static_cast<Eigen::Index>(new_labels.size())).setZero();
    encoder::Vec<double> b(old_c + static_cast<Eigen::Index>(new_labels.size()));
    b.head(old_c) = ident.head.b;
    b.tail(static_cast<Eigen::Index>(new_labels.size())).setZero();
    ident.head.W = std::move(W);
    ident.head.b = std::move(b);
    ident.head.labels = ident.registry.labels;
}

void ReplayStore::add(const std::string& label, const textenc::EncodedFlow& flow) {
    auto& slot = store_[label];
    const size_t seen = seen_[label]++;
    if (slot.size() < per_class_) {
        slot.push_back(flow);
        return;
    }
    // reservoir sampling keeps a uniform exemplar set per class
    auto rng = std::mt19937_64(derive_seed(seed_, "replay:" + label, seen));
    std::uniform_int_distribution<size_t> pick(0, seen);
    const size_t j = pick(rng);
    if (j < per_class_) slot[j] = flow;
}

size_t ReplayStore::size() const {
    size_t n = 0;
    for (const auto& [label, flows] : store_) n += flows.size();
    return n;
}

std::string ReplayStore::to_json() const {
    nlohmann::ordered_json j;
    j["per_class"] = per_class_;
    j["seed"] = seed_;
    nlohmann::ordered_json classes;
    for (const auto& [label, flows] : store_) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& f : flows) {
            arr.push_back({{"ids", f.token_ids}, {"mask", f.attention_mask}});
        }
        classes[label] = arr;
    }
    j["classes"] = classes;
    nlohmann::ordered_json seen;
    for (const auto& [label, n] : seen_) seen[label] = n;
    j["seen"] = seen;
    return j.dump() + "\n";
}

ReplayStore ReplayStore::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    ReplayStore store(j.at("per_class").get<size_t>(), j.at("seed").get<uint64_t>());
    for (const auto& [label, arr] : j.at("classes").items()) {
        for (const auto& f : arr) {
            textenc::EncodedFlow flow;
            flow.token_ids = f.at("ids").get<std::vector<int32_t>>();
            flow.attention_mask = f.at("mask").get<std::vector<uint8_t>>();
            store.store_[label].push_back(std::move(flow));
        }
    }
    for (const auto& [label, n] : j.at("seen").items()) store.seen_[label] = n.get<size_t>();
    return store;
}

RetrainResult retrain_incremental(Identifier& ident, const std::vector<textenc::EncodedFlow>& new_flows,
                                  const std::vector<std::string>& new_labels, const ReplayStore& replay,
                                  const RetrainOptions& opts,
                                  const std::vector<textenc::EncodedFlow>& eval_flows,
                                  const std::vector<std::string>& eval_labels,
                                  std::optional<double> pre_old_class_recall, size_t n_old_classes) {
    if (new_flows.size() != new_labels.size()) throw ConfigError("flows/labels size mismatch");
    RetrainResult result;
    if (new_flows.empty()) return result;  // nothing to learn, model unchanged

    // every pre-existing class must be represented in replay
    std::set<std::string> new_set(new_labels.begin(), new_labels.end());
    for (const auto& label : ident.registry.labels) {
        if (new_set.count(label)) continue;
        const auto& ex = replay.exemplars();
        auto it = ex.find(label);
        if (it == ex.end() || it->second.empty())
            throw Error(errc::data, "replay store has no exemplars for class '" + label + "'");
    }

    std::vector<textenc::EncodedFlow> flows = new_flows;
    std::vector<int> idx;
    idx.reserve(new_flows.size() + replay.size());
    for (const auto& label : new_labels) idx.push_back(ident.registry.index_of(label));
    for (const auto& [label, exemplars] : replay.exemplars()) {
        const int li = ident.registry.index_of(label);
        for (const auto& f : exemplars) {
            flows.push_back(f);
            idx.push_back(li);
        }
    }

    encoder::TrainConfig cfg = opts.train;
    cfg.encoder_lr_scale = opts.encoder_lr_scale;
    result.train = encoder::train(ident.model, ident.head, flows, idx, cfg);

    if (!eval_flows.empty()) {
        std::vector<int> truth(eval_labels.size());
        for (size_t i = 0; i < eval_labels.size(); ++i) truth[i] = ident.registry.index_of(eval_labels[i]);
        auto predicted = predict_labels(ident, eval_flows);
        auto cm = pipeline::ConfusionMatrix::from_pairs(ident.registry.labels, truth, predicted);
        result.post_eval = pipeline::evaluate("post-retrain", cm);
        if (pre_old_class_recall && n_old_classes > 0) {
            double sum = 0.0;
            for (size_t c = 0; c < n_old_classes; ++c)
                sum += pipeline::recall(cm, c).value;
            const double post = sum / static_cast<double>(n_old_classes);
            if (post < *pre_old_class_recall - opts.recall_drop_budget) {
                result.warnings.push_back(
                    "old-class macro recall dropped from " + format_double(*pre_old_class_recall) + " to " +
                    format_double(post) + ", beyond the configured budget of " +
                    format_double(opts.recall_drop_budget));
            }
        }
    }
    return result;
}

}  // namespace cids::identification
