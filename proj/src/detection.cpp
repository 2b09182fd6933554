#include "cids/detection.hpp"

#include <algorithm>

namespace cids::detection {

std::pair<Detector, DetectorReport> train_detector(
    const std::vector<textenc::EncodedFlow>& train_flows, const std::vector<uint8_t>& is_malicious,
    const std::vector<textenc::EncodedFlow>& eval_flows, const std::vector<uint8_t>& eval_is_malicious,
    const encoder::EncoderConfig& enc_cfg, const encoder::TrainConfig& train_cfg) {
    if (train_flows.size() != is_malicious.size()) throw ConfigError("train flows/labels size mismatch");
    const size_t n_mal = static_cast<size_t>(std::count(is_malicious.begin(), is_malicious.end(), 1));
    if (n_mal == 0 || n_mal == is_malicious.size())
        throw Error(errc::data, "detector training needs both benign and malicious flows");

    Detector det;
    det.model = encoder::init_encoder<double>(enc_cfg, derive_seed(train_cfg.seed, "detector-model"));
    det.head = encoder::init_head<double>({kBenign, kMalicious}, enc_cfg.d_model,
                                          derive_seed(train_cfg.seed, "detector-head"));
    std::vector<int> labels(is_malicious.size());
    for (size_t i = 0; i < is_malicious.size(); ++i) labels[i] = is_malicious[i] ? 1 : 0;

    DetectorReport report;
    report.train = encoder::train(det.model, det.head, train_flows, labels, train_cfg);

    auto predicted = predict_malicious(det, eval_flows);
    std::vector<int> truth(eval_is_malicious.size()), pred(predicted.size());
    for (size_t i = 0; i < eval_is_malicious.size(); ++i) truth[i] = eval_is_malicious[i] ? 1 : 0;
    for (size_t i = 0; i < predicted.size(); ++i) pred[i] = predicted[i] ? 1 : 0;
    report.metrics = pipeline::evaluate(
        "detector", pipeline::ConfusionMatrix::from_pairs({kBenign, kMalicious}, truth, pred));
    return {std::move(det), std::move(report)};
}

std::vector<uint8_t> predict_malicious(const Detector& det, const std::vector<textenc::EncodedFlow>& flows) {
    auto preds = encoder::predict(det.model, det.head, flows);
    std::vector<uint8_t> out(flows.size(), 0);
    const int mal = det.head.label_index(kMalicious);
    for (size_t i = 0; i < flows.size(); ++i) {
        if (det.malicious_threshold) {
            out[i] = preds.probs(static_cast<Eigen::Index>(i), mal) >= *det.malicious_threshold ? 1 : 0;
        } else {
            out[i] = preds.argmax[i] == mal ? 1 : 0;
        }
    }
    return out;
}

std::vector<size_t> DetectionRoute::forwarded() const {
    std::vector<size_t> all = malicious;
    all.insert(all.end(), benign_forward.begin(), benign_forward.end());
    std::sort(all.begin(), all.end());
    return all;
}

DetectionRoute route(const Detector& det, const std::vector<textenc::EncodedFlow>& flows,
                     double forward_frac, uint64_t seed) {
    if (!(forward_frac >= 0.0 && forward_frac <= 1.0)) throw ConfigError("forward_frac must be in [0, 1]");
    auto malicious = predict_malicious(det, flows);
    DetectionRoute r;
    std::vector<size_t> benign;
    for (size_t i = 0; i < flows.size(); ++i) {
        if (malicious[i]) r.malicious.push_back(i);
        else benign.push_back(i);
    }
    const size_t take = static_cast<size_t>(round_half_up(forward_frac * static_cast<double>(benign.size())));
    auto rng = make_rng(seed, "route-benign-forward");
    std::shuffle(benign.begin(), benign.end(), rng);
    benign.resize(std::min(take, benign.size()));
    std::sort(benign.begin(), benign.end());
    r.benign_forward = std::move(benign);
    return r;
}

}  // namespace cids::detection
