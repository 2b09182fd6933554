#pragma once

#include <optional>

#include "cids/encoder.hpp"
#include "cids/metrics.hpp"

namespace cids::detection {

inline constexpr const char* kBenign = "benign";
inline constexpr const char* kMalicious = "malicious";

// Binary benign/malicious stage: encoder plus a 2-class head.
struct Detector {
    encoder::EncoderModel model;
    encoder::ClassifierHead head;  // labels {benign, malicious}
    // Optional decision threshold on the malicious softmax; unset = argmax.
    std::optional<double> malicious_threshold;
};

struct DetectorReport {
    pipeline::MetricReport metrics;  // labels {benign, malicious}
    encoder::TrainReport train;
};

// Trains the binary head; `is_malicious` aligns with `train_flows`. Both
// classes must be present. Evaluation runs on the held-out pair.
std::pair<Detector, DetectorReport> train_detector(
    const std::vector<textenc::EncodedFlow>& train_flows, const std::vector<uint8_t>& is_malicious,
    const std::vector<textenc::EncodedFlow>& eval_flows, const std::vector<uint8_t>& eval_is_malicious,
    const encoder::EncoderConfig& enc_cfg, const encoder::TrainConfig& train_cfg);

std::vector<uint8_t> predict_malicious(const Detector& det, const std::vector<textenc::EncodedFlow>& flows);

// Indices into the routed flow list.
struct DetectionRoute {
    std::vector<size_t> malicious;
    std::vector<size_t> benign_forward;

    // malicious followed by the forwarded benign sample, input order kept
    std::vector<size_t> forwarded() const;
};

// Every predicted-malicious flow is forwarded; a seeded sample of
// round(forward_frac * predicted-benign) joins it.
DetectionRoute route(const Detector& det, const std::vector<textenc::EncodedFlow>& flows,
                     double forward_frac, uint64_t seed);

}  // namespace cids::detection
