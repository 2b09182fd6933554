#pragma once

#include <string>
#include <vector>

#include "cids/common.hpp"

namespace cids::pipeline {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
    std::vector<std::string> labels;
    std::vector<std::vector<long long>> counts;

    long long total() const;
    static ConfusionMatrix from_pairs(const std::vector<std::string>& labels,
                                      const std::vector<int>& truth, const std::vector<int>& predicted);
};

// Zero-denominator metrics are defined as 0 and flagged.
struct MetricValue {
    double value = 0.0;
    bool zero_denominator = false;
};

double accuracy(const ConfusionMatrix& cm);
MetricValue precision(const ConfusionMatrix& cm, size_t cls);
MetricValue recall(const ConfusionMatrix& cm, size_t cls);
MetricValue f1(const ConfusionMatrix& cm, size_t cls);

struct MetricReport {
    std::string stage;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::vector<MetricValue> per_class_precision;
    std::vector<MetricValue> per_class_recall;
    std::vector<MetricValue> per_class_f1;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
};

MetricReport evaluate(const std::string& stage, const ConfusionMatrix& cm);

std::string metrics_json(const MetricReport& report);
std::string confusion_csv(const ConfusionMatrix& cm);

}  // namespace cids::pipeline
