#include "cids/metrics.hpp"

#include <nlohmann/json.hpp>

namespace cids::pipeline {

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (const auto& row : counts)
        for (long long c : row) t += c;
    return t;
}

ConfusionMatrix ConfusionMatrix::from_pairs(const std::vector<std::string>& labels,
                                            const std::vector<int>& truth,
                                            const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw Error(errc::data, "truth/prediction size mismatch");
    ConfusionMatrix cm;
    cm.labels = labels;
    cm.counts.assign(labels.size(), std::vector<long long>(labels.size(), 0));
    for (size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || p < 0 || t >= static_cast<int>(labels.size()) || p >= static_cast<int>(labels.size()))
            throw Error(errc::data, "class index outside the label set");
        ++cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const long long t = cm.total();
    if (t == 0) throw Error(errc::data, "accuracy of an empty confusion matrix");
    long long diag = 0;
    for (size_t i = 0; i < cm.counts.size(); ++i) diag += cm.counts[i][i];
    return static_cast<double>(diag) / static_cast<double>(t);
}

MetricValue precision(const ConfusionMatrix& cm, size_t cls) {
    long long tp = cm.counts[cls][cls], fp = 0;
    for (size_t i = 0; i < cm.counts.size(); ++i)
        if (i != cls) fp += cm.counts[i][cls];
    if (tp + fp == 0) return {0.0, true};
    return {static_cast<double>(tp) / static_cast<double>(tp + fp), false};
}

MetricValue recall(const ConfusionMatrix& cm, size_t cls) {
    long long tp = cm.counts[cls][cls], fn = 0;
    for (size_t j = 0; j < cm.counts.size(); ++j)
        if (j != cls) fn += cm.counts[cls][j];
    if (tp + fn == 0) return {0.0, true};
    return {static_cast<double>(tp) / static_cast<double>(tp + fn), false};
}

MetricValue f1(const ConfusionMatrix& cm, size_t cls) {
    const MetricValue p = precision(cm, cls);
    const MetricValue r = recall(cm, cls);
    if (p.value + r.value == 0.0) return {0.0, p.zero_denominator || r.zero_denominator};
    return {2.0 * p.value * r.value / (p.value + r.value), p.zero_denominator || r.zero_denominator};
}

MetricReport evaluate(const std::string& stage, const ConfusionMatrix& cm) {
    if (cm.labels.empty() || cm.total() == 0) throw Error(errc::data, "empty confusion matrix");
    MetricReport rep;
    rep.stage = stage;
    rep.confusion = cm;
    rep.accuracy = accuracy(cm);
    double sp = 0, sr = 0, sf = 0;
    for (size_t c = 0; c < cm.labels.size(); ++c) {
        rep.per_class_precision.push_back(precision(cm, c));
        rep.per_class_recall.push_back(recall(cm, c));
        rep.per_class_f1.push_back(f1(cm, c));
        sp += rep.per_class_precision.back().value;
        sr += rep.per_class_recall.back().value;
        sf += rep.per_class_f1.back().value;
    }
    const double n = static_cast<double>(cm.labels.size());
    rep.macro_precision = sp / n;
    rep.macro_recall = sr / n;
    rep.macro_f1 = sf / n;
    return rep;
}

std::string metrics_json(const MetricReport& rep) {
    nlohmann::ordered_json j;
    j["stage"] = rep.stage;
    j["accuracy"] = rep.accuracy;
    j["macro"] = {{"precision", rep.macro_precision}, {"recall", rep.macro_recall}, {"f1", rep.macro_f1}};
    // micro-averaged one-vs-rest P/R/F1 coincide with accuracy for
    // single-label multiclass; reported alongside macro for comparability
    j["micro"] = {{"precision", rep.accuracy}, {"recall", rep.accuracy}, {"f1", rep.accuracy}};
    nlohmann::ordered_json per_class;
    for (size_t c = 0; c < rep.confusion.labels.size(); ++c) {
        per_class[rep.confusion.labels[c]] = {
            {"precision", rep.per_class_precision[c].value},
            {"recall", rep.per_class_recall[c].value},
            {"f1", rep.per_class_f1[c].value},
            {"zero_denominator",
             rep.per_class_precision[c].zero_denominator || rep.per_class_recall[c].zero_denominator},
        };
    }
    j["per_class"] = per_class;
    return j.dump(2) + "\n";
}

std::string confusion_csv(const ConfusionMatrix& cm) {
    std::string out = "true\\predicted";
    for (const auto& l : cm.labels) out += "," + l;
    out += "\n";
    for (size_t i = 0; i < cm.labels.size(); ++i) {
        out += cm.labels[i];
        for (size_t j = 0; j < cm.labels.size(); ++j) out += "," + std::to_string(cm.counts[i][j]);
        out += "\n";
    }
    return out;
}

}  // namespace cids::pipeline
