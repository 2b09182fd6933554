#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cids/common.hpp"

namespace cids::flowdata {

// A feature value is either a finite float or a categorical string.
using FeatureValue = std::variant<double, std::string>;

inline bool is_numeric(const FeatureValue& v) { return std::holds_alternative<double>(v); }
inline double num(const FeatureValue& v) { return std::get<double>(v); }
inline const std::string& cat(const FeatureValue& v) { return std::get<std::string>(v); }

// One network flow. Feature names live in the owning Dataset's schema so
// every record of a dataset shares the same ordered name list.
struct FlowRecord {
    std::vector<FeatureValue> values;
    std::string label;
};

struct Dataset {
    std::vector<std::string> schema;
    std::vector<FlowRecord> records;
    std::map<std::string, size_t> class_counts;

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    // Recount labels into class_counts. Construction helpers call this;
    // callers mutating `records` directly must call it themselves.
    void recount();
};

Dataset make_dataset(std::vector<std::string> schema, std::vector<FlowRecord> records);

// Concatenate datasets with identical schemas.
Dataset merge(const Dataset& a, const Dataset& b);

// Keep only records whose label is in `labels` (order preserved).
Dataset filter_labels(const Dataset& ds, const std::vector<std::string>& labels);

struct IngestOptions {
    // Column holding the class label; case-insensitive match.
    std::string label_column = "Label";
    // Optional column -> feature rename applied after ingestion.
    std::map<std::string, std::string> schema_map;
};

// Read a CSE-CIC-IDS2018-style CSV: first row header, one flow per row.
// Cleaning: NaN -> 0.0, +/-inf -> column finite max/min, duplicate header
// rows dropped. A column is numeric iff every non-empty cell parses as a
// number (after cleaning); otherwise it is categorical.
Dataset ingest_csv(const std::string& path, const IngestOptions& opts = {});

// Canonical writer: header row, label column last, shortest round-trip
// float formatting. ingest_csv(write_csv(ds)) == ds.
void write_csv(const Dataset& ds, const std::string& path, const std::string& label_column = "Label");

// Dataset manifest (schema, class_counts, seed provenance) as JSON text.
std::string manifest_json(const Dataset& ds, uint64_t seed, const std::string& provenance);

struct SubsampleOptions {
    std::string benign_label = "Benign";
    // Classes exempt from the total_frac reduction step.
    std::vector<std::string> priority;
};

// Two-step class-proportional reduction: the benign class is first cut to
// benign_frac of its count, then every class (priority classes exempt) is
// cut to total_frac of its post-step-1 count. Per-class rounding half-up,
// deterministic per seed, record order preserved.
Dataset subsample(const Dataset& ds, double benign_frac, double total_frac, uint64_t seed,
                  const SubsampleOptions& opts = {});

// Stratified per-class split; both sides keep at least one record per
// class. Throws naming the class when a class has fewer than 2 records.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, uint64_t seed);

struct SyntheticClass {
    std::string label;
    std::vector<double> means;
    std::vector<double> stddevs;
};

struct SyntheticSpec {
    std::vector<SyntheticClass> classes;
    size_t n_per_class = 1;
    uint64_t seed = 0;
    // Optional schema; defaults to f0..f{n-1}.
    std::vector<std::string> feature_names;
};

// Gaussian per-feature samples per class, deterministic per seed. Each
// class draws from its own derived stream so class order is irrelevant.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace cids::flowdata
