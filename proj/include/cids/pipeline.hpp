#pragma once

#include <iosfwd>
#include <optional>

#include "cids/clustering.hpp"
#include "cids/config.hpp"
#include "cids/detection.hpp"
#include "cids/flowdata.hpp"
#include "cids/identification.hpp"
#include "cids/metrics.hpp"
#include "cids/textenc.hpp"

namespace cids::pipeline {

// One completed protocol stage (baseline or baseline+chunk...).
struct StageRecord {
    std::string stage;
    MetricReport metrics;                       // post-stage, all classes so far
    std::optional<MetricReport> pre_metrics;    // chunk stages: before expansion/retraining
    std::optional<MetricReport> detector_metrics;
    std::optional<clustering::ClusterSelection> selection;
    std::vector<std::string> new_labels;
    size_t pool_size = 0;
    std::vector<std::string> warnings;
    clustering::Mat embeddings;                 // eval-set embeddings for the bundle
    std::vector<std::string> emb_true, emb_pred;
};

struct State {
    RunConfig cfg;
    flowdata::Dataset baseline_train, baseline_test;
    textenc::PpfleConfig ppfle;
    textenc::PpfleStats stats;
    textenc::BpeTokenizer tok;
    detection::Detector detector;
    std::optional<MetricReport> detector_metrics;  // consumed by the baseline record
    identification::Identifier identifier;
    identification::ReplayStore replay;
    // evaluation set accumulated across stages (encoded + registry labels)
    std::vector<textenc::EncodedFlow> eval_flows;
    std::vector<std::string> eval_labels;
    std::vector<StageRecord> history;
    int chunks_done = 0;
};

// Synthetic generation or CSV ingest, then the configured subsample step.
flowdata::Dataset acquire_dataset(const RunConfig& cfg, std::ostream* log = nullptr);

// Benign + known + boundary families (the traffic the baseline model sees).
flowdata::Dataset baseline_slice(const RunConfig& cfg, const flowdata::Dataset& full);

// The families arriving in chunk `chunk_id` (1-based).
flowdata::Dataset chunk_slice(const RunConfig& cfg, const flowdata::Dataset& full, int chunk_id);

// Identification ground truth: known families keep their name, everything
// else (benign, boundary, unseen) is 0_other.
std::string identification_truth(const RunConfig& cfg, const std::string& raw_label);

std::vector<textenc::EncodedFlow> encode_dataset(const flowdata::Dataset& ds, const State& st);

struct EvalOutcome {
    MetricReport report;
    clustering::Mat embeddings;
    std::vector<std::string> predicted;
};

EvalOutcome evaluate_identifier(const identification::Identifier& ident,
                                const std::vector<textenc::EncodedFlow>& flows,
                                const std::vector<std::string>& labels, const std::string& stage);

// Splits the baseline slice, freezes the text-encoding layer on the train
// split and trains the binary detector.
State run_detector_stage(const RunConfig& cfg, const flowdata::Dataset& full, std::ostream* log = nullptr);

// Routes baseline traffic through the detector, trains the identifier,
// seeds the replay store and emits the baseline stage record.
void run_identifier_stage(State& st, std::ostream* log = nullptr);

// Trains detector and identifier and emits the baseline stage record.
State run_baseline(const RunConfig& cfg, std::ostream* log = nullptr);

// route -> collect unknowns -> (pool large enough?) cluster -> expand ->
// retrain -> evaluate. Appends and returns the stage record.
const StageRecord& run_chunk(State& st, const flowdata::Dataset& chunk_ds, int chunk_id,
                             std::ostream* log = nullptr);

// Baseline plus every configured chunk.
State run_all(const RunConfig& cfg, std::ostream* log = nullptr);

// report/stage_<name>/{metrics.json, confusion.csv, silhouette.json,
// embeddings.csv} plus a cross-stage metrics table. Pure function of the
// history: re-exports are byte-identical.
void export_report(const std::vector<StageRecord>& history, const std::string& dir);

std::string history_json(const std::vector<StageRecord>& history, const std::string& cfg_hash);
std::vector<StageRecord> history_from_json(const std::string& text, std::string* cfg_hash = nullptr);

}  // namespace cids::pipeline
