// cids: continuous intrusion-detection pipeline CLI.
//
// Every command reads a JSON run config (--config) with optional dotted-key
// overrides (--set a.b=c), writes its artifacts plus a resolved_config.json
// snapshot under --out, and prints one machine-readable JSON summary line
// to stdout. Logs go to stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cids/checkpoint.hpp"
#include "cids/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir = "runs/default";
    std::optional<uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run config JSON")->required();
    cmd->add_option("--set", args.overrides, "override config keys, e.g. --set train.epochs=2");
    cmd->add_option("--out", args.out_dir, "artifact directory");
    cmd->add_option("--seed", args.seed, "override the root seed");
    cmd->add_flag("--quiet", args.quiet, "suppress progress logs");
}

struct Paths {
    fs::path out;
    fs::path dataset_csv() const { return out / "dataset.csv"; }
    fs::path manifest() const { return out / "dataset.manifest.json"; }
    fs::path textenc_dir() const { return out / "textenc"; }
    fs::path ppfle() const { return textenc_dir() / "ppfle.json"; }
    fs::path detector() const { return out / "detector.ckpt"; }
    fs::path identifier() const { return out / "identifier.ckpt"; }
    fs::path replay() const { return out / "replay.json"; }
    fs::path eval_set() const { return out / "eval_set.json"; }
    fs::path history() const { return out / "history.json"; }
    fs::path report_dir() const { return out / "report"; }
    fs::path resolved_config() const { return out / "resolved_config.json"; }
};

struct Resolved {
    cids::pipeline::RunConfig cfg;
    ordered_json tree;
    std::string hash;
    Paths paths;
    std::ostream* log = nullptr;
};

Resolved resolve(const CommonArgs& args) {
    std::ifstream in(args.config_path);
    if (!in) throw cids::ConfigError("cannot open config '" + args.config_path + "'");
    ordered_json tree;
    try {
        in >> tree;
    } catch (const nlohmann::json::parse_error& e) {
        throw cids::ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    for (const auto& o : args.overrides) cids::pipeline::apply_override(tree, o);
    if (args.seed) tree["seed"] = *args.seed;

    Resolved r;
    r.cfg = cids::pipeline::config_from_json(tree);
    r.tree = cids::pipeline::to_json(r.cfg);
    r.hash = cids::pipeline::config_hash(r.cfg);
    r.paths.out = args.out_dir;
    r.log = args.quiet ? nullptr : &std::cerr;

    fs::create_directories(r.paths.out);
    std::ofstream snap(r.paths.resolved_config());
    snap << r.tree.dump(2) << "\n";
    return r;
}

std::string read_file(const fs::path& p, const std::string& what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw cids::MissingArtifactError(what + " not found at '" + p.string() + "' (run the earlier stage first)");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    if (auto parent = p.parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw cids::Error(cids::errc::runtime, "cannot write '" + p.string() + "'");
    out << text;
}

void check_hash(const std::string& found, const std::string& expected, const std::string& what) {
    if (!found.empty() && found != expected)
        throw cids::Error(cids::errc::data,
                          what + " was produced by a different configuration (stale artifact?)");
}

cids::flowdata::Dataset load_dataset_artifact(const Resolved& r) {
    auto manifest = nlohmann::json::parse(read_file(r.paths.manifest(), "dataset manifest"));
    check_hash(manifest.value("provenance", ""), "config:" + r.hash, "dataset artifact");
    cids::flowdata::IngestOptions opts;
    opts.label_column = "Label";
    if (!fs::exists(r.paths.dataset_csv()))
        throw cids::MissingArtifactError("dataset.csv not found; run `cids synth` or `cids ingest` first");
    return cids::flowdata::ingest_csv(r.paths.dataset_csv().string(), opts);
}

void save_textenc(const Resolved& r, const cids::pipeline::State& st) {
    cids::textenc::save_tokenizer(st.tok, r.paths.textenc_dir().string());
    write_file(r.paths.ppfle(), cids::textenc::ppfle_config_json(st.ppfle, st.stats));
}

void load_textenc(const Resolved& r, cids::pipeline::State& st) {
    auto [cfg, stats] = cids::textenc::ppfle_config_from_json(read_file(r.paths.ppfle(), "ppfle config"));
    st.ppfle = std::move(cfg);
    st.stats = std::move(stats);
    st.tok = cids::textenc::load_tokenizer(r.paths.textenc_dir().string());
}

void save_replay(const Resolved& r, const cids::identification::ReplayStore& replay) {
    ordered_json j;
    j["config_hash"] = r.hash;
    j["store"] = nlohmann::json::parse(replay.to_json());
    write_file(r.paths.replay(), j.dump() + "\n");
}

cids::identification::ReplayStore load_replay(const Resolved& r) {
    auto j = nlohmann::json::parse(read_file(r.paths.replay(), "replay store"));
    check_hash(j.value("config_hash", ""), r.hash, "replay store");
    return cids::identification::ReplayStore::from_json(j.at("store").dump());
}

void save_eval_set(const Resolved& r, const cids::pipeline::State& st) {
    ordered_json j;
    j["config_hash"] = r.hash;
    ordered_json flows = ordered_json::array();
    for (size_t i = 0; i < st.eval_flows.size(); ++i) {
        flows.push_back({{"ids", st.eval_flows[i].token_ids},
                         {"mask", st.eval_flows[i].attention_mask},
                         {"label", st.eval_labels[i]}});
    }
    j["flows"] = flows;
    write_file(r.paths.eval_set(), j.dump() + "\n");
}

void load_eval_set(const Resolved& r, cids::pipeline::State& st) {
    auto j = nlohmann::json::parse(read_file(r.paths.eval_set(), "evaluation set"));
    check_hash(j.value("config_hash", ""), r.hash, "evaluation set");
    for (const auto& f : j.at("flows")) {
        cids::textenc::EncodedFlow flow;
        flow.token_ids = f.at("ids").get<std::vector<int32_t>>();
        flow.attention_mask = f.at("mask").get<std::vector<uint8_t>>();
        st.eval_flows.push_back(std::move(flow));
        st.eval_labels.push_back(f.at("label").get<std::string>());
    }
}

void save_detector(const Resolved& r, const cids::pipeline::State& st) {
    cids::checkpoint::Snapshot snap;
    snap.model = st.detector.model;
    snap.head = st.detector.head;
    snap.config_hash = r.hash;
    cids::checkpoint::save(snap, r.paths.detector().string());
}

void load_detector(const Resolved& r, cids::pipeline::State& st) {
    auto snap = cids::checkpoint::load(r.paths.detector().string(), r.cfg.enc, r.hash);
    st.detector.model = std::move(snap.model);
    st.detector.head = std::move(snap.head);
    st.detector.malicious_threshold = r.cfg.detection.malicious_threshold;
}

void save_identifier(const Resolved& r, const cids::pipeline::State& st) {
    cids::checkpoint::Snapshot snap;
    snap.model = st.identifier.model;
    snap.head = st.identifier.head;
    snap.label_provenance = st.identifier.registry.provenance;
    snap.config_hash = r.hash;
    cids::checkpoint::save(snap, r.paths.identifier().string());
}

void load_identifier(const Resolved& r, cids::pipeline::State& st) {
    auto snap = cids::checkpoint::load(r.paths.identifier().string(), r.cfg.enc, r.hash);
    st.identifier.model = std::move(snap.model);
    st.identifier.head = std::move(snap.head);
    st.identifier.registry.labels = st.identifier.head.labels;
    st.identifier.registry.provenance = std::move(snap.label_provenance);
    st.identifier.unknown_softmax_threshold = r.cfg.identification.unknown_softmax_threshold;
}

void save_history(const Resolved& r, const cids::pipeline::State& st) {
    write_file(r.paths.history(), cids::pipeline::history_json(st.history, r.hash));
}

std::vector<cids::pipeline::StageRecord> load_history(const Resolved& r) {
    std::string hash;
    auto history = cids::pipeline::history_from_json(read_file(r.paths.history(), "run history"), &hash);
    check_hash(hash, r.hash, "run history");
    return history;
}

// Rebuilds the baseline split and text encoding exactly as the earlier
// stages derived them (all seeded), so later commands agree bit-for-bit.
cids::pipeline::State restore_base_state(const Resolved& r, const cids::flowdata::Dataset& full) {
    cids::pipeline::State st;
    st.cfg = r.cfg;
    st.replay = cids::identification::ReplayStore(r.cfg.identification.replay_per_class,
                                                  cids::derive_seed(r.cfg.seed, "replay"));
    auto baseline = cids::pipeline::baseline_slice(r.cfg, full);
    std::tie(st.baseline_train, st.baseline_test) =
        cids::flowdata::split(baseline, r.cfg.dataset.train_frac, cids::derive_seed(r.cfg.seed, "split"));
    load_textenc(r, st);
    return st;
}

void emit(const ordered_json& summary) { std::cout << summary.dump() << "\n"; }

int cmd_dataset(const CommonArgs& args, const std::string& name, const std::string& kind) {
    Resolved r = resolve(args);
    if (r.cfg.dataset.kind != kind)
        throw cids::ConfigError("`" + name + "` requires dataset.kind == \"" + kind + "\"");
    auto ds = cids::pipeline::acquire_dataset(r.cfg, r.log);
    cids::flowdata::write_csv(ds, r.paths.dataset_csv().string());
    write_file(r.paths.manifest(), cids::flowdata::manifest_json(ds, r.cfg.seed, "config:" + r.hash));

    ordered_json counts;
    for (const auto& [label, n] : ds.class_counts) counts[label] = n;
    emit({{"command", name}, {"ok", true}, {"records", ds.size()}, {"class_counts", counts},
          {"out", r.paths.out.string()}});
    return 0;
}

int cmd_train_detector(const CommonArgs& args) {
    Resolved r = resolve(args);
    auto full = load_dataset_artifact(r);
    auto st = cids::pipeline::run_detector_stage(r.cfg, full, r.log);
    save_textenc(r, st);
    save_detector(r, st);

    const auto& m = *st.detector_metrics;
    emit({{"command", "train-detector"}, {"ok", true},
          {"detector_recall_malicious", cids::pipeline::recall(m.confusion, 1).value},
          {"detector_accuracy", m.accuracy}, {"checkpoint", r.paths.detector().string()}});
    return 0;
}

int cmd_train_identifier(const CommonArgs& args) {
    Resolved r = resolve(args);
    auto full = load_dataset_artifact(r);
    auto st = restore_base_state(r, full);
    load_detector(r, st);
    // the baseline record needs the detector evaluation; recompute it
    {
        auto enc_test = cids::pipeline::encode_dataset(st.baseline_test, st);
        std::vector<uint8_t> y(enc_test.size());
        for (size_t i = 0; i < enc_test.size(); ++i)
            y[i] = st.baseline_test.records[i].label != r.cfg.dataset.benign_label;
        auto predicted = cids::detection::predict_malicious(st.detector, enc_test);
        std::vector<int> truth(y.size()), pred(predicted.size());
        for (size_t i = 0; i < y.size(); ++i) truth[i] = y[i];
        for (size_t i = 0; i < predicted.size(); ++i) pred[i] = predicted[i];
        st.detector_metrics = cids::pipeline::evaluate(
            "detector", cids::pipeline::ConfusionMatrix::from_pairs(
                            {cids::detection::kBenign, cids::detection::kMalicious}, truth, pred));
    }
    cids::pipeline::run_identifier_stage(st, r.log);
    save_identifier(r, st);
    save_replay(r, st.replay);
    save_eval_set(r, st);
    save_history(r, st);

    const auto& rec = st.history.back();
    emit({{"command", "train-identifier"}, {"ok", true}, {"stage", rec.stage},
          {"accuracy", rec.metrics.accuracy}, {"macro_recall", rec.metrics.macro_recall},
          {"classes", st.identifier.registry.labels}});
    return 0;
}

int cmd_run_chunk(const CommonArgs& args, int chunk_id) {
    Resolved r = resolve(args);
    auto full = load_dataset_artifact(r);
    auto st = restore_base_state(r, full);
    load_detector(r, st);
    load_identifier(r, st);
    st.replay = load_replay(r);
    load_eval_set(r, st);
    st.history = load_history(r);
    st.chunks_done = static_cast<int>(st.history.size()) - 1;
    if (chunk_id != st.chunks_done + 1)
        throw cids::ConfigError("chunks must run in order; expected chunk " +
                                std::to_string(st.chunks_done + 1));

    const auto& rec =
        cids::pipeline::run_chunk(st, cids::pipeline::chunk_slice(r.cfg, full, chunk_id), chunk_id, r.log);
    save_identifier(r, st);
    save_replay(r, st.replay);
    save_eval_set(r, st);
    save_history(r, st);

    ordered_json sel = nullptr;
    if (rec.selection) sel = nlohmann::json::parse(cids::clustering::selection_json(*rec.selection));
    emit({{"command", "run-chunk"}, {"ok", true}, {"stage", rec.stage}, {"pool_size", rec.pool_size},
          {"selection", sel}, {"new_labels", rec.new_labels}, {"accuracy", rec.metrics.accuracy},
          {"macro_recall", rec.metrics.macro_recall}, {"warnings", rec.warnings}});
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& dataset_csv) {
    Resolved r = resolve(args);
    cids::pipeline::State st;
    st.cfg = r.cfg;
    load_textenc(r, st);
    load_identifier(r, st);

    std::vector<cids::textenc::EncodedFlow> flows;
    std::vector<std::string> labels;
    if (dataset_csv.empty()) {
        load_eval_set(r, st);
        flows = st.eval_flows;
        labels = st.eval_labels;
    } else {
        cids::flowdata::IngestOptions opts;
        opts.label_column = r.cfg.dataset.label_column;
        auto ds = cids::flowdata::ingest_csv(dataset_csv, opts);
        flows = cids::pipeline::encode_dataset(ds, st);
        for (const auto& rec : ds.records) {
            // registry classes keep their name, anything else is 0_other
            const auto& reg = st.identifier.registry.labels;
            labels.push_back(std::find(reg.begin(), reg.end(), rec.label) != reg.end()
                                 ? rec.label
                                 : cids::identification::kOther);
        }
    }
    auto outcome = cids::pipeline::evaluate_identifier(st.identifier, flows, labels, "eval");
    emit(nlohmann::json::parse(cids::pipeline::metrics_json(outcome.report)));
    return 0;
}

int cmd_export(const CommonArgs& args) {
    Resolved r = resolve(args);
    auto history = load_history(r);
    cids::pipeline::export_report(history, r.paths.report_dir().string());
    emit({{"command", "export"}, {"ok", true}, {"stages", history.size()},
          {"report_dir", r.paths.report_dir().string()}});
    return 0;
}

int cmd_run_all(const CommonArgs& args) {
    Resolved r = resolve(args);
    auto full = cids::pipeline::acquire_dataset(r.cfg, r.log);
    cids::flowdata::write_csv(full, r.paths.dataset_csv().string());
    write_file(r.paths.manifest(), cids::flowdata::manifest_json(full, r.cfg.seed, "config:" + r.hash));

    auto st = cids::pipeline::run_detector_stage(r.cfg, full, r.log);
    cids::pipeline::run_identifier_stage(st, r.log);
    for (size_t c = 0; c < r.cfg.roles.chunks.size(); ++c) {
        const int chunk_id = static_cast<int>(c) + 1;
        cids::pipeline::run_chunk(st, cids::pipeline::chunk_slice(r.cfg, full, chunk_id), chunk_id, r.log);
    }
    save_textenc(r, st);
    save_detector(r, st);
    save_identifier(r, st);
    save_replay(r, st.replay);
    save_eval_set(r, st);
    save_history(r, st);
    cids::pipeline::export_report(st.history, r.paths.report_dir().string());

    const auto& last = st.history.back();
    emit({{"command", "run-all"}, {"ok", true}, {"stages", st.history.size()},
          {"final_stage", last.stage}, {"accuracy", last.metrics.accuracy},
          {"macro_recall", last.metrics.macro_recall},
          {"report_dir", r.paths.report_dir().string()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuous intrusion-detection pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    int chunk_id = 1;
    std::string eval_dataset;

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset artifact");
    add_common(synth, args);
    auto* ingest = app.add_subcommand("ingest", "ingest a flow CSV into the dataset artifact");
    add_common(ingest, args);
    auto* train_det = app.add_subcommand("train-detector", "train the binary detector");
    add_common(train_det, args);
    auto* train_id = app.add_subcommand("train-identifier", "train the attack identifier (baseline)");
    add_common(train_id, args);
    auto* run_chunk = app.add_subcommand("run-chunk", "process one chunk of novel traffic");
    add_common(run_chunk, args);
    run_chunk->add_option("--chunk", chunk_id, "1-based chunk index")->required();
    auto* eval = app.add_subcommand("eval", "evaluate the identifier checkpoint");
    add_common(eval, args);
    eval->add_option("--dataset", eval_dataset, "flow CSV to evaluate (default: stored eval set)");
    auto* run_all = app.add_subcommand("run-all", "full protocol: baseline, chunks, report");
    add_common(run_all, args);
    auto* exp = app.add_subcommand("export", "write the report bundle from the run history");
    add_common(exp, args);

    CLI11_PARSE(app, argc, argv);

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (synth->parsed()) return cmd_dataset(args, "synth", "synthetic");
        if (ingest->parsed()) return cmd_dataset(args, "ingest", "csv");
        if (train_det->parsed()) return cmd_train_detector(args);
        if (train_id->parsed()) return cmd_train_identifier(args);
        if (run_chunk->parsed()) return cmd_run_chunk(args, chunk_id);
        if (eval->parsed()) return cmd_eval(args, eval_dataset);
        if (run_all->parsed()) return cmd_run_all(args);
        if (exp->parsed()) return cmd_export(args);
    } catch (const cids::Error& e) {
        emit({{"command", command}, {"ok", false}, {"error", e.what()},
              {"category", static_cast<int>(e.code())}});
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        emit({{"command", command}, {"ok", false}, {"error", e.what()}, {"category", 1}});
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
