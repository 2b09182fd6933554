#include "cids/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cids::pipeline {

namespace {

void say(std::ostream* log, const std::string& msg) {
    if (log) (*log) << msg << "\n";
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string t;
    while (ss >> t) out.push_back(t);
    return out;
}

encoder::TrainConfig base_train_config(const RunConfig& cfg, uint64_t seed) {
    encoder::TrainConfig t;
    t.learning_rate = cfg.train.learning_rate;
    t.batch_size = cfg.train.batch_size;
    t.epochs = cfg.train.epochs;
    t.clip_norm = cfg.train.clip_norm;
    t.beta1 = cfg.train.beta1;
    t.beta2 = cfg.train.beta2;
    t.seed = seed;
    return t;
}

std::map<std::string, double> inverse_frequency_weights(const std::vector<std::string>& labels) {
    std::map<std::string, double> counts;
    for (const auto& l : labels) counts[l] += 1.0;
    std::map<std::string, double> w;
    const double total = static_cast<double>(labels.size());
    const double c = static_cast<double>(counts.size());
    for (const auto& [label, n] : counts) w[label] = total / (c * n);
    return w;
}

nlohmann::ordered_json report_to_json(const MetricReport& rep) {
    return nlohmann::ordered_json::parse(metrics_json(rep));
}

MetricReport report_from_json(const nlohmann::json& j) {
    ConfusionMatrix cm;
    cm.labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
    cm.counts = j.at("confusion").at("counts").get<std::vector<std::vector<long long>>>();
    MetricReport rep = evaluate(j.at("stage").get<std::string>(), cm);
    return rep;
}

}  // namespace

flowdata::Dataset acquire_dataset(const RunConfig& cfg, std::ostream* log) {
    flowdata::Dataset full;
    if (cfg.dataset.kind == "csv") {
        flowdata::IngestOptions opts;
        opts.label_column = cfg.dataset.label_column;
        full = flowdata::ingest_csv(cfg.dataset.csv_path, opts);
        say(log, "ingested " + std::to_string(full.size()) + " flows from " + cfg.dataset.csv_path);
    } else {
        for (const auto& c : cfg.dataset.classes) {
            flowdata::SyntheticSpec spec;
            spec.classes.push_back({c.label, c.means, c.stddevs});
            spec.n_per_class = c.count.value_or(cfg.dataset.n_per_class);
            spec.seed = cfg.seed;
            auto part = flowdata::generate_synthetic(spec);
            full = full.empty() ? std::move(part) : flowdata::merge(full, part);
        }
        say(log, "generated " + std::to_string(full.size()) + " synthetic flows");
    }
    if (cfg.dataset.subsample_enabled) {
        flowdata::SubsampleOptions opts;
        opts.benign_label = cfg.dataset.benign_label;
        opts.priority = cfg.dataset.priority;
        full = flowdata::subsample(full, cfg.dataset.benign_frac, cfg.dataset.total_frac,
                                   derive_seed(cfg.seed, "subsample"), opts);
        say(log, "subsampled to " + std::to_string(full.size()) + " flows");
    }
    return full;
}

flowdata::Dataset baseline_slice(const RunConfig& cfg, const flowdata::Dataset& full) {
    std::vector<std::string> keep;
    keep.push_back(cfg.dataset.benign_label);
    keep.insert(keep.end(), cfg.roles.known_families.begin(), cfg.roles.known_families.end());
    keep.insert(keep.end(), cfg.roles.boundary_families.begin(), cfg.roles.boundary_families.end());
    return flowdata::filter_labels(full, keep);
}

flowdata::Dataset chunk_slice(const RunConfig& cfg, const flowdata::Dataset& full, int chunk_id) {
    if (chunk_id < 1 || chunk_id > static_cast<int>(cfg.roles.chunks.size()))
        throw ConfigError("chunk " + std::to_string(chunk_id) + " is not configured");
    return flowdata::filter_labels(full, cfg.roles.chunks[static_cast<size_t>(chunk_id - 1)]);
}

std::string identification_truth(const RunConfig& cfg, const std::string& raw_label) {
    const auto& known = cfg.roles.known_families;
    if (std::find(known.begin(), known.end(), raw_label) != known.end()) return raw_label;
    return identification::kOther;
}

std::vector<textenc::EncodedFlow> encode_dataset(const flowdata::Dataset& ds, const State& st) {
    std::vector<textenc::EncodedFlow> out;
    out.reserve(ds.size());
    for (const auto& rec : ds.records) {
        const std::string text = textenc::ppfle_encode(rec, ds.schema, st.ppfle, st.stats);
        out.push_back(textenc::encode_flow(text, st.tok, st.cfg.textenc.max_len));
    }
    return out;
}

EvalOutcome evaluate_identifier(const identification::Identifier& ident,
                                const std::vector<textenc::EncodedFlow>& flows,
                                const std::vector<std::string>& labels, const std::string& stage) {
    if (flows.size() != labels.size()) throw ConfigError("eval flows/labels size mismatch");
    auto preds = encoder::predict(ident.model, ident.head, flows);
    std::vector<int> predicted = preds.argmax;
    if (ident.unknown_softmax_threshold) {
        for (size_t i = 0; i < flows.size(); ++i)
            if (preds.probs.row(static_cast<Eigen::Index>(i)).maxCoeff() < *ident.unknown_softmax_threshold)
                predicted[i] = 0;
    }
    std::vector<int> truth(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) truth[i] = ident.registry.index_of(labels[i]);

    EvalOutcome out;
    out.report = evaluate(stage, ConfusionMatrix::from_pairs(ident.registry.labels, truth, predicted));
    out.embeddings = preds.embeddings;
    out.predicted.reserve(predicted.size());
    for (int p : predicted) out.predicted.push_back(ident.registry.labels[static_cast<size_t>(p)]);
    return out;
}

State run_detector_stage(const RunConfig& cfg, const flowdata::Dataset& full, std::ostream* log) {
    cfg.validate();
    State st;
    st.cfg = cfg;
    st.replay = identification::ReplayStore(cfg.identification.replay_per_class,
                                            derive_seed(cfg.seed, "replay"));

    auto baseline = baseline_slice(cfg, full);
    if (baseline.empty()) throw Error(errc::data, "baseline slice is empty; check roles configuration");
    std::tie(st.baseline_train, st.baseline_test) =
        flowdata::split(baseline, cfg.dataset.train_frac, derive_seed(cfg.seed, "split"));
    say(log, "baseline split: " + std::to_string(st.baseline_train.size()) + " train / " +
                 std::to_string(st.baseline_test.size()) + " test");

    // text encoding layer, frozen on the train split
    st.ppfle.bins_per_feature = cfg.textenc.bins_per_feature;
    st.ppfle.token_width = cfg.textenc.token_width;
    st.ppfle.salt = from_hex(cfg.textenc.salt_hex);
    st.ppfle.hash_token_features.insert(cfg.textenc.hash_token_features.begin(),
                                        cfg.textenc.hash_token_features.end());
    st.stats = textenc::compute_stats(st.baseline_train);
    textenc::validate_ppfle(st.ppfle, st.baseline_train.schema.size());

    auto corpus = textenc::ppfle_encode_all(st.baseline_train, st.ppfle, st.stats);

    // desk-scale hash collision watch over hashed tokens
    {
        textenc::HashCollisionAudit audit;
        const size_t cap = std::min<size_t>(corpus.size(), 10000);
        for (size_t i = 0; i < cap; ++i) {
            const auto tokens = split_tokens(corpus[i]);
            const auto& rec = st.baseline_train.records[i];
            for (size_t f = 0; f < tokens.size(); ++f) {
                const bool hashed = !flowdata::is_numeric(rec.values[f]) ||
                                    st.ppfle.hash_token_features.count(st.baseline_train.schema[f]) > 0;
                if (!hashed) continue;
                const std::string value = flowdata::is_numeric(rec.values[f])
                                              ? format_double(flowdata::num(rec.values[f]))
                                              : flowdata::cat(rec.values[f]);
                const std::string msg = audit.record(tokens[f], value);
                if (!msg.empty()) say(log, "warning: " + msg);
            }
        }
    }

    st.tok = textenc::train_bpe(corpus, cfg.textenc.vocab_size);
    say(log, "tokenizer trained: " + std::to_string(st.tok.vocab_size()) + " entries, " +
                 std::to_string(st.tok.merges.size()) + " merges");

    auto enc_train = encode_dataset(st.baseline_train, st);
    auto enc_test = encode_dataset(st.baseline_test, st);

    // binary detection stage
    std::vector<uint8_t> y_train(enc_train.size()), y_test(enc_test.size());
    for (size_t i = 0; i < enc_train.size(); ++i)
        y_train[i] = st.baseline_train.records[i].label != cfg.dataset.benign_label;
    for (size_t i = 0; i < enc_test.size(); ++i)
        y_test[i] = st.baseline_test.records[i].label != cfg.dataset.benign_label;

    auto det_cfg = base_train_config(cfg, derive_seed(cfg.seed, "detector-train"));
    auto [detector, det_report] =
        detection::train_detector(enc_train, y_train, enc_test, y_test, cfg.enc, det_cfg);
    detector.malicious_threshold = cfg.detection.malicious_threshold;
    st.detector = std::move(detector);
    st.detector_metrics = det_report.metrics;
    say(log, "detector recall (malicious): " +
                 format_double(pipeline::recall(det_report.metrics.confusion, 1).value));
    return st;
}

void run_identifier_stage(State& st, std::ostream* log) {
    const RunConfig& cfg = st.cfg;
    auto enc_train = encode_dataset(st.baseline_train, st);
    auto enc_test = encode_dataset(st.baseline_test, st);

    // identification stage trains on what the detector forwards
    auto route = detection::route(st.detector, enc_train, cfg.detection.forward_frac,
                                  derive_seed(cfg.seed, "route-baseline"));
    auto fwd = route.forwarded();
    std::vector<textenc::EncodedFlow> ident_flows;
    std::vector<std::string> ident_labels;
    ident_flows.reserve(fwd.size());
    for (size_t i : fwd) {
        ident_flows.push_back(enc_train[i]);
        ident_labels.push_back(identification_truth(cfg, st.baseline_train.records[i].label));
    }
    say(log, "identifier training flows: " + std::to_string(ident_flows.size()));

    auto reg = identification::LabelRegistry::initial(cfg.roles.known_families);
    auto id_cfg = base_train_config(cfg, derive_seed(cfg.seed, "identifier-train"));
    if (cfg.train.class_weighting) id_cfg.class_weights = inverse_frequency_weights(ident_labels);
    st.identifier = identification::train_identifier(
        ident_flows, ident_labels, reg, cfg.enc, id_cfg,
        cfg.detection.shared_encoder ? &st.detector.model : nullptr);
    st.identifier.unknown_softmax_threshold = cfg.identification.unknown_softmax_threshold;

    for (size_t i = 0; i < ident_flows.size(); ++i) st.replay.add(ident_labels[i], ident_flows[i]);

    // baseline evaluation set: held-out split with identification truth
    st.eval_flows = enc_test;
    st.eval_labels.reserve(enc_test.size());
    for (const auto& rec : st.baseline_test.records)
        st.eval_labels.push_back(identification_truth(cfg, rec.label));

    auto outcome = evaluate_identifier(st.identifier, st.eval_flows, st.eval_labels, "baseline");
    say(log, "baseline macro recall: " + format_double(outcome.report.macro_recall));

    StageRecord rec;
    rec.stage = "baseline";
    rec.metrics = outcome.report;
    rec.detector_metrics = st.detector_metrics;
    rec.embeddings = std::move(outcome.embeddings);
    rec.emb_true = st.eval_labels;
    rec.emb_pred = std::move(outcome.predicted);
    st.history.push_back(std::move(rec));
}

State run_baseline(const RunConfig& cfg, std::ostream* log) {
    auto full = acquire_dataset(cfg, log);
    State st = run_detector_stage(cfg, full, log);
    run_identifier_stage(st, log);
    return st;
}

const StageRecord& run_chunk(State& st, const flowdata::Dataset& chunk_ds, int chunk_id,
                             std::ostream* log) {
    if (st.history.empty()) throw MissingArtifactError("run_chunk requires a trained baseline");
    const RunConfig& cfg = st.cfg;
    const std::string stage = st.history.back().stage + "+chunk" + std::to_string(chunk_id);

    StageRecord rec;
    rec.stage = stage;

    auto enc_chunk = encode_dataset(chunk_ds, st);
    auto route = detection::route(st.detector, enc_chunk, cfg.detection.forward_frac,
                                  derive_seed(cfg.seed, "route-chunk", static_cast<uint64_t>(chunk_id)));
    auto fwd = route.forwarded();
    std::vector<textenc::EncodedFlow> routed;
    routed.reserve(fwd.size());
    for (size_t i : fwd) routed.push_back(enc_chunk[i]);
    say(log, "chunk " + std::to_string(chunk_id) + ": " + std::to_string(routed.size()) +
                 " flows forwarded by the detector");

    auto pool = identification::collect_unknowns(st.identifier, routed);
    rec.pool_size = pool.indices.size();
    say(log, "unknown pool size: " + std::to_string(pool.indices.size()));

    auto pre = evaluate_identifier(st.identifier, st.eval_flows, st.eval_labels, stage + " (pre)");
    rec.pre_metrics = pre.report;

    if (pool.indices.size() < cfg.clustering.min_pool) {
        say(log, "pool below min_pool=" + std::to_string(cfg.clustering.min_pool) +
                     "; no expansion this chunk");
        rec.warnings.push_back("unknown pool below min_pool; clustering skipped");
        rec.metrics = pre.report;
        rec.metrics.stage = stage;
        rec.embeddings = std::move(pre.embeddings);
        rec.emb_true = st.eval_labels;
        rec.emb_pred = std::move(pre.predicted);
        st.chunks_done = chunk_id;
        st.history.push_back(std::move(rec));
        return st.history.back();
    }

    // cluster the pool and name the discovered classes
    std::vector<int> k_range;
    const int k_hi = std::min<int>(cfg.clustering.k_max, static_cast<int>(pool.indices.size()) - 1);
    for (int k = cfg.clustering.k_min; k <= k_hi; ++k) k_range.push_back(k);
    clustering::SelectKOptions sopts;
    sopts.subsample_cap = cfg.clustering.subsample_cap;
    sopts.gmm.max_iter = cfg.clustering.max_iter;
    sopts.gmm.tol = cfg.clustering.tol;
    sopts.gmm.variance_floor = cfg.clustering.variance_floor;
    clustering::GmmModel gmm;
    auto selection = clustering::select_k(pool.embeddings, k_range,
                                          derive_seed(cfg.seed, "select-k", static_cast<uint64_t>(chunk_id)),
                                          sopts, &gmm);
    say(log, "chosen_k = " + std::to_string(selection.chosen_k));
    rec.selection = selection;

    auto assignments = clustering::assign_all(gmm, pool.embeddings);
    std::vector<std::string> new_labels;
    for (int k = 0; k < selection.chosen_k; ++k)
        new_labels.push_back("X" + std::to_string(chunk_id) + "_" + std::to_string(k + 1));
    rec.new_labels = new_labels;

    // 80/20 pseudo-labeled split: retrain on the big side, evaluate on the rest
    std::vector<size_t> train_sel, holdout_sel;
    {
        std::map<int, std::vector<size_t>> by_cluster;
        for (size_t p = 0; p < pool.indices.size(); ++p) by_cluster[assignments[p]].push_back(p);
        auto rng = make_rng(derive_seed(cfg.seed, "pool-split", static_cast<uint64_t>(chunk_id)), "shuffle");
        for (auto& [cluster, members] : by_cluster) {
            std::shuffle(members.begin(), members.end(), rng);
            size_t n_train = static_cast<size_t>(round_half_up(0.8 * static_cast<double>(members.size())));
            n_train = std::clamp<size_t>(n_train, 1, std::max<size_t>(1, members.size() - 1));
            if (members.size() == 1) n_train = 1;
            for (size_t i = 0; i < members.size(); ++i)
                (i < n_train ? train_sel : holdout_sel).push_back(members[i]);
        }
        std::sort(train_sel.begin(), train_sel.end());
        std::sort(holdout_sel.begin(), holdout_sel.end());
    }

    const size_t n_old = st.identifier.registry.labels.size();
    identification::expand_head(st.identifier, new_labels, chunk_id);

    for (size_t p : holdout_sel) {
        st.eval_flows.push_back(routed[pool.indices[p]]);
        st.eval_labels.push_back(new_labels[static_cast<size_t>(assignments[p])]);
    }

    std::vector<textenc::EncodedFlow> new_flows;
    std::vector<std::string> new_flow_labels;
    for (size_t p : train_sel) {
        new_flows.push_back(routed[pool.indices[p]]);
        new_flow_labels.push_back(new_labels[static_cast<size_t>(assignments[p])]);
    }

    identification::RetrainOptions ropts;
    ropts.train = base_train_config(cfg, derive_seed(cfg.seed, "retrain", static_cast<uint64_t>(chunk_id)));
    ropts.train.epochs = cfg.identification.retrain_epochs;
    if (cfg.train.class_weighting) ropts.train.class_weights = inverse_frequency_weights(new_flow_labels);
    ropts.encoder_lr_scale = cfg.identification.encoder_lr_scale;
    ropts.recall_drop_budget = cfg.identification.recall_drop_budget;

    // macro recall over the old classes, measured before retraining
    const double pre_old_recall = pre.report.macro_recall;
    auto result = identification::retrain_incremental(st.identifier, new_flows, new_flow_labels, st.replay,
                                                      ropts, st.eval_flows, st.eval_labels, pre_old_recall,
                                                      n_old);
    for (const auto& w : result.warnings) say(log, "warning: " + w);
    rec.warnings = result.warnings;

    for (size_t i = 0; i < new_flows.size(); ++i) st.replay.add(new_flow_labels[i], new_flows[i]);

    auto post = evaluate_identifier(st.identifier, st.eval_flows, st.eval_labels, stage);
    say(log, stage + " macro recall: " + format_double(post.report.macro_recall));
    rec.metrics = post.report;
    rec.embeddings = std::move(post.embeddings);
    rec.emb_true = st.eval_labels;
    rec.emb_pred = std::move(post.predicted);

    st.chunks_done = chunk_id;
    st.history.push_back(std::move(rec));
    return st.history.back();
}

State run_all(const RunConfig& cfg, std::ostream* log) {
    State st = run_baseline(cfg, log);
    auto full = acquire_dataset(cfg);
    for (size_t c = 0; c < cfg.roles.chunks.size(); ++c) {
        const int chunk_id = static_cast<int>(c) + 1;
        run_chunk(st, chunk_slice(cfg, full, chunk_id), chunk_id, log);
    }
    return st;
}

void export_report(const std::vector<StageRecord>& history, const std::string& dir) {
    if (history.empty()) throw Error(errc::data, "cannot export an empty run history");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(errc::runtime, "cannot create report directory '" + dir + "'");

    auto write = [](const fs::path& p, const std::string& text) {
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error(errc::runtime, "cannot write '" + p.string() + "'");
        out << text;
    };

    std::string table = "stage,accuracy,macro_precision,macro_recall,macro_f1,micro_recall\n";
    for (const auto& rec : history) {
        const fs::path stage_dir = fs::path(dir) / ("stage_" + rec.stage);
        fs::create_directories(stage_dir, ec);
        if (ec) throw Error(errc::runtime, "cannot create '" + stage_dir.string() + "'");

        write(stage_dir / "metrics.json", metrics_json(rec.metrics));
        write(stage_dir / "confusion.csv", confusion_csv(rec.metrics.confusion));
        if (rec.selection) {
            write(stage_dir / "silhouette.json", clustering::selection_json(*rec.selection));
        } else {
            clustering::ClusterSelection empty;
            write(stage_dir / "silhouette.json", clustering::selection_json(empty));
        }
        if (rec.detector_metrics)
            write(stage_dir / "detector_metrics.json", metrics_json(*rec.detector_metrics));

        std::string emb = "row,true_label,predicted_label";
        for (Eigen::Index c = 0; c < rec.embeddings.cols(); ++c) emb += ",e" + std::to_string(c);
        emb += "\n";
        for (Eigen::Index r = 0; r < rec.embeddings.rows(); ++r) {
            emb += std::to_string(r) + "," + rec.emb_true[static_cast<size_t>(r)] + "," +
                   rec.emb_pred[static_cast<size_t>(r)];
            for (Eigen::Index c = 0; c < rec.embeddings.cols(); ++c)
                emb += "," + format_double(rec.embeddings(r, c));
            emb += "\n";
        }
        write(stage_dir / "embeddings.csv", emb);

        table += rec.stage + "," + format_double(rec.metrics.accuracy) + "," +
                 format_double(rec.metrics.macro_precision) + "," +
                 format_double(rec.metrics.macro_recall) + "," + format_double(rec.metrics.macro_f1) +
                 "," + format_double(rec.metrics.accuracy) + "\n";
    }
    write(fs::path(dir) / "metrics_table.csv", table);
}

std::string history_json(const std::vector<StageRecord>& history, const std::string& cfg_hash) {
    nlohmann::ordered_json j;
    j["format_version"] = 1;
    j["config_hash"] = cfg_hash;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& rec : history) {
        nlohmann::ordered_json s;
        s["stage"] = rec.stage;
        s["metrics"] = report_to_json(rec.metrics);
        s["metrics"]["confusion"] = {{"labels", rec.metrics.confusion.labels},
                                     {"counts", rec.metrics.confusion.counts}};
        if (rec.pre_metrics) {
            s["pre_metrics"] = report_to_json(*rec.pre_metrics);
            s["pre_metrics"]["confusion"] = {{"labels", rec.pre_metrics->confusion.labels},
                                             {"counts", rec.pre_metrics->confusion.counts}};
        }
        if (rec.detector_metrics) {
            s["detector_metrics"] = report_to_json(*rec.detector_metrics);
            s["detector_metrics"]["confusion"] = {{"labels", rec.detector_metrics->confusion.labels},
                                                  {"counts", rec.detector_metrics->confusion.counts}};
        }
        if (rec.selection) {
            s["selection"] = nlohmann::ordered_json::parse(clustering::selection_json(*rec.selection));
        }
        s["new_labels"] = rec.new_labels;
        s["pool_size"] = rec.pool_size;
        s["warnings"] = rec.warnings;
        std::vector<std::vector<double>> emb;
        for (Eigen::Index r = 0; r < rec.embeddings.rows(); ++r)
            emb.emplace_back(rec.embeddings.row(r).data(), rec.embeddings.row(r).data() + rec.embeddings.cols());
        s["embeddings"] = emb;
        s["emb_true"] = rec.emb_true;
        s["emb_pred"] = rec.emb_pred;
        stages.push_back(std::move(s));
    }
    j["stages"] = stages;
    return j.dump() + "\n";
}

std::vector<StageRecord> history_from_json(const std::string& text, std::string* cfg_hash) {
    auto j = nlohmann::json::parse(text);
    if (cfg_hash) *cfg_hash = j.value("config_hash", "");
    std::vector<StageRecord> history;
    for (const auto& s : j.at("stages")) {
        StageRecord rec;
        rec.stage = s.at("stage").get<std::string>();
        rec.metrics = report_from_json(s.at("metrics"));
        if (s.contains("pre_metrics")) rec.pre_metrics = report_from_json(s.at("pre_metrics"));
        if (s.contains("detector_metrics"))
            rec.detector_metrics = report_from_json(s.at("detector_metrics"));
        if (s.contains("selection")) {
            clustering::ClusterSelection sel;
            sel.k_candidates = s.at("selection").at("k_candidates").get<std::vector<int>>();
            for (const auto& [k, v] : s.at("selection").at("silhouette_by_k").items())
                sel.silhouette_by_k[std::stoi(k)] = v.get<double>();
            if (!s.at("selection").at("chosen_k").is_null())
                sel.chosen_k = s.at("selection").at("chosen_k").get<int>();
            rec.selection = sel;
        }
        rec.new_labels = s.at("new_labels").get<std::vector<std::string>>();
        rec.pool_size = s.at("pool_size").get<size_t>();
        rec.warnings = s.at("warnings").get<std::vector<std::string>>();
        const auto emb = s.at("embeddings").get<std::vector<std::vector<double>>>();
        if (!emb.empty()) {
            rec.embeddings.resize(static_cast<Eigen::Index>(emb.size()),
                                  static_cast<Eigen::Index>(emb.front().size()));
            for (size_t r = 0; r < emb.size(); ++r)
                for (size_t c = 0; c < emb[r].size(); ++c)
                    rec.embeddings(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = emb[r][c];
        }
        rec.emb_true = s.at("emb_true").get<std::vector<std::string>>();
        rec.emb_pred = s.at("emb_pred").get<std::vector<std::string>>();
        history.push_back(std::move(rec));
    }
    return history;
}

}  // namespace cids::pipeline
