#include "cids/config.hpp"

#include <algorithm>
#include <fstream>

namespace cids::pipeline {

namespace {

// edit distance for the unknown-key suggestion
size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

std::string nearest_key(const nlohmann::ordered_json& obj, const std::string& key) {
    std::string best;
    size_t best_d = std::numeric_limits<size_t>::max();
    for (const auto& [k, v] : obj.items()) {
        const size_t d = levenshtein(k, key);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
    else if (j.contains(key)) out.reset();
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (std::find_if(known.begin(), known.end(), [&k](const char* s) { return k == s; }) == known.end())
            throw ConfigError("unknown config key '" + where + k + "'");
    }
}

}  // namespace

void RunConfig::validate() const {
    enc.validate();
    if (dataset.kind != "synthetic" && dataset.kind != "csv")
        throw ConfigError("dataset.kind must be 'synthetic' or 'csv'");
    if (dataset.kind == "csv" && dataset.csv_path.empty()) throw ConfigError("dataset.csv.path is required");
    if (dataset.kind == "synthetic" && dataset.classes.empty())
        throw ConfigError("dataset.synthetic.classes is empty");
    if (!(dataset.train_frac > 0.0 && dataset.train_frac < 1.0))
        throw ConfigError("dataset.train_frac must be in (0, 1)");
    if (roles.known_families.empty()) throw ConfigError("roles.known_families is empty");
    if (clustering.k_min < 2 || clustering.k_max < clustering.k_min)
        throw ConfigError("clustering k range is invalid");
    if (textenc.vocab_size != enc.vocab_size)
        throw ConfigError("encoder.vocab_size must equal textenc.vocab_size");
    if (textenc.max_len != enc.max_len) throw ConfigError("encoder.max_len must equal textenc.max_len");
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;

    nlohmann::ordered_json ds;
    ds["kind"] = cfg.dataset.kind;
    ds["csv"] = {{"path", cfg.dataset.csv_path}, {"label_column", cfg.dataset.label_column}};
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const auto& c : cfg.dataset.classes) {
        nlohmann::ordered_json cj;
        cj["label"] = c.label;
        cj["means"] = c.means;
        cj["stddevs"] = c.stddevs;
        if (c.count) cj["count"] = *c.count;
        classes.push_back(cj);
    }
    ds["synthetic"] = {{"n_per_class", cfg.dataset.n_per_class}, {"classes", classes}};
    ds["subsample"] = {{"enabled", cfg.dataset.subsample_enabled},
                       {"benign_frac", cfg.dataset.benign_frac},
                       {"total_frac", cfg.dataset.total_frac},
                       {"priority", cfg.dataset.priority}};
    ds["benign_label"] = cfg.dataset.benign_label;
    ds["train_frac"] = cfg.dataset.train_frac;
    j["dataset"] = ds;

    j["roles"] = {{"known_families", cfg.roles.known_families},
                  {"boundary_families", cfg.roles.boundary_families},
                  {"chunks", cfg.roles.chunks}};

    j["textenc"] = {{"bins_per_feature", cfg.textenc.bins_per_feature},
                    {"token_width", cfg.textenc.token_width},
                    {"salt_hex", cfg.textenc.salt_hex},
                    {"hash_token_features", cfg.textenc.hash_token_features},
                    {"vocab_size", cfg.textenc.vocab_size},
                    {"max_len", cfg.textenc.max_len}};

    j["encoder"] = {{"n_layers", cfg.enc.n_layers}, {"d_model", cfg.enc.d_model},
                    {"n_heads", cfg.enc.n_heads},   {"d_ff", cfg.enc.d_ff},
                    {"dropout", cfg.enc.dropout}};

    j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},               {"clip_norm", cfg.train.clip_norm},
                  {"beta1", cfg.train.beta1},                 {"beta2", cfg.train.beta2},
                  {"class_weighting", cfg.train.class_weighting}};

    j["detection"] = {{"forward_frac", cfg.detection.forward_frac},
                      {"malicious_threshold", cfg.detection.malicious_threshold
                                                  ? nlohmann::ordered_json(*cfg.detection.malicious_threshold)
                                                  : nlohmann::ordered_json(nullptr)},
                      {"shared_encoder", cfg.detection.shared_encoder}};

    j["identification"] = {
        {"replay_per_class", cfg.identification.replay_per_class},
        {"encoder_lr_scale", cfg.identification.encoder_lr_scale},
        {"unknown_softmax_threshold",
         cfg.identification.unknown_softmax_threshold
             ? nlohmann::ordered_json(*cfg.identification.unknown_softmax_threshold)
             : nlohmann::ordered_json(nullptr)},
        {"recall_drop_budget", cfg.identification.recall_drop_budget},
        {"retrain_epochs", cfg.identification.retrain_epochs}};

    j["clustering"] = {{"k_min", cfg.clustering.k_min},
                       {"k_max", cfg.clustering.k_max},
                       {"subsample_cap", cfg.clustering.subsample_cap},
                       {"min_pool", cfg.clustering.min_pool},
                       {"max_iter", cfg.clustering.max_iter},
                       {"tol", cfg.clustering.tol},
                       {"variance_floor", cfg.clustering.variance_floor}};
    return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "dataset", "roles", "textenc", "encoder", "train", "detection",
                   "identification", "clustering"},
               "");
    RunConfig cfg;
    get_if_present(j, "seed", cfg.seed);

    if (j.contains("dataset")) {
        const auto& ds = j.at("dataset");
        check_keys(ds, {"kind", "csv", "synthetic", "subsample", "benign_label", "train_frac"}, "dataset.");
        get_if_present(ds, "kind", cfg.dataset.kind);
        if (ds.contains("csv")) {
            check_keys(ds.at("csv"), {"path", "label_column"}, "dataset.csv.");
            get_if_present(ds.at("csv"), "path", cfg.dataset.csv_path);
            get_if_present(ds.at("csv"), "label_column", cfg.dataset.label_column);
        }
        if (ds.contains("synthetic")) {
            check_keys(ds.at("synthetic"), {"n_per_class", "classes"}, "dataset.synthetic.");
            get_if_present(ds.at("synthetic"), "n_per_class", cfg.dataset.n_per_class);
            if (ds.at("synthetic").contains("classes")) {
                for (const auto& cj : ds.at("synthetic").at("classes")) {
                    check_keys(cj, {"label", "means", "stddevs", "count"}, "dataset.synthetic.classes[].");
                    SyntheticClassConfig c;
                    c.label = cj.at("label").get<std::string>();
                    c.means = cj.at("means").get<std::vector<double>>();
                    c.stddevs = cj.at("stddevs").get<std::vector<double>>();
                    if (cj.contains("count")) c.count = cj.at("count").get<size_t>();
                    cfg.dataset.classes.push_back(std::move(c));
                }
            }
        }
        if (ds.contains("subsample")) {
            const auto& ss = ds.at("subsample");
            check_keys(ss, {"enabled", "benign_frac", "total_frac", "priority"}, "dataset.subsample.");
            get_if_present(ss, "enabled", cfg.dataset.subsample_enabled);
            get_if_present(ss, "benign_frac", cfg.dataset.benign_frac);
            get_if_present(ss, "total_frac", cfg.dataset.total_frac);
            get_if_present(ss, "priority", cfg.dataset.priority);
        }
        get_if_present(ds, "benign_label", cfg.dataset.benign_label);
        get_if_present(ds, "train_frac", cfg.dataset.train_frac);
    }

    if (j.contains("roles")) {
        const auto& r = j.at("roles");
        check_keys(r, {"known_families", "boundary_families", "chunks"}, "roles.");
        get_if_present(r, "known_families", cfg.roles.known_families);
        get_if_present(r, "boundary_families", cfg.roles.boundary_families);
        get_if_present(r, "chunks", cfg.roles.chunks);
    }

    if (j.contains("textenc")) {
        const auto& t = j.at("textenc");
        check_keys(t, {"bins_per_feature", "token_width", "salt_hex", "hash_token_features", "vocab_size",
                       "max_len"},
                   "textenc.");
        get_if_present(t, "bins_per_feature", cfg.textenc.bins_per_feature);
        get_if_present(t, "token_width", cfg.textenc.token_width);
        get_if_present(t, "salt_hex", cfg.textenc.salt_hex);
        get_if_present(t, "hash_token_features", cfg.textenc.hash_token_features);
        get_if_present(t, "vocab_size", cfg.textenc.vocab_size);
        get_if_present(t, "max_len", cfg.textenc.max_len);
    }

    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        check_keys(e, {"n_layers", "d_model", "n_heads", "d_ff", "dropout"}, "encoder.");
        get_if_present(e, "n_layers", cfg.enc.n_layers);
        get_if_present(e, "d_model", cfg.enc.d_model);
        get_if_present(e, "n_heads", cfg.enc.n_heads);
        get_if_present(e, "d_ff", cfg.enc.d_ff);
        get_if_present(e, "dropout", cfg.enc.dropout);
    }
    cfg.enc.vocab_size = cfg.textenc.vocab_size;
    cfg.enc.max_len = cfg.textenc.max_len;

    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"learning_rate", "batch_size", "epochs", "clip_norm", "beta1", "beta2",
                       "class_weighting"},
                   "train.");
        get_if_present(t, "learning_rate", cfg.train.learning_rate);
        get_if_present(t, "batch_size", cfg.train.batch_size);
        get_if_present(t, "epochs", cfg.train.epochs);
        get_if_present(t, "clip_norm", cfg.train.clip_norm);
        get_if_present(t, "beta1", cfg.train.beta1);
        get_if_present(t, "beta2", cfg.train.beta2);
        get_if_present(t, "class_weighting", cfg.train.class_weighting);
    }

    if (j.contains("detection")) {
        const auto& d = j.at("detection");
        check_keys(d, {"forward_frac", "malicious_threshold", "shared_encoder"}, "detection.");
        get_if_present(d, "forward_frac", cfg.detection.forward_frac);
        get_optional(d, "malicious_threshold", cfg.detection.malicious_threshold);
        get_if_present(d, "shared_encoder", cfg.detection.shared_encoder);
    }

    if (j.contains("identification")) {
        const auto& i = j.at("identification");
        check_keys(i, {"replay_per_class", "encoder_lr_scale", "unknown_softmax_threshold",
                       "recall_drop_budget", "retrain_epochs"},
                   "identification.");
        get_if_present(i, "replay_per_class", cfg.identification.replay_per_class);
        get_if_present(i, "encoder_lr_scale", cfg.identification.encoder_lr_scale);
        get_optional(i, "unknown_softmax_threshold", cfg.identification.unknown_softmax_threshold);
        get_if_present(i, "recall_drop_budget", cfg.identification.recall_drop_budget);
        get_if_present(i, "retrain_epochs", cfg.identification.retrain_epochs);
    }

    if (j.contains("clustering")) {
        const auto& c = j.at("clustering");
        check_keys(c, {"k_min", "k_max", "subsample_cap", "min_pool", "max_iter", "tol", "variance_floor"},
                   "clustering.");
        get_if_present(c, "k_min", cfg.clustering.k_min);
        get_if_present(c, "k_max", cfg.clustering.k_max);
        get_if_present(c, "subsample_cap", cfg.clustering.subsample_cap);
        get_if_present(c, "min_pool", cfg.clustering.min_pool);
        get_if_present(c, "max_iter", cfg.clustering.max_iter);
        get_if_present(c, "tol", cfg.clustering.tol);
        get_if_present(c, "variance_floor", cfg.clustering.variance_floor);
    }

    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void apply_override(nlohmann::ordered_json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string dotted = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        parts.push_back(dotted.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }

    nlohmann::ordered_json* node = &tree;
    std::string walked;
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i])) {
            const std::string hint = node->is_object() ? nearest_key(*node, parts[i]) : "";
            throw ConfigError("unknown config key '" + walked + parts[i] + "'" +
                              (hint.empty() ? "" : ", did you mean '" + walked + hint + "'?"));
        }
        node = &(*node)[parts[i]];
        walked += parts[i] + ".";
    }
    const std::string& leaf = parts.back();
    if (!node->is_object() || !node->contains(leaf)) {
        const std::string hint = node->is_object() ? nearest_key(*node, leaf) : "";
        throw ConfigError("unknown config key '" + walked + leaf + "'" +
                          (hint.empty() ? "" : ", did you mean '" + walked + hint + "'?"));
    }

    // parse value as JSON when possible, fall back to a plain string
    nlohmann::ordered_json value = nlohmann::ordered_json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    (*node)[leaf] = value;
}

std::string config_hash(const RunConfig& cfg) {
    const std::string dump = to_json(cfg).dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(dump)));
    return std::string(buf);
}

}  // namespace cids::pipeline
