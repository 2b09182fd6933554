#include "cids/flowdata.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cids::flowdata {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Parses one CSV line, RFC-4180 quoting.
std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool parse_number(const std::string& cell, double& out) {
    if (cell.empty()) {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    if (begin == end) {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    // from_chars does not accept leading '+'
    if (*begin == '+') ++begin;
    auto res = std::from_chars(begin, end, out, std::chars_format::general);
    return res.ec == std::errc{} && res.ptr == end;
}

// Per-class seeded pick of `keep` indices, input order preserved.
std::vector<size_t> sample_indices(const std::vector<size_t>& pool, size_t keep, std::mt19937_64& rng) {
    std::vector<size_t> shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    shuffled.resize(std::min(keep, shuffled.size()));
    std::sort(shuffled.begin(), shuffled.end());
    return shuffled;
}

std::map<std::string, std::vector<size_t>> indices_by_class(const Dataset& ds) {
    std::map<std::string, std::vector<size_t>> by_class;
    for (size_t i = 0; i < ds.records.size(); ++i) by_class[ds.records[i].label].push_back(i);
    return by_class;
}

Dataset take_indices(const Dataset& ds, std::vector<size_t> idx) {
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.schema = ds.schema;
    out.records.reserve(idx.size());
    for (size_t i : idx) out.records.push_back(ds.records[i]);
    out.recount();
    return out;
}

}  // namespace

void Dataset::recount() {
    class_counts.clear();
    for (const auto& r : records) ++class_counts[r.label];
}

Dataset make_dataset(std::vector<std::string> schema, std::vector<FlowRecord> records) {
    Dataset ds;
    ds.schema = std::move(schema);
    ds.records = std::move(records);
    for (const auto& r : ds.records) {
        if (r.values.size() != ds.schema.size())
            throw DataError(DataError::reason::bad_value, "record arity does not match schema");
    }
    ds.recount();
    return ds;
}

Dataset merge(const Dataset& a, const Dataset& b) {
    if (a.schema != b.schema)
        throw DataError(DataError::reason::bad_value, "cannot merge datasets with different schemas");
    Dataset out = a;
    out.records.insert(out.records.end(), b.records.begin(), b.records.end());
    out.recount();
    return out;
}

Dataset filter_labels(const Dataset& ds, const std::vector<std::string>& labels) {
    Dataset out;
    out.schema = ds.schema;
    for (const auto& r : ds.records) {
        if (std::find(labels.begin(), labels.end(), r.label) != labels.end()) out.records.push_back(r);
    }
    out.recount();
    return out;
}

Dataset ingest_csv(const std::string& path, const IngestOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::reason::missing_file, "cannot open '" + path + "'");

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) throw DataError(DataError::reason::empty_file, "'" + path + "' is empty");

    const std::string header_line = lines[0];
    std::vector<std::string> header = parse_csv_line(header_line);

    size_t label_col = header.size();
    const std::string want = lower(opts.label_column);
    for (size_t i = 0; i < header.size(); ++i) {
        if (lower(header[i]) == want) {
            label_col = i;
            break;
        }
    }
    if (label_col == header.size())
        throw DataError(DataError::reason::missing_label_column,
                        "no column matching label column '" + opts.label_column + "' in '" + path + "'");

    std::vector<size_t> feature_cols;
    std::vector<std::string> schema;
    for (size_t i = 0; i < header.size(); ++i) {
        if (i == label_col) continue;
        feature_cols.push_back(i);
        auto it = opts.schema_map.find(header[i]);
        schema.push_back(it == opts.schema_map.end() ? header[i] : it->second);
    }

    // Collect cells, dropping repeated header rows and wrong-arity rows.
    std::vector<std::vector<std::string>> rows;
    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li] == header_line) continue;
        auto cells = parse_csv_line(lines[li]);
        if (cells.size() != header.size()) continue;
        rows.push_back(std::move(cells));
    }

    const size_t n_features = feature_cols.size();
    // Column typing pass: numeric iff every cell parses as a number.
    std::vector<bool> numeric_col(n_features, true);
    std::vector<std::vector<double>> parsed(n_features, std::vector<double>(rows.size()));
    for (size_t f = 0; f < n_features; ++f) {
        const size_t col = feature_cols[f];
        for (size_t r = 0; r < rows.size(); ++r) {
            double v;
            if (!parse_number(rows[r][col], v)) {
                numeric_col[f] = false;
                break;
            }
            parsed[f][r] = v;
        }
    }

    // Cleaning pass: NaN -> 0.0, +inf -> column finite max, -inf -> column finite min.
    for (size_t f = 0; f < n_features; ++f) {
        if (!numeric_col[f]) continue;
        double fin_max = 0.0, fin_min = 0.0;
        bool any_finite = false;
        for (double v : parsed[f]) {
            if (std::isfinite(v)) {
                if (!any_finite || v > fin_max) fin_max = v;
                if (!any_finite || v < fin_min) fin_min = v;
                any_finite = true;
            }
        }
        for (double& v : parsed[f]) {
            if (std::isnan(v)) v = 0.0;
            else if (std::isinf(v)) v = (v > 0) ? fin_max : fin_min;
        }
    }

    Dataset ds;
    ds.schema = std::move(schema);
    ds.records.reserve(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        FlowRecord rec;
        rec.values.reserve(n_features);
        for (size_t f = 0; f < n_features; ++f) {
            if (numeric_col[f]) rec.values.emplace_back(parsed[f][r]);
            else rec.values.emplace_back(rows[r][feature_cols[f]]);
        }
        rec.label = rows[r][label_col];
        ds.records.push_back(std::move(rec));
    }
    ds.recount();
    return ds;
}

void write_csv(const Dataset& ds, const std::string& path, const std::string& label_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(DataError::reason::missing_file, "cannot write '" + path + "'");
    for (size_t i = 0; i < ds.schema.size(); ++i) out << csv_escape(ds.schema[i]) << ',';
    out << csv_escape(label_column) << '\n';
    for (const auto& rec : ds.records) {
        for (const auto& v : rec.values) {
            if (is_numeric(v)) out << format_double(num(v));
            else out << csv_escape(cat(v));
            out << ',';
        }
        out << csv_escape(rec.label) << '\n';
    }
}

std::string manifest_json(const Dataset& ds, uint64_t seed, const std::string& provenance) {
    nlohmann::ordered_json j;
    j["schema"] = ds.schema;
    nlohmann::ordered_json counts;
    for (const auto& [label, n] : ds.class_counts) counts[label] = n;
    j["class_counts"] = counts;
    j["records"] = ds.records.size();
    j["seed"] = seed;
    j["provenance"] = provenance;
    return j.dump(2) + "\n";
}

Dataset subsample(const Dataset& ds, double benign_frac, double total_frac, uint64_t seed,
                  const SubsampleOptions& opts) {
    if (ds.empty()) throw DataError(DataError::reason::empty_dataset, "subsample of empty dataset");
    if (!(benign_frac > 0.0 && benign_frac <= 1.0)) throw ConfigError("benign_frac must be in (0, 1]");
    if (!(total_frac > 0.0 && total_frac <= 1.0)) throw ConfigError("total_frac must be in (0, 1]");

    auto by_class = indices_by_class(ds);
    std::vector<size_t> kept;
    for (auto& [label, idx] : by_class) {
        auto rng = make_rng(seed, "subsample:" + label);
        std::vector<size_t> cur = idx;
        if (label == opts.benign_label) {
            size_t n1 = static_cast<size_t>(round_half_up(benign_frac * static_cast<double>(cur.size())));
            cur = sample_indices(cur, n1, rng);
        }
        const bool priority =
            std::find(opts.priority.begin(), opts.priority.end(), label) != opts.priority.end();
        if (!priority) {
            size_t n2 = static_cast<size_t>(round_half_up(total_frac * static_cast<double>(cur.size())));
            cur = sample_indices(cur, n2, rng);
        }
        kept.insert(kept.end(), cur.begin(), cur.end());
    }
    return take_indices(ds, std::move(kept));
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
    if (ds.empty()) throw DataError(DataError::reason::empty_dataset, "split of empty dataset");

    auto by_class = indices_by_class(ds);
    std::vector<size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw DataError(DataError::reason::class_too_small,
                            "class '" + label + "' has fewer than 2 records, cannot stratify");
        auto rng = make_rng(seed, "split:" + label);
        std::vector<size_t> shuffled = idx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        size_t n_train = static_cast<size_t>(round_half_up(train_frac * static_cast<double>(idx.size())));
        n_train = std::clamp<size_t>(n_train, 1, idx.size() - 1);
        train_idx.insert(train_idx.end(), shuffled.begin(), shuffled.begin() + n_train);
        test_idx.insert(test_idx.end(), shuffled.begin() + n_train, shuffled.end());
    }
    return {take_indices(ds, std::move(train_idx)), take_indices(ds, std::move(test_idx))};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes.empty()) throw ConfigError("synthetic spec has no classes");
    if (spec.n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
    const size_t n_features = spec.classes.front().means.size();
    for (const auto& cls : spec.classes) {
        if (cls.means.size() != n_features || cls.stddevs.size() != n_features)
            throw ConfigError("class '" + cls.label + "' feature count mismatch");
        for (double s : cls.stddevs)
            if (!(s > 0.0)) throw ConfigError("class '" + cls.label + "' has non-positive stddev");
    }

    Dataset ds;
    if (!spec.feature_names.empty()) {
        if (spec.feature_names.size() != n_features) throw ConfigError("feature_names length mismatch");
        ds.schema = spec.feature_names;
    } else {
        for (size_t f = 0; f < n_features; ++f) ds.schema.push_back("f" + std::to_string(f));
    }

    for (const auto& cls : spec.classes) {
        auto rng = make_rng(spec.seed, "synth:" + cls.label);
        for (size_t i = 0; i < spec.n_per_class; ++i) {
            FlowRecord rec;
            rec.values.reserve(n_features);
            for (size_t f = 0; f < n_features; ++f) {
                std::normal_distribution<double> dist(cls.means[f], cls.stddevs[f]);
                rec.values.emplace_back(dist(rng));
            }
            rec.label = cls.label;
            ds.records.push_back(std::move(rec));
        }
    }
    ds.recount();
    return ds;
}

}  // namespace cids::flowdata
