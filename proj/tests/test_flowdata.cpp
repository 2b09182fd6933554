#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

#include "cids/flowdata.hpp"

using namespace cids;
using namespace cids::flowdata;

namespace {

std::string temp_path(const std::string& name) {
    static int counter = 0;
    return (std::filesystem::temp_directory_path() /
            ("cids_flowdata_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + "_" + name))
        .string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

Dataset two_class_numeric(size_t benign, size_t bot, uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.classes = {{"Benign", {1.0, 2.0}, {0.5, 0.5}}, {"Bot", {5.0, 6.0}, {0.5, 0.5}}};
    spec.n_per_class = std::max(benign, bot);
    spec.seed = seed;
    auto ds = generate_synthetic(spec);
    // trim classes to the requested counts, order preserved
    Dataset out;
    out.schema = ds.schema;
    size_t nb = 0, nt = 0;
    for (auto& rec : ds.records) {
        if (rec.label == "Benign" && nb < benign) {
            out.records.push_back(rec);
            ++nb;
        } else if (rec.label == "Bot" && nt < bot) {
            out.records.push_back(rec);
            ++nt;
        }
    }
    out.recount();
    return out;
}

}  // namespace

TEST_CASE("ingest counts classes") {
    const auto path = temp_path("basic.csv");
    std::string csv = "f0,f1,Label\n";
    for (int i = 0; i < 6; ++i) csv += "1.5,2,Benign\n";
    for (int i = 0; i < 4; ++i) csv += "9,9.25,Bot\n";
    write_text(path, csv);

    auto ds = ingest_csv(path);
    CHECK(ds.size() == 10);
    CHECK(ds.class_counts.at("Benign") == 6);
    CHECK(ds.class_counts.at("Bot") == 4);
    CHECK(ds.schema == std::vector<std::string>{"f0", "f1"});
}

TEST_CASE("ingest cleans Infinity and NaN and drops duplicate headers") {
    const auto path = temp_path("dirty.csv");
    write_text(path,
               "a,b,Label\n"
               "1,2,x\n"
               "Infinity,3,x\n"
               "a,b,Label\n"
               "-Infinity,NaN,y\n"
               "4,5,y\n");
    auto ds = ingest_csv(path);
    REQUIRE(ds.size() == 4);
    // +inf -> finite max of column a (4), -inf -> finite min (1), NaN -> 0
    CHECK(num(ds.records[1].values[0]) == doctest::Approx(4.0));
    CHECK(num(ds.records[2].values[0]) == doctest::Approx(1.0));
    CHECK(num(ds.records[2].values[1]) == doctest::Approx(0.0));
}

TEST_CASE("ingest error categories are distinct") {
    CHECK_THROWS_WITH_AS(ingest_csv(temp_path("missing.csv")), doctest::Contains("cannot open"),
                         DataError);
    const auto empty = temp_path("empty.csv");
    write_text(empty, "");
    try {
        ingest_csv(empty);
        FAIL("expected error");
    } catch (const DataError& e) {
        CHECK(e.why() == DataError::reason::empty_file);
    }
    const auto nolabel = temp_path("nolabel.csv");
    write_text(nolabel, "a,b\n1,2\n");
    try {
        ingest_csv(nolabel);
        FAIL("expected error");
    } catch (const DataError& e) {
        CHECK(e.why() == DataError::reason::missing_label_column);
    }
}

TEST_CASE("ingest label column is case-insensitive and remappable") {
    const auto path = temp_path("label_case.csv");
    write_text(path, "a,LABEL\n1,x\n2,y\n");
    auto ds = ingest_csv(path);
    CHECK(ds.class_counts.count("x") == 1);

    IngestOptions opts;
    opts.label_column = "class";
    const auto path2 = temp_path("label_custom.csv");
    write_text(path2, "a,class\n1,x\n");
    auto ds2 = ingest_csv(path2, opts);
    CHECK(ds2.size() == 1);
}

TEST_CASE("csv write/ingest round-trip is identity") {
    auto ds = two_class_numeric(20, 10);
    const auto path = temp_path("roundtrip.csv");
    write_csv(ds, path);
    auto back = ingest_csv(path);
    REQUIRE(back.size() == ds.size());
    CHECK(back.schema == ds.schema);
    CHECK(back.class_counts == ds.class_counts);
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.records[i].label == ds.records[i].label);
        for (size_t f = 0; f < ds.schema.size(); ++f)
            CHECK(num(back.records[i].values[f]) == num(ds.records[i].values[f]));
    }
}

TEST_CASE("subsample hits the two-step expected counts") {
    auto ds = two_class_numeric(1000, 100);
    // Bot is not the benign class, so only total_frac applies to it
    SubsampleOptions opts;
    auto out = subsample(ds, 0.15, 0.30, 7, opts);
    CHECK(out.class_counts.at("Benign") == 45);  // 1000 * 0.15 = 150, * 0.30 = 45
    CHECK(out.class_counts.at("Bot") == 30);
}

TEST_CASE("subsample with unit fractions is the identity") {
    auto ds = two_class_numeric(50, 30);
    auto out = subsample(ds, 1.0, 1.0, 3);
    REQUIRE(out.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) CHECK(out.records[i].label == ds.records[i].label);
}

TEST_CASE("subsample respects priority exemptions") {
    auto ds = two_class_numeric(100, 60);
    SubsampleOptions opts;
    opts.priority = {"Bot"};
    auto out = subsample(ds, 0.5, 0.5, 11, opts);
    CHECK(out.class_counts.at("Benign") == 25);  // 100*0.5 -> 50, *0.5 -> 25
    CHECK(out.class_counts.at("Bot") == 60);     // exempt from total_frac
}

TEST_CASE("subsample property: per-class counts follow half-up rounding") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<size_t> size_dist(1, 400);
        const size_t nb = size_dist(rng), na = size_dist(rng);
        std::uniform_real_distribution<double> frac(0.05, 1.0);
        const double bf = frac(rng), tf = frac(rng);
        auto ds = two_class_numeric(nb, na, rng());
        auto out = subsample(ds, bf, tf, rng());
        const auto expect = [](double x) { return static_cast<size_t>(std::floor(x + 0.5)); };
        const size_t benign_step1 = expect(bf * static_cast<double>(nb));
        CHECK(out.class_counts.count("Benign") ==
              (expect(tf * static_cast<double>(benign_step1)) > 0 ? 1u : 0u));
        if (out.class_counts.count("Benign"))
            CHECK(out.class_counts.at("Benign") == expect(tf * static_cast<double>(benign_step1)));
        if (out.class_counts.count("Bot"))
            CHECK(out.class_counts.at("Bot") == expect(tf * static_cast<double>(na)));
    }
}

// The published per-class record counts imply the pre-reduction dataset;
// applying the stated reduction must land within 0.5% of the published
// class proportions. The benign class reaches its published 15% share via
// benign_frac=0.5 with total_frac=0.30 (0.5 * 0.30 = 0.15).
TEST_CASE("subsample reproduces published class proportions") {
    const std::vector<std::pair<std::string, double>> published = {
        {"Benign", 2022706},          {"DDoS attack-HOIC", 205804},
        {"DDoS attacks-LOIC-HTTP", 172857}, {"DoS attacks-Hulk", 138574},
        {"Bot", 85857},               {"FTP-BruteForce", 58008},
        {"SSH-Bruteforce", 56277},    {"DoS attacks-SlowHTTPTest", 41967},
    };
    // reconstruct pre-reduction counts at 1/1000 scale
    SyntheticSpec spec;
    spec.n_per_class = 1;
    spec.seed = 5;
    Dataset full;
    for (const auto& [label, count] : published) {
        const double pre = label == "Benign" ? count / 0.15 : count / 0.30;
        SyntheticSpec s;
        s.classes = {{label, {1.0}, {1.0}}};
        s.n_per_class = static_cast<size_t>(pre / 1000.0 + 0.5);
        s.seed = 5;
        auto part = generate_synthetic(s);
        full = full.empty() ? std::move(part) : merge(full, part);
    }

    auto reduced = subsample(full, 0.5, 0.30, 17);
    double published_total = 0, reduced_total = 0;
    for (const auto& [label, count] : published) published_total += count;
    for (const auto& [label, count] : reduced.class_counts) reduced_total += static_cast<double>(count);
    for (const auto& [label, count] : published) {
        const double want = count / published_total;
        const double got = static_cast<double>(reduced.class_counts.at(label)) / reduced_total;
        CHECK(std::abs(got - want) < 0.005);
    }
}

TEST_CASE("split is a stratified partition") {
    auto ds = two_class_numeric(50, 50);
    auto [train, test] = split(ds, 0.8, 21);
    CHECK(train.class_counts.at("Benign") == 40);
    CHECK(train.class_counts.at("Bot") == 40);
    CHECK(test.class_counts.at("Benign") == 10);
    CHECK(test.class_counts.at("Bot") == 10);

    // partition: recount of the union equals the original counts
    auto reunited = merge(train, test);
    CHECK(reunited.class_counts == ds.class_counts);

    // determinism
    auto [train2, test2] = split(ds, 0.8, 21);
    REQUIRE(train2.size() == train.size());
    for (size_t i = 0; i < train.size(); ++i)
        CHECK(num(train2.records[i].values[0]) == num(train.records[i].values[0]));
}

TEST_CASE("split property: every record lands on exactly one side") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<size_t> size_dist(2, 120);
        auto ds = two_class_numeric(size_dist(rng), size_dist(rng), rng());
        std::uniform_real_distribution<double> frac(0.1, 0.9);
        auto [train, test] = split(ds, frac(rng), rng());
        CHECK(train.size() + test.size() == ds.size());
        auto key = [](const FlowRecord& r) {
            return std::to_string(num(r.values[0])) + "|" + std::to_string(num(r.values[1])) + "|" + r.label;
        };
        std::multiset<std::string> all;
        for (const auto& r : ds.records) all.insert(key(r));
        for (const auto& r : train.records) {
            auto it = all.find(key(r));
            REQUIRE(it != all.end());
            all.erase(it);
        }
        for (const auto& r : test.records) {
            auto it = all.find(key(r));
            REQUIRE(it != all.end());
            all.erase(it);
        }
        CHECK(all.empty());
    }
}

TEST_CASE("split names the class that cannot be stratified") {
    Dataset ds;
    ds.schema = {"a"};
    ds.records.push_back({{1.0}, "lonely"});
    ds.records.push_back({{2.0}, "pair"});
    ds.records.push_back({{3.0}, "pair"});
    ds.recount();
    CHECK_THROWS_WITH_AS(split(ds, 0.5, 1), doctest::Contains("lonely"), DataError);
}

TEST_CASE("synthetic generation shape and determinism") {
    SyntheticSpec spec;
    spec.classes = {
        {"a", std::vector<double>(8, 0.0), std::vector<double>(8, 1.0)},
        {"b", std::vector<double>(8, 5.0), std::vector<double>(8, 1.0)},
        {"c", std::vector<double>(8, 9.0), std::vector<double>(8, 1.0)},
    };
    spec.n_per_class = 200;
    spec.seed = 77;
    auto ds = generate_synthetic(spec);
    CHECK(ds.size() == 600);
    CHECK(ds.schema.size() == 8);
    CHECK(ds.class_counts.at("a") == 200);

    auto again = generate_synthetic(spec);
    CHECK(num(again.records[0].values[0]) == num(ds.records[0].values[0]));

    spec.seed = 78;
    auto other = generate_synthetic(spec);
    CHECK(other.class_counts == ds.class_counts);
    CHECK(num(other.records[0].values[0]) != num(ds.records[0].values[0]));
}

TEST_CASE("synthetic tiny stddev concentrates on the class means") {
    SyntheticSpec spec;
    spec.classes = {{"a", {3.0, -2.0}, {1e-6, 1e-6}}};
    spec.n_per_class = 500;
    spec.seed = 13;
    auto ds = generate_synthetic(spec);
    double m0 = 0, m1 = 0;
    for (const auto& r : ds.records) {
        m0 += num(r.values[0]);
        m1 += num(r.values[1]);
    }
    m0 /= 500;
    m1 /= 500;
    CHECK(std::abs(m0 - 3.0) < 1e-3);
    CHECK(std::abs(m1 + 2.0) < 1e-3);
}

TEST_CASE("synthetic spec validation") {
    SyntheticSpec spec;
    spec.classes = {{"a", {1.0}, {0.0}}};
    spec.n_per_class = 1;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
    spec.classes = {{"a", {1.0}, {1.0}}};
    spec.n_per_class = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("subsample of an empty dataset fails") {
    Dataset ds;
    ds.schema = {"a"};
    CHECK_THROWS_AS(subsample(ds, 0.5, 0.5, 1), DataError);
}
