#include "cids/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

namespace cids::clustering {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Lexicographic row order; ties keep input order via stable_sort so equal
// rows stay interchangeable.
std::vector<Eigen::Index> canonical_order(const Mat& points) {
    std::vector<Eigen::Index> idx(static_cast<size_t>(points.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::stable_sort(idx.begin(), idx.end(), [&points](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < points.cols(); ++c) {
            if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
        }
        return false;
    });
    return idx;
}

// Inverse-CDF draw over unnormalized weights.
Eigen::Index weighted_pick(const Vec& w, std::mt19937_64& rng) {
    const double total = w.sum();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double target = u(rng) * total;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        target -= w(i);
        if (target <= 0.0) return i;
    }
    return w.size() - 1;
}

Mat kmeanspp_init(const Mat& pts, int K, std::mt19937_64& rng) {
    const Eigen::Index N = pts.rows();
    Mat centers(K, pts.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
    centers.row(0) = pts.row(first(rng));
    Vec d2 = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        Eigen::Index pick = d2.sum() > 0.0 ? weighted_pick(d2, rng) : first(rng);
        centers.row(k) = pts.row(pick);
        Vec nd = (pts.rowwise() - centers.row(k)).rowwise().squaredNorm();
        d2 = d2.cwiseMin(nd);
    }
    return centers;
}

// log N(x | mu_k, diag(var_k)) for all components, one point per row.
void log_densities(const GmmModel& gmm, const Mat& pts, Mat& out) {
    const Eigen::Index N = pts.rows(), d = pts.cols();
    out.resize(N, gmm.K);
    for (int k = 0; k < gmm.K; ++k) {
        const auto mu = gmm.means.row(k);
        const auto var = gmm.variances.row(k);
        const double log_norm = -0.5 * (d * kLog2Pi + var.array().log().sum());
        out.col(k) = log_norm -
                     0.5 * ((pts.rowwise() - mu).array().square().rowwise() / var.array()).rowwise().sum();
    }
}

// log responsibilities + per-point log marginal via log-sum-exp.
double e_step(const GmmModel& gmm, const Mat& pts, Mat& resp) {
    Mat logp;
    log_densities(gmm, pts, logp);
    logp.rowwise() += gmm.weights.array().log().matrix().transpose();
    double total = 0.0;
    resp.resize(pts.rows(), gmm.K);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
        const double m = logp.row(i).maxCoeff();
        Eigen::ArrayXd e = (logp.row(i).array() - m).exp();
        const double z = e.sum();
        resp.row(i) = (e / z).matrix().transpose();
        total += m + std::log(z);
    }
    return total / static_cast<double>(pts.rows());
}

}  // namespace

GmmModel fit_gmm(const Mat& points, int K, uint64_t seed, const GmmOptions& opts) {
    const Eigen::Index N = points.rows(), d = points.cols();
    if (K < 1) throw ConfigError("K must be >= 1");
    if (d < 1) throw ConfigError("points need at least one dimension");
    if (N < K)
        throw Error(errc::data, "cannot fit " + std::to_string(K) + " components to " + std::to_string(N) +
                                     " points");

    const auto order = canonical_order(points);
    Mat pts(N, d);
    for (Eigen::Index i = 0; i < N; ++i) pts.row(i) = points.row(order[static_cast<size_t>(i)]);

    GmmModel gmm;
    gmm.K = K;
    auto rng = std::mt19937_64(derive_seed(seed, "gmm-init"));
    gmm.means = kmeanspp_init(pts, K, rng);
    gmm.weights = Vec::Constant(K, 1.0 / K);
    Vec global_var(d);
    for (Eigen::Index c = 0; c < d; ++c) {
        const double mean = pts.col(c).mean();
        global_var(c) = std::max((pts.col(c).array() - mean).square().mean(), opts.variance_floor);
    }
    gmm.variances = global_var.transpose().replicate(K, 1);

    Mat resp;
    double prev_ll = -std::numeric_limits<double>::infinity();
    bool floored = false;
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const double ll = e_step(gmm, pts, resp);
        gmm.log_likelihood_curve.push_back(ll);

        // M-step
        Vec nk = resp.colwise().sum().transpose();
        for (int k = 0; k < K; ++k) {
            if (nk(k) < 1e-12) {
                // empty component: keep its parameters, weight decays to its mass
                gmm.weights(k) = nk(k) / static_cast<double>(N);
                continue;
            }
            gmm.weights(k) = nk(k) / static_cast<double>(N);
            Vec mu = (resp.col(k).transpose() * pts).transpose() / nk(k);
            gmm.means.row(k) = mu.transpose();
            Vec var = ((pts.rowwise() - mu.transpose()).array().square().colwise() * resp.col(k).array())
                          .colwise()
                          .sum()
                          .transpose() /
                      nk(k);
            for (Eigen::Index c = 0; c < d; ++c) {
                if (var(c) < opts.variance_floor) {
                    var(c) = opts.variance_floor;
                    floored = true;
                }
            }
            gmm.variances.row(k) = var.transpose();
        }
        gmm.weights /= gmm.weights.sum();

        if (iter > 0) {
            const double rel = std::abs(ll - prev_ll) / std::max(1.0, std::abs(prev_ll));
            if (rel < opts.tol) break;
        }
        prev_ll = ll;
    }
    if (floored)
        gmm.warnings.push_back("variance floor engaged; data may be degenerate along some dimensions");
    return gmm;
}

std::pair<int, Vec> predict_cluster(const GmmModel& gmm, const Vec& point) {
    if (point.size() != gmm.means.cols()) throw Error(errc::data, "point dimension mismatch");
    Mat resp;
    Mat pts = point.transpose();
    e_step(gmm, pts, resp);
    Vec r = resp.row(0).transpose();
    int best = 0;
    for (int k = 1; k < gmm.K; ++k)
        if (r(k) > r(best)) best = k;
    return {best, r};
}

std::vector<int> assign_all(const GmmModel& gmm, const Mat& points) {
    Mat resp;
    e_step(gmm, points, resp);
    std::vector<int> out(static_cast<size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        int best = 0;
        for (int k = 1; k < gmm.K; ++k)
            if (resp(i, k) > resp(i, best)) best = k;
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

double silhouette(const Mat& points, const std::vector<int>& assignments) {
    const Eigen::Index N = points.rows();
    if (N == 0) throw Error(errc::data, "silhouette of empty input");
    if (assignments.size() != static_cast<size_t>(N)) throw Error(errc::data, "assignment size mismatch");
    int n_clusters = 0;
    for (int a : assignments) n_clusters = std::max(n_clusters, a + 1);
    std::vector<long long> sizes(static_cast<size_t>(n_clusters), 0);
    for (int a : assignments) {
        if (a < 0) throw Error(errc::data, "negative cluster assignment");
        ++sizes[static_cast<size_t>(a)];
    }
    int nonempty = 0;
    for (long long s : sizes) nonempty += s > 0 ? 1 : 0;
    if (nonempty < 2) throw Error(errc::data, "silhouette needs at least 2 non-empty clusters");

    double total = 0.0;
    std::vector<double> dist_sum(static_cast<size_t>(n_clusters));
    for (Eigen::Index i = 0; i < N; ++i) {
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (Eigen::Index j = 0; j < N; ++j) {
            if (i == j) continue;
            dist_sum[static_cast<size_t>(assignments[static_cast<size_t>(j)])] +=
                (points.row(i) - points.row(j)).norm();
        }
        const int own = assignments[static_cast<size_t>(i)];
        if (sizes[static_cast<size_t>(own)] <= 1) continue;  // singleton: s(i) = 0
        const double a = dist_sum[static_cast<size_t>(own)] / static_cast<double>(sizes[static_cast<size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < n_clusters; ++c) {
            if (c == own || sizes[static_cast<size_t>(c)] == 0) continue;
            b = std::min(b, dist_sum[static_cast<size_t>(c)] / static_cast<double>(sizes[static_cast<size_t>(c)]));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(N);
}

ClusterSelection select_k(const Mat& points, const std::vector<int>& k_range, uint64_t seed,
                          const SelectKOptions& opts, GmmModel* best_out) {
    if (k_range.empty()) throw ConfigError("select_k needs a non-empty k range");
    const Eigen::Index N = points.rows();
    for (int k : k_range)
        if (k < 2 || k > static_cast<int>(N) - 1)
            throw ConfigError("k candidate " + std::to_string(k) + " outside [2, N-1]");

    // Work on the canonical order so subsampling and scoring do not depend
    // on caller row order.
    const auto order = canonical_order(points);
    Mat pts(N, points.cols());
    for (Eigen::Index i = 0; i < N; ++i) pts.row(i) = points.row(order[static_cast<size_t>(i)]);

    std::vector<Eigen::Index> scored(static_cast<size_t>(N));
    std::iota(scored.begin(), scored.end(), Eigen::Index{0});
    if (N > opts.subsample_cap) {
        auto rng = std::mt19937_64(derive_seed(seed, "silhouette-subsample"));
        std::shuffle(scored.begin(), scored.end(), rng);
        scored.resize(static_cast<size_t>(opts.subsample_cap));
        std::sort(scored.begin(), scored.end());
    }
    Mat sub(static_cast<Eigen::Index>(scored.size()), points.cols());
    for (size_t i = 0; i < scored.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = pts.row(scored[i]);

    ClusterSelection sel;
    sel.k_candidates = k_range;
    std::sort(sel.k_candidates.begin(), sel.k_candidates.end());
    double best_score = -std::numeric_limits<double>::infinity();
    for (int k : sel.k_candidates) {
        GmmModel gmm = fit_gmm(pts, k, derive_seed(seed, "select-k", static_cast<uint64_t>(k)), opts.gmm);
        std::vector<int> assign = assign_all(gmm, sub);
        int distinct = 0;
        {
            std::vector<bool> seen(static_cast<size_t>(k), false);
            for (int a : assign)
                if (!seen[static_cast<size_t>(a)]) {
                    seen[static_cast<size_t>(a)] = true;
                    ++distinct;
                }
        }
        // a degenerate fit collapsing onto one cluster scores worst
        const double score = distinct >= 2 ? silhouette(sub, assign) : -1.0;
        sel.silhouette_by_k[k] = score;
        if (score > best_score) {
            best_score = score;
            sel.chosen_k = k;
            if (best_out) *best_out = std::move(gmm);
        }
    }
    return sel;
}

std::string gmm_json(const GmmModel& gmm, uint64_t seed) {
    nlohmann::ordered_json j;
    j["K"] = gmm.K;
    j["seed"] = seed;
    std::vector<double> w(gmm.weights.data(), gmm.weights.data() + gmm.weights.size());
    j["weights"] = w;
    auto mat_rows = [](const Mat& m) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            rows.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
        return rows;
    };
    j["means"] = mat_rows(gmm.means);
    j["variances"] = mat_rows(gmm.variances);
    j["log_likelihood_curve"] = gmm.log_likelihood_curve;
    j["warnings"] = gmm.warnings;
    return j.dump(2) + "\n";
}

std::string selection_json(const ClusterSelection& sel) {
    nlohmann::ordered_json j;
    j["k_candidates"] = sel.k_candidates;
    nlohmann::ordered_json by_k;
    for (const auto& [k, s] : sel.silhouette_by_k) by_k[std::to_string(k)] = s;
    j["silhouette_by_k"] = by_k;
    if (sel.chosen_k > 0) j["chosen_k"] = sel.chosen_k;
    else j["chosen_k"] = nullptr;
    return j.dump(2) + "\n";
}

}  // namespace cids::clustering
