#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cids/common.hpp"

namespace cids::clustering {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct GmmOptions {
    int max_iter = 200;
    double tol = 1e-6;            // relative log-likelihood change
    double variance_floor = 1e-6;
};

// K-component Gaussian mixture with diagonal covariances.
struct GmmModel {
    int K = 0;
    Vec weights;     // K, sums to 1
    Mat means;       // K x d
    Mat variances;   // K x d, floored
    std::vector<double> log_likelihood_curve;  // mean log-likelihood per iteration
    std::vector<std::string> warnings;
};

// EM with k-means++ seeding, log-sum-exp responsibilities and closed-form
// M-step. Points are processed in a canonical (lexicographically sorted)
// order internally, so results do not depend on input row order.
GmmModel fit_gmm(const Mat& points, int K, uint64_t seed, const GmmOptions& opts = {});

// Responsibilities of one point; argmax breaks ties toward the smaller index.
std::pair<int, Vec> predict_cluster(const GmmModel& gmm, const Vec& point);

std::vector<int> assign_all(const GmmModel& gmm, const Mat& points);

// Mean silhouette over all points: s(i) = (b(i) - a(i)) / max(a(i), b(i)),
// Euclidean distances, singleton clusters contribute s(i) = 0.
double silhouette(const Mat& points, const std::vector<int>& assignments);

struct ClusterSelection {
    std::vector<int> k_candidates;
    std::map<int, double> silhouette_by_k;
    int chosen_k = 0;
};

struct SelectKOptions {
    int subsample_cap = 2000;
    GmmOptions gmm;
};

// Fits a GMM per candidate k and scores it by mean silhouette on up to
// subsample_cap points; argmax wins, ties break toward the smaller k.
// `best_out`, when given, receives the winning fit.
ClusterSelection select_k(const Mat& points, const std::vector<int>& k_range, uint64_t seed,
                          const SelectKOptions& opts = {}, GmmModel* best_out = nullptr);

std::string gmm_json(const GmmModel& gmm, uint64_t seed);
std::string selection_json(const ClusterSelection& sel);

}  // namespace cids::clustering
