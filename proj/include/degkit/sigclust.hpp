#pragma once

#include "degkit/funcdata.hpp"
#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace degkit::cluster {

/// Gaussian mixture with shared diagonal covariance and an L-infinity group
/// penalty on the cluster means. Means are stored relative to `center`.
struct PenalizedGmm {
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;      // K x d
  Eigen::VectorXd variances;  // d
  Eigen::VectorXd center;     // d
  double lambda = 0.0;
  std::vector<std::vector<int>> groups;  // variable -> coordinate columns
  std::vector<int> active_vars;
  int K_max = 1;
  double loglik = 0.0;
  double penalized = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;      // penalized objective per iteration
  std::vector<int> pruned_at;     // iterations at which components were removed

  int K() const { return static_cast<int>(weights.size()); }
  int dim() const { return static_cast<int>(variances.size()); }
  double penalty() const;
  void refresh_active(double tol = 0.0);
};

/// Every column is its own variable.
std::vector<std::vector<int>> singleton_groups(int d);

double mixture_loglik(const PenalizedGmm& model, const Eigen::MatrixXd& scores);
double penalized_loglik(const PenalizedGmm& model, const Eigen::MatrixXd& scores);
Eigen::MatrixXd responsibilities(const PenalizedGmm& model, const Eigen::MatrixXd& scores);

/// Minimizer of sum_i a_i/2 (x_i - m_i)^2 + lam * max_i |x_i|.
Eigen::VectorXd prox_weighted_linf(const Eigen::VectorXd& m, const Eigen::VectorXd& a, double lam);

struct EmOptions {
  int restarts = 5;
  int max_iters = 500;
  double tol = 1e-8;
  int threads = 1;
  std::vector<std::vector<int>> groups;  // empty: one variable per column
};

struct EmResult {
  PenalizedGmm model;
  Eigen::MatrixXd resp;
  std::vector<int> labels;
};

/// Best of `restarts` k-means++ starts (plus `init` responsibilities when
/// given) by penalized log-likelihood.
EmResult fit_em(const Eigen::MatrixXd& scores, int K, double lambda, const RngSpec& rng,
                const EmOptions& opts = {}, const Eigen::MatrixXd* init = nullptr);

struct SelectionRow {
  int K = 0;
  double lambda = 0.0;
  int clusters = 0;
  int df = 0;
  double loglik = 0.0;
  double bic = 0.0;
};

struct Selection {
  std::vector<SelectionRow> table;
  std::size_t best = 0;
  EmResult fit;
};

/// lambda_max * 10^linspace(-3, 0, 8), lambda_max zeroing every mean of the
/// unpenalized fit in one proximal step.
std::vector<double> default_lambda_grid(const Eigen::MatrixXd& scores, int K, const RngSpec& rng,
                                        const EmOptions& opts = {});

/// BIC over K' = 1..K and the lambda grid (empty grid: default grid).
Selection select_model(const Eigen::MatrixXd& scores, int K, std::vector<double> lambdas,
                       const RngSpec& rng, const EmOptions& opts = {});

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct SignalClustering {
  std::vector<std::string> unit_ids;
  std::vector<fda::FpcaBasis> bases;
  Eigen::MatrixXd scores;
  std::vector<std::vector<int>> groups;  // one group per channel
  std::vector<std::string> channels;
  std::vector<int> labels;
  std::optional<Selection> selection;
  PenalizedGmm model;
};

/// Per-channel FPCA, concatenated scores, penalized EM and hard labels.
/// Units are processed in unit-id order and labels numbered by first
/// appearance in that order; lambda unset selects by BIC.
SignalClustering cluster_signals(const std::vector<fda::FunctionalSample>& channels, double var_threshold, int K,
                                 std::optional<double> lambda, const RngSpec& rng, const EmOptions& opts = {});

}  // namespace degkit::cluster
