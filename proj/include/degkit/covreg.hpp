#pragma once

#include "degkit/bspline.hpp"
#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace degkit::covreg {

// ---------------------------------------------------------------------------
// Elastic-net lognormal lifetime regression with a normal random effect:
// log T = beta0 + x'beta + w + sigma * eps, w ~ N(0, sigma_w^2).

struct EnOptions {
  int quad_order = 20;
  double sigma_w = 0.0;  // random-effect scale, held fixed
  int max_iters = 20000;
  double tol = 1e-12;
};

struct EnLifetimeModel {
  double beta0 = 0.0;
  Eigen::VectorXd beta;
  double sigma = 1.0;
  double sigma_w = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  int quad_order = 20;
  Eigen::VectorXd x_center;  // applied to raw covariates before beta
  Eigen::VectorXd x_scale;
  std::vector<std::string> covariate_names;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;

  std::vector<int> selected() const;
  /// Linear predictor for raw covariates.
  double eta(const Eigen::VectorXd& x) const;
};

/// Censored lognormal data on the standardized scale.
struct LifetimeData {
  Eigen::VectorXd log_times;
  Eigen::VectorXi delta;
  Eigen::MatrixXd x;
};

LifetimeData make_lifetime_data(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x);

/// Negative marginal log-likelihood at (beta0, beta, log sigma), with gradient.
double en_negloglik(const LifetimeData& data, double beta0, const Eigen::VectorXd& beta, double log_sigma,
                    double sigma_w, int quad_order, Eigen::VectorXd* grad = nullptr);

/// negloglik + alpha1 |beta|_1 + alpha2 |beta|_2^2.
double en_objective(const LifetimeData& data, const EnLifetimeModel& model);

EnLifetimeModel fit_en_lifetime(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                                double alpha1, double alpha2, const EnOptions& opts = {},
                                const EnLifetimeModel* warm_start = nullptr);

struct EnGridRow {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  int df = 0;
  double negloglik = 0.0;
  double refit_negloglik = 0.0;  // unpenalized fit on the same support
  double bic = 0.0;
  bool converged = false;
};

struct EnSelection {
  std::vector<EnGridRow> table;
  std::size_t best = 0;
  EnLifetimeModel model;
};

/// Smallest alpha1 at which beta = 0 is a stationary point (KKT at the null fit).
/// The likelihood is not jointly convex in (beta, log sigma), so a fit just
/// above this value can still land on a nonzero beta.
double en_alpha1_max(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                     const EnOptions& opts = {});

/// BIC over alpha2 in `alpha2s` and a 25-point log path of alpha1 from
/// alpha1_max down to 1e-2 alpha1_max. The BIC likelihood term is the
/// unpenalized refit on each candidate support.
EnSelection select_en(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                      const std::vector<double>& alpha2s = {0.0, 1.0}, const EnOptions& opts = {});

/// Column means and standard deviations (zero spread maps to scale 1).
void standardize(const Eigen::MatrixXd& x, Eigen::VectorXd& center, Eigen::VectorXd& scale);

struct LifetimePrediction {
  double median = 0.0;
  std::vector<double> probs;
  std::vector<double> quantiles;
};

/// Quantiles of the marginal lifetime distribution for raw covariates x.
LifetimePrediction predict_lifetime(const EnLifetimeModel& model, const Eigen::VectorXd& x,
                                    const std::vector<double>& probs = {0.1, 0.5, 0.9});

// ---------------------------------------------------------------------------
// Cumulative functional-covariate regression
// y_ij = beta0 + sum_{t <= t_ij} int psi(lambda) x_i(lambda; t) dlambda + z_ij' beta + e_ij.

struct FuncRegModel {
  double beta0 = 0.0;
  Eigen::VectorXd psi_coef;
  Eigen::VectorXd beta;  // scalar cumulative covariates, may be empty
  double sigma = 0.0;
  double smooth = 0.0;
  BSplineBasis basis;

  double psi(double lambda) const;
  Eigen::VectorXd psi_curve(const std::vector<double>& grid) const;
};

/// `design` rows come from fda::functional_covariate_design with `basis`;
/// `scalar` holds optional cumulative scalar covariates.
FuncRegModel fit_funcreg(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const BSplineBasis& basis,
                         double smooth, const Eigen::MatrixXd& scalar = Eigen::MatrixXd());

Eigen::VectorXd predict_funcreg(const FuncRegModel& model, const Eigen::MatrixXd& design,
                                const Eigen::MatrixXd& scalar = Eigen::MatrixXd());

// ---------------------------------------------------------------------------
// Scalar-on-image regression g(mu) = alpha0 + <B, X>, B = sum_r u_r v_r'.

enum class Link { kIdentity, kLog };
std::string to_string(Link link);
Link link_from_string(const std::string& s);

struct TensorOptions {
  int max_iters = 1000;
  double tol = 1e-13;
};

struct TensorRegModel {
  Link link = Link::kIdentity;
  double alpha0 = 0.0;
  Eigen::MatrixXd U;  // rows x R
  Eigen::MatrixXd V;  // cols x R
  double noise_sd = 0.0;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;

  int rank() const { return static_cast<int>(U.cols()); }
  Eigen::MatrixXd B() const;
  double linear(const Eigen::MatrixXd& x) const;
  double predict(const Eigen::MatrixXd& x) const;
};

/// Least squares (identity link) or Poisson deviance (log link).
double tensor_objective(const TensorRegModel& model, const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs);

TensorRegModel fit_tensorreg(const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs, int rank, Link link,
                             const TensorOptions& opts = {});

struct RankSelection {
  std::vector<int> ranks;
  std::vector<double> validation_error;
  int best = 1;
  TensorRegModel model;
};

/// Holds out 20% of the rows (RNG split), picks the rank with the lowest
/// validation error and refits on all rows.
RankSelection select_tensor_rank(const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs,
                                 const std::vector<int>& ranks, Link link, const RngSpec& rng,
                                 const TensorOptions& opts = {});

}  // namespace degkit::covreg
