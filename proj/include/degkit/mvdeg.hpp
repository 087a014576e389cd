#pragma once

#include "degkit/copula.hpp"
#include "degkit/dataset.hpp"
#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace degkit::mvdeg {

enum class ShapeForm { kPower, kExpCovariatePower };

/// Time-scale function Lambda(t; x) = exp(x'gamma) * t^kappa.
struct ShapeFn {
  ShapeForm form = ShapeForm::kPower;
  double kappa = 1.0;
  Eigen::VectorXd gamma;  // used by kExpCovariatePower

  double operator()(double t, const Eigen::VectorXd& x = {}) const;
  /// Solves Lambda(t; x) = level for t.
  double inverse(double level, const Eigen::VectorXd& x = {}) const;
  void validate() const;

 private:
  double covariate_scale(const Eigen::VectorXd& x) const;
};

/// Copula random-effects Wiener model: channel j follows
/// D_j(t) = omega_j Lambda_j(t) + sigma_j B(Lambda_j(t)), observed with
/// white Gaussian noise of sd noise_sd[j]; omega is drawn from the copula
/// coupling the marginals.
struct CopulaWienerModel {
  std::size_t p = 1;
  std::vector<ShapeFn> shapes;
  std::vector<double> sigmas;
  std::vector<Marginal> marginals;
  CopulaSpec copula;
  std::vector<double> noise_sd;
  std::string process = "wiener";

  void validate() const;
  Eigen::VectorXd sample_omega(Rng& rng) const;
};

/// Per-channel sufficient statistics of the conditional likelihood, which
/// is quadratic in omega: loglik(w) = -(c - 2 w b + w^2 a)/2 - logdet/2 - n log(2 pi)/2.
struct ChannelStats {
  double a = 0.0, b = 0.0, c = 0.0, logdet = 0.0;
  std::size_t n = 0;
  double loglik(double omega) const;
};

ChannelStats channel_stats(std::span<const double> times, std::span<const double> y, const ShapeFn& shape,
                           double sigma, double noise_sd, const Eigen::VectorXd& x = {});

/// Exact Gaussian log-density of the unit's observations given omega.
double loglik_conditional(const CopulaWienerModel& model, const UnitRecord& unit, const Eigen::VectorXd& omega,
                          const Eigen::VectorXd& x = {});

struct McemOptions {
  std::size_t mc_draws = 20000;  // prior draws per iteration, shared by all units
  int max_iters = 100;
  double tol = 1e-4;  // largest relative parameter change
  bool fit_shape = true;
  bool fit_noise = true;
  int threads = 0;
  std::map<std::string, Eigen::VectorXd> covariates;  // by unit_id
};

struct McemIteration {
  int iter = 0;
  double mc_loglik = 0.0;
  double min_ess = 0.0;
  std::size_t mc_draws = 0;
  double copula_param = 0.0;
  std::vector<double> sigmas;
};

struct McemResult {
  CopulaWienerModel model;
  std::vector<McemIteration> trace;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Stops on a parameter change below tol, or once the monitored MC
/// log-likelihood (shared draws, evaluated at the current iterate) drops; the
/// returned model is then the preceding iterate.
McemResult fit_mcem(const Dataset& data, const CopulaWienerModel& init, const McemOptions& opts, const RngSpec& rng);

/// Scalar summary of the copula dependence (rho for p=2 gaussian, else theta).
double copula_parameter(const CopulaSpec& c);

enum class PassageMode { kAnyChannel, kAllChannels };

struct FirstPassageOptions {
  std::size_t n_mc = 10000;
  double t_max = 0.0;  // 0: choose from the sample
  std::size_t grid_points = 201;
};

struct FirstPassageResult {
  std::vector<double> grid;
  std::vector<double> cdf;
  double mean = 0.0;        // over finite passage times
  double std_error = 0.0;
  double prob_never = 0.0;  // fraction of paths that never cross
  std::vector<double> samples;
};

/// Monte Carlo first-passage distribution of the latent process. Given
/// omega the channels are independent Wiener processes in Lambda-time, so
/// each channel's passage level-time is drawn exactly from its (possibly
/// defective) inverse Gaussian law.
FirstPassageResult first_passage(const CopulaWienerModel& model, const Eigen::VectorXd& x,
                                 const std::vector<double>& thresholds, PassageMode mode,
                                 const FirstPassageOptions& opts, const RngSpec& rng);

/// Exact draw of the first time a Wiener process with drift `drift` and
/// scale `sigma` (started at 0) reaches `level` > 0; +inf if never.
double sample_passage_time(double drift, double sigma, double level, Rng& rng);

}  // namespace degkit::mvdeg
