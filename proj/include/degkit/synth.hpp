#pragma once

#include "degkit/dataset.hpp"
#include "degkit/funcdata.hpp"
#include "degkit/io.hpp"
#include "degkit/mvdeg.hpp"
#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace degkit::synth {

/// Ground truth behind synth_fused_index. Channel numbers in `active` are
/// 1-based. The latent index is z = x_a + x_b^2 / 20 over the first two
/// active channels (further active channels enter linearly), evaluated on
/// the observed channel values.
struct FusedIndexTruth {
  std::vector<std::size_t> active;
  double threshold = 0.0;
  std::vector<std::vector<double>> latent_index;  // per unit, per time
  std::vector<double> crossing_time;              // noise-free crossing time per unit
};

struct FusedIndexSample {
  Dataset data;
  FusedIndexTruth truth;
};

/// Units whose active channels grow linearly at unit-specific rates; an
/// event fires at the noise-free crossing of the latent index threshold
/// (measured exactly then), about 30% of units are censored before
/// crossing, and inactive channels are independent standard normal noise.
FusedIndexSample synth_fused_index(std::size_t n, std::size_t p, const std::vector<std::size_t>& active,
                                   double noise_sd, const RngSpec& rng);

/// The latent index of the generator evaluated on arbitrary channel values.
double fused_index_value(const std::vector<std::size_t>& active, std::span<const double> channel_values);

struct CopulaWienerSample {
  Dataset data;
  Eigen::MatrixXd omega;  // n x p unit random effects
};

/// Exact forward simulation of the copula random-effects Wiener model on a
/// time grid that starts at 0. Covariates, if given, are per unit.
CopulaWienerSample synth_copula_wiener(const mvdeg::CopulaWienerModel& model, std::size_t n,
                                       const std::vector<double>& grid, const RngSpec& rng,
                                       const std::vector<Eigen::VectorXd>& covariates = {});

/// Curves mu(t) + a_i sqrt(2) sin(2 pi t) + b_i sqrt(2) cos(2 pi t) on a
/// uniform grid over [0, 1], a ~ N(0, var_a), b ~ N(0, var_b), plus white
/// noise. The KL truth is eigenvalues (var_a, var_b) with those two
/// eigenfunctions; a and b are the true scores.
struct FpcaSample {
  fda::FunctionalSample sample;
  Eigen::MatrixXd true_scores;        // n x 2
  Eigen::Vector2d true_eigenvalues;   // population values
  Eigen::MatrixXd true_eigenfunctions;  // G x 2
};
FpcaSample synth_fpca_rank2(std::size_t n, std::size_t grid_points, double var_a, double var_b, double noise_sd,
                            const RngSpec& rng);

/// Score-level mixture: `clusters` equal-sized groups (unit i in group
/// i mod clusters) separated in the first `informative` of `d` standard
/// normal coordinates, centres on a circle of radius `separation`.
struct ClusterScoresSample {
  Eigen::MatrixXd scores;
  std::vector<int> labels;
};
ClusterScoresSample synth_cluster_scores(std::size_t n, std::size_t d, std::size_t informative, int clusters,
                                         double separation, const RngSpec& rng);

/// Two-channel curves where the archetypes differ only in channel "A"
/// (amplitude of a bump); channel "B" is archetype-free.
struct ClusterCurvesSample {
  CurveTable table;
  std::vector<std::string> unit_ids;
  std::vector<int> labels;
};
ClusterCurvesSample synth_cluster_curves(std::size_t n, int archetypes, std::size_t grid_points, double noise_sd,
                                         const RngSpec& rng);

/// log T = beta0 + x'beta + w + sigma eps with w ~ N(0, sigma_w^2),
/// standard normal covariates and independent lognormal censoring whose
/// location is tuned to give roughly `censor_rate` censored units.
/// `active` holds (0-based column, coefficient) pairs.
struct LifetimeSample {
  SurvivalData data;
  double beta0 = 0.0;
  Eigen::VectorXd beta;
  double sigma = 0.0;
  double sigma_w = 0.0;
};
LifetimeSample synth_lifetime(std::size_t n, std::size_t p, const std::vector<std::pair<std::size_t, double>>& active,
                              double sigma, double sigma_w, double censor_rate, const RngSpec& rng);

/// Cumulative functional-covariate data: unit i has spectra x_i(lambda; t)
/// at t = 1..n_times on a lambda grid over [0, 1], and
/// y_ij = beta0 + sum_{t <= t_j} int psi(lambda) x_i(lambda; t) dlambda + e.
/// psi is a Gaussian bump.
struct FuncRegSample {
  std::vector<fda::FunctionalCovariate> covariates;
  Eigen::VectorXd y;                   // stacked by unit, then time
  std::vector<std::size_t> unit_of_row;
  std::vector<double> time_of_row;
  double beta0 = 0.0;
  std::vector<double> psi_truth;       // on the lambda grid
  std::vector<double> lambda_grid;
};
double funcreg_psi_truth(double lambda);
FuncRegSample synth_funcreg(std::size_t n, std::size_t n_times, std::size_t grid_points, double noise_sd,
                            const RngSpec& rng);

/// Images with iid standard normal pixels and responses from
/// B = sum_r u_r v_r' (identity link: y = alpha0 + <B, X> + noise;
/// log link: y ~ Poisson(exp(alpha0 + <B, X>)), or the mean itself when
/// noise_sd is zero).
struct TensorSample {
  std::vector<Eigen::MatrixXd> images;
  Eigen::VectorXd y;
  Eigen::MatrixXd B;
  double alpha0 = 0.0;
};
TensorSample synth_tensor(std::size_t n, int rows, int cols, int rank, bool log_link, double scale, double noise_sd,
                          const RngSpec& rng);

}  // namespace degkit::synth
