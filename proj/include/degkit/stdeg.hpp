#pragma once

#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace degkit::st {

enum class Boundary { kZeroFlux, kFixedValue };
std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// rows x cols cells; cell k = row * cols + col.
struct StGrid {
  int rows = 2;
  int cols = 2;
  double h = 1.0;
  Boundary boundary = Boundary::kZeroFlux;

  int m() const { return rows * cols; }
  void validate() const;
};

/// Five-point Laplacian on the grid, diagonalized through its 1-D factors.
/// Zero-flux mirrors the missing neighbour; fixed-value puts a ghost cell
/// holding the boundary series there.
class Laplacian {
 public:
  explicit Laplacian(const StGrid& grid);

  const StGrid& grid() const { return grid_; }
  /// Eigenvalues (<= 0) in the order used by to_eigen.
  const Eigen::VectorXd& eigenvalues() const { return lambda_; }
  double max_abs_eigenvalue() const { return -lambda_.minCoeff(); }
  /// Number of ghost neighbours per cell (all zero for zero-flux).
  const Eigen::VectorXd& ghost_counts() const { return ghost_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& u) const;
  Eigen::VectorXd to_eigen(const Eigen::VectorXd& u) const;
  Eigen::VectorXd from_eigen(const Eigen::VectorXd& x) const;
  /// Dense matrix, for oracles and small grids.
  Eigen::MatrixXd dense() const;

 private:
  StGrid grid_;
  Eigen::MatrixXd vr_, vc_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd ghost_;
};

/// Stable range of alpha for M = I + alpha L: [0, 2 / max |eig L|].
double alpha_max(const Laplacian& lap);

struct StModel {
  double alpha = 0.1;
  double q = 0.05;
  double r = 0.2;
  Eigen::VectorXd mu0;  // m entries, or one entry broadcast
  double s0 = 0.0;      // Sigma0 = s0 I
  int tau = 30;
  std::vector<double> boundary_series;  // b_t for fixed-value grids; last value held

  void validate(const Laplacian& lap) const;
  double boundary_at(int t) const;
  Eigen::VectorXd mean0(int m) const;
};

/// One state step U_t = M U_{t-1} + M^(b) b_{t-1}, before the innovation.
Eigen::VectorXd propagate(const Laplacian& lap, double alpha, const Eigen::VectorXd& u, double boundary_value);

struct StField {
  Eigen::MatrixXd D;  // (tau + 1) x m, rows t = 0..tau
  Eigen::MatrixXd U;  // latent truth, same shape
};

StField simulate_field(const StModel& model, const StGrid& grid, const RngSpec& rng);

struct StPriors {
  double q_shape = 0.01, q_scale = 0.01;  // inverse-gamma
  double r_shape = 0.01, r_scale = 0.01;
  double alpha_mean = 0.0;  // Gaussian truncated to the stable range
  double alpha_sd = 1.0;
  double mu0 = 0.0;
  double s0 = 100.0;
  bool fix_r = false;       // hold r at r_fixed
  double r_fixed = 0.0;
};

struct GibbsOptions {
  int iters = 4000;
  int burn_in = 1000;
  int chains = 1;
  int threads = 1;
  bool keep_latent = false;
  bool fix_alpha = false;  // hold alpha at init_alpha
  bool fix_q = false;      // hold q at init_q
  double init_alpha = -1.0;  // < 0: middle of the prior range
  double init_q = -1.0;      // < 0: from data
  double init_r = -1.0;
  std::vector<double> boundary_series;
};

struct ChainDiagnostics {
  double acceptance = 0.0;
  double step = 0.0;
  double ess_alpha = 0.0, ess_q = 0.0, ess_r = 0.0;
};

struct StPosterior {
  StGrid grid;
  int tau = 0;
  std::vector<double> boundary_series;
  std::vector<double> alpha, q, r;   // kept draws, chains concatenated
  Eigen::MatrixXd U_last;            // kept draws x m
  Eigen::MatrixXd U_mean, U_var;     // (tau + 1) x m
  std::vector<Eigen::MatrixXd> latent;  // per draw, when kept
  std::vector<ChainDiagnostics> chains;
  std::vector<std::string> warnings;

  std::size_t draws() const { return alpha.size(); }
};

/// Gibbs sampler: FFBS for U_0..U_tau, conjugate inverse-gamma updates for
/// q and r, random-walk Metropolis for alpha (adapted during burn-in only).
StPosterior gibbs_fit(const Eigen::MatrixXd& D, const StGrid& grid, const StPriors& priors, const GibbsOptions& opts,
                      const RngSpec& rng);

/// One FFBS draw of U_0..U_tau given the parameters (exposed for testing).
Eigen::MatrixXd ffbs_draw(const Eigen::MatrixXd& D, const Laplacian& lap, double alpha, double q, double r,
                          const Eigen::VectorXd& mu0, double s0, const std::vector<double>& boundary, Rng& rng);

/// Effective sample size by the initial positive sequence estimator.
double effective_sample_size(const std::vector<double>& x);

enum class FailureRule { kMaxExceeds, kAreaAbove };
std::string to_string(FailureRule r);
FailureRule failure_rule_from_string(const std::string& s);

struct FailureSpec {
  FailureRule rule = FailureRule::kMaxExceeds;
  double threshold = 1.0;  // D_f, or the degradation level for the area rule
  double area = 1.0;       // A_f (cell area h^2 per cell)
};

struct FailureCdf {
  std::vector<int> times;  // tau + 1 .. horizon
  std::vector<double> cdf;
  double prob_never = 0.0;
  std::size_t n_mc = 0;
};

/// Failure is read off the latent field. Path p uses draw p mod draws and
/// its own random stream, so different rules see the same paths.
FailureCdf predict_failure(const StPosterior& post, const FailureSpec& spec, int horizon, std::size_t n_mc,
                           const RngSpec& rng, int threads = 1);

}  // namespace degkit::st
