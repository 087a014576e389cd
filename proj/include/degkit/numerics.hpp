#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace degkit::num {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_pdf(double z);
double normal_cdf(double z);
/// log Phi(z), accurate far into the lower tail.
double normal_logcdf(double z);
/// log(1 - Phi(z)), accurate far into the upper tail.
double normal_logsf(double z);
double normal_quantile(double p);

double log_sum_exp(std::span<const double> xs);

/// Gauss-Hermite rule for the weight exp(-x^2), via Golub-Welsch.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_hermite(int order);

/// Trapezoid weights on a strictly increasing grid.
Eigen::VectorXd trapezoid_weights(std::span<const double> grid);

/// Weighted pool-adjacent-violators fit (non-decreasing).
std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> w = {});

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimizer for the low-dimensional M-steps.
MinimizeResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& start, double step = 0.1, double tol = 1e-10,
                           int max_evals = 4000, double xtol = 1e-7);

/// Brent minimization on [lo, hi].
std::pair<double, double> brent_minimize(const std::function<double(double)>& f, double lo,
                                         double hi, int bits = 40);

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
double kolmogorov_sf(double lambda);

/// Kendall's tau-b, O(n log n) via merge sort inversion counting.
double kendall_tau(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> x);
double variance(std::span<const double> x);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots so the output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads = 1);

/// Process-wide default worker cap used when callers pass threads <= 0.
void set_default_threads(int threads);
int default_threads();

}  // namespace degkit::num
