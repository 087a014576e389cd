#pragma once

#include "degkit/bspline.hpp"
#include "degkit/io.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace degkit::fda {

/// n curves sampled on a common grid. Rows of `curves` are curves.
struct FunctionalSample {
  std::vector<double> grid;
  Eigen::MatrixXd curves;
  std::string channel;
  std::vector<std::string> unit_ids;

  std::size_t n() const { return static_cast<std::size_t>(curves.rows()); }
  void validate() const;
};

/// Karhunen-Loeve basis. Every nonnegative component is kept; `L` marks the
/// truncation chosen by the variance threshold.
struct FpcaBasis {
  std::vector<double> grid;
  Eigen::VectorXd weights;         // trapezoid weights on grid
  Eigen::VectorXd mean;
  Eigen::MatrixXd eigenfunctions;  // grid x components
  Eigen::VectorXd eigenvalues;     // non-increasing
  Eigen::MatrixXd scores;          // n x components
  int L = 1;
  double var_threshold = 0.95;
  double var_explained = 1.0;
  std::string channel;
  std::vector<std::string> unit_ids;

  int components() const { return static_cast<int>(eigenvalues.size()); }
  /// Scores of a new curve on the first `l` components (l < 0: all).
  Eigen::VectorXd project(const Eigen::VectorXd& curve, int l = -1) const;
  /// Leading L score columns.
  Eigen::MatrixXd truncated_scores() const { return scores.leftCols(L); }
};

FpcaBasis fpca(const FunctionalSample& sample, double var_threshold = 0.95);

/// Mean plus the first `l` score-weighted eigenfunctions (l < 0: use basis.L).
Eigen::VectorXd reconstruct(const FpcaBasis& basis, std::size_t i, int l = -1);

/// Groups a curves table into one sample per channel; each (unit, time)
/// record becomes a row. Grids must agree within a channel.
std::vector<FunctionalSample> samples_from_table(const CurveTable& table);

// ---------------------------------------------------------------------------
// Longitudinal functional model Y_ij(s) = mu(s, t_ij) + sum_k xi_ik(t_ij) psi_k(s) + e_ij(s).

struct LongFuncUnit {
  std::string unit_id;
  std::vector<double> times;  // increasing
  Eigen::MatrixXd curves;     // times x grid
};

struct LongFuncData {
  std::vector<double> grid;
  std::vector<LongFuncUnit> units;
  void validate() const;
};

/// Non-decreasing fit on the observed times with a linear tail after the last one.
struct MonotoneTrend {
  std::vector<double> times;
  std::vector<double> fitted;
  double tail_slope = 0.0;
  double operator()(double t) const;
};

struct LongFuncModel {
  std::vector<double> grid;
  Eigen::VectorXd weights;
  BSplineBasis time_basis;
  Eigen::MatrixXd mean_coef;  // time basis dim x grid
  Eigen::MatrixXd psi;        // grid x K
  Eigen::VectorXd eigenvalues;
  double orientation = 1.0;   // sign making the leading trajectory increase
  double t_ref = 0.0;
  double residual_sd = 0.0;
  std::vector<std::string> unit_ids;
  std::vector<std::vector<double>> times;
  std::vector<Eigen::MatrixXd> scores;  // per unit: times x K
  std::vector<MonotoneTrend> trends;    // leading trajectory per unit

  int K() const { return static_cast<int>(psi.cols()); }
  Eigen::VectorXd mean_at(double t) const;
  /// Leading-direction drift of the mean surface relative to t_ref.
  double mean_drift(double t) const;
  /// Score path of unit i at time t: leading score from the monotone trend,
  /// the others held at their last observed value.
  Eigen::VectorXd scores_at(std::size_t i, double t) const;
  Eigen::VectorXd predict(std::size_t i, double t) const;
};

LongFuncModel fit_longfunc(const LongFuncData& data, int K);

/// Builds longitudinal data from a curves table (one channel).
LongFuncData longfunc_from_table(const CurveTable& table, const std::string& channel = "");

// ---------------------------------------------------------------------------
// Cumulative functional covariate design.

/// x_i(lambda; t) for one unit: rows = times, columns = lambda grid.
struct FunctionalCovariate {
  std::string unit_id;
  std::vector<double> grid;
  std::vector<double> times;
  Eigen::MatrixXd values;
};

/// B-spline basis of dimension m on [lo, hi]; degree min(3, m - 1), uniform knots.
BSplineBasis psi_basis(double lo, double hi, int m);

/// Row j = sum over steps k <= j of the quadrature integral of phi_b(lambda) x(lambda; t_k).
Eigen::MatrixXd functional_covariate_design(const FunctionalCovariate& x, const BSplineBasis& basis);
Eigen::MatrixXd functional_covariate_design(const FunctionalCovariate& x, int m);

}  // namespace degkit::fda
