#pragma once

#include "degkit/bspline.hpp"
#include "degkit/dataset.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace degkit::index {

struct SplineSpec {
  int degree = 3;
  int num_interior_knots = 5;
  KnotPlacement placement = KnotPlacement::kQuantile;
};

/// Surcharge applied to a decrease x = z(t_{k-1}) - z(t_k):
/// kAsWritten charges x + c when x > 0 (discontinuous at 0);
/// kHinge charges max(x + c, 0).
enum class MonoPenalty { kAsWritten, kHinge };

/// Additive spline index z(t) = sum_j f_j(x_j(t)); each f_j is a B-spline
/// expansion centred to mean zero over the training values of channel j.
struct DegIndexModel {
  std::vector<std::string> channel_names;
  SplineSpec spline;
  std::vector<BSplineBasis> bases;
  std::vector<Eigen::VectorXd> centers;
  std::vector<Eigen::VectorXd> beta;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double c = 0.01;
  MonoPenalty mono = MonoPenalty::kAsWritten;
  double zbar = 1.0;
  std::vector<std::size_t> selected;  // 0-based channels with nonzero blocks
  std::vector<double> objective_trace;
  bool converged = false;
  bool feasible = true;
  int sweeps = 0;

  std::size_t p() const { return beta.size(); }
  double contribution(std::size_t j, double x) const;
  void refresh_selected();
};

/// Builds bases and centring from the data with all coefficients zero.
DegIndexModel make_model(const Dataset& data, const SplineSpec& spline);

std::vector<double> eval_index(const DegIndexModel& model, const UnitRecord& unit);

struct ObjectiveParts {
  double loss = 0.0;
  double group_penalty = 0.0;
  double mono_penalty = 0.0;
  double total() const { return loss + group_penalty + mono_penalty; }
};

/// Loss uses the fixed anchor zbar = 1.
ObjectiveParts objective(const DegIndexModel& model, const Dataset& data);

double mono_surcharge(double decrease, double c, MonoPenalty variant);

struct FitOptions {
  int max_sweeps = 500;
  double tol = 1e-9;
  int max_halvings = 30;
  int inner_steps = 10;  // proximal steps per block per sweep
  double ridge_init = 1e-3;
  MonoPenalty mono = MonoPenalty::kAsWritten;
};

DegIndexModel fit_index(const Dataset& data, const SplineSpec& spline, double lambda1, double lambda2, double c,
                        const FitOptions& opts = {}, const DegIndexModel* warm_start = nullptr);

struct TuningRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double loss = 0.0;
  std::size_t df = 0;
  double bic = 0.0;
  bool feasible = true;
  std::size_t num_selected = 0;
};

struct TuningResult {
  DegIndexModel model;
  std::vector<TuningRow> table;
  std::size_t best = 0;
};

/// Default grid: lambda1 in {0, 0.01, 0.03, ..., 10} (half-decade steps) with lambda2 = 1.
std::vector<std::pair<double, double>> default_grid();

/// Fits every grid point (warm-started along increasing lambda1) and picks
/// the minimum of n_e log(loss / n_e) + df log(n_e). Fits with df >= n_e - 1
/// are scored +inf; the loss is floored at 1e-10 n_e.
TuningResult select_tuning(const Dataset& data, const SplineSpec& spline,
                           const std::vector<std::pair<double, double>>& grid, double c,
                           const FitOptions& opts = {});

/// Count of consecutive decreases larger than tol over all units.
std::size_t count_violations(const DegIndexModel& model, const Dataset& data, double tol = 1e-8);

}  // namespace degkit::index
