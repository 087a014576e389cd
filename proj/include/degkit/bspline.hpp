#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace degkit {

enum class KnotPlacement { kQuantile, kUniform };

/// Behaviour outside [lo, hi]: hold the boundary value, or continue the
/// boundary polynomial piece.
enum class OutOfRange { kClamp, kExtrapolate };

/// B-spline basis on [lo, hi] with clamped (repeated) boundary knots.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  BSplineBasis(int degree, std::vector<double> interior_knots, double lo, double hi);

  /// Interior knots at quantiles (or uniformly) of the supplied values.
  static BSplineBasis from_values(int degree, int num_interior_knots, KnotPlacement placement,
                                  std::span<const double> values);

  int degree() const { return degree_; }
  int dimension() const { return static_cast<int>(knots_.size()) - degree_ - 1; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const std::vector<double>& knots() const { return knots_; }
  std::vector<double> interior_knots() const;

  Eigen::VectorXd eval(double x, OutOfRange mode = OutOfRange::kClamp) const;
  /// Rows = points, columns = basis functions.
  Eigen::MatrixXd design(std::span<const double> xs, OutOfRange mode = OutOfRange::kClamp) const;

 private:
  int degree_ = 0;
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> knots_;
};

/// D'D for the second-difference operator on `dim` coefficients.
Eigen::MatrixXd second_difference_penalty(int dim);

}  // namespace degkit
