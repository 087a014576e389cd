#include "degkit/bspline.hpp"

#include "degkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace degkit {

BSplineBasis::BSplineBasis(int degree, std::vector<double> interior_knots, double lo, double hi)
    : degree_(degree), lo_(lo), hi_(hi) {
  require(degree >= 0, "BSplineBasis: degree must be >= 0");
  require(hi > lo, "BSplineBasis: empty range");
  std::sort(interior_knots.begin(), interior_knots.end());
  for (double k : interior_knots)
    require(k > lo && k < hi, "BSplineBasis: interior knot outside (lo, hi)");
  knots_.assign(degree + 1, lo);
  knots_.insert(knots_.end(), interior_knots.begin(), interior_knots.end());
  knots_.insert(knots_.end(), degree + 1, hi);
}

BSplineBasis BSplineBasis::from_values(int degree, int num_interior_knots, KnotPlacement placement,
                                       std::span<const double> values) {
  require(!values.empty(), "BSplineBasis: no values to place knots");
  require(num_interior_knots >= 0, "BSplineBasis: negative knot count");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double lo = v.front(), hi = v.back();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> interior;
  for (int k = 1; k <= num_interior_knots; ++k) {
    const double frac = static_cast<double>(k) / (num_interior_knots + 1);
    double knot;
    if (placement == KnotPlacement::kUniform) {
      knot = lo + frac * (hi - lo);
    } else {
      const double pos = frac * static_cast<double>(v.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double f = pos - static_cast<double>(i);
      knot = i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
    }
    // Ties in the data can collapse quantiles; keep knots strictly inside and distinct.
    const double eps = 1e-9 * (hi - lo);
    knot = std::clamp(knot, lo + eps, hi - eps);
    if (!interior.empty() && knot <= interior.back() + eps) knot = interior.back() + eps;
    if (knot < hi - eps) interior.push_back(knot);
  }
  return BSplineBasis(degree, std::move(interior), lo, hi);
}

std::vector<double> BSplineBasis::interior_knots() const {
  return {knots_.begin() + degree_ + 1, knots_.end() - degree_ - 1};
}

Eigen::VectorXd BSplineBasis::eval(double x, OutOfRange mode) const {
  const int dim = dimension();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim);
  if (mode == OutOfRange::kClamp) x = std::clamp(x, lo_, hi_);
  // Span index s with knots[s] <= x < knots[s+1], restricted to valid spans.
  int s = degree_;
  const int last = static_cast<int>(knots_.size()) - degree_ - 2;
  if (x >= hi_) {
    s = last;
  } else if (x > lo_) {
    s = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
    s = std::clamp(s, degree_, last);
  }
  // Triangular recursion for the degree+1 basis functions that can be nonzero.
  std::vector<double> n(degree_ + 1, 0.0), left(degree_ + 1), right(degree_ + 1);
  n[0] = 1.0;
  for (int j = 1; j <= degree_; ++j) {
    left[j] = x - knots_[s + 1 - j];
    right[j] = knots_[s + j] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    n[j] = saved;
  }
  for (int j = 0; j <= degree_; ++j) out(s - degree_ + j) = n[j];
  return out;
}

Eigen::MatrixXd BSplineBasis::design(std::span<const double> xs, OutOfRange mode) const {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(xs.size()), dimension());
  for (std::size_t i = 0; i < xs.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = eval(xs[i], mode);
  return d;
}

Eigen::MatrixXd second_difference_penalty(int dim) {
  if (dim < 3) return Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(dim - 2, dim);
  for (int i = 0; i < dim - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d.transpose() * d;
}

}  // namespace degkit
