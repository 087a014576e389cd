#include "degkit/funcdata.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace degkit::fda {

namespace {

void check_grid(const std::vector<double>& grid, const char* what) {
  require(grid.size() >= 2, std::string(what) + ": grid needs at least 2 points");
  for (std::size_t g = 1; g < grid.size(); ++g)
    require(grid[g] > grid[g - 1], std::string(what) + ": grid must be strictly increasing");
}

// Eigenpairs of the weighted operator, largest first, as L2(W)-orthonormal functions.
void weighted_eigen(const Eigen::MatrixXd& cov, const Eigen::VectorXd& w, Eigen::Index keep,
                    Eigen::VectorXd& values, Eigen::MatrixXd& functions) {
  const Eigen::VectorXd sw = w.array().sqrt();
  Eigen::MatrixXd m = sw.asDiagonal() * cov * sw.asDiagonal();
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::Index g = m.rows();
  values.resize(keep);
  functions.resize(g, keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    values(k) = std::max(eig.eigenvalues()(g - 1 - k), 0.0);
    Eigen::VectorXd f = eig.eigenvectors().col(g - 1 - k).array() / sw.array();
    Eigen::Index arg = 0;
    f.cwiseAbs().maxCoeff(&arg);
    if (f(arg) < 0.0) f = -f;
    functions.col(k) = f;
  }
}

}  // namespace

void FunctionalSample::validate() const {
  check_grid(grid, "FunctionalSample");
  require(curves.cols() == static_cast<Eigen::Index>(grid.size()), "FunctionalSample: curve length != grid length");
  require(curves.allFinite(), "FunctionalSample: missing or non-finite values");
  require(unit_ids.empty() || unit_ids.size() == n(), "FunctionalSample: unit_ids size mismatch");
}

Eigen::VectorXd FpcaBasis::project(const Eigen::VectorXd& curve, int l) const {
  require(curve.size() == mean.size(), "project: curve length != grid length");
  const int k = l < 0 ? components() : std::min(l, components());
  const Eigen::VectorXd centered = (curve - mean).cwiseProduct(weights);
  return eigenfunctions.leftCols(k).transpose() * centered;
}

FpcaBasis fpca(const FunctionalSample& sample, double var_threshold) {
  sample.validate();
  require(var_threshold > 0.0 && var_threshold <= 1.0, "fpca: var_threshold must be in (0, 1]");
  require(sample.n() >= 2, "fpca: need at least 2 curves");
  const Eigen::Index n = sample.curves.rows();
  FpcaBasis b;
  b.grid = sample.grid;
  b.channel = sample.channel;
  b.unit_ids = sample.unit_ids;
  b.var_threshold = var_threshold;
  b.weights = num::trapezoid_weights(sample.grid);
  b.mean = sample.curves.colwise().mean().transpose();
  Eigen::MatrixXd centered = sample.curves.rowwise() - b.mean.transpose();
  // Columns that are constant across curves are centered exactly.
  for (Eigen::Index g = 0; g < centered.cols(); ++g) {
    if ((sample.curves.col(g).array() == sample.curves(0, g)).all()) {
      b.mean(g) = sample.curves(0, g);
      centered.col(g).setZero();
    }
  }
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  const Eigen::Index keep = std::min<Eigen::Index>(n - 1, cov.rows());
  weighted_eigen(cov, b.weights, keep, b.eigenvalues, b.eigenfunctions);
  b.scores = centered * b.weights.asDiagonal() * b.eigenfunctions;

  const double total = (cov.diagonal().array() * b.weights.array()).sum();
  if (!(total > 1e-300) || b.eigenvalues.sum() <= 0.0) {
    b.L = 1;
    b.var_explained = 1.0;
    return b;
  }
  double cum = 0.0;
  b.L = static_cast<int>(keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    cum += b.eigenvalues(k);
    if (cum / total >= var_threshold - 1e-12) {
      b.L = static_cast<int>(k + 1);
      break;
    }
  }
  double head = 0.0;
  for (int k = 0; k < b.L; ++k) head += b.eigenvalues(k);
  b.var_explained = std::min(1.0, head / total);
  if (b.var_explained <= 0.0) b.var_explained = 1.0;
  return b;
}

Eigen::VectorXd reconstruct(const FpcaBasis& basis, std::size_t i, int l) {
  require(i < static_cast<std::size_t>(basis.scores.rows()), "reconstruct: unit index out of range");
  const int k = std::min(l < 0 ? basis.L : l, basis.components());
  const Eigen::Index row = static_cast<Eigen::Index>(i);
  return basis.mean + basis.eigenfunctions.leftCols(k) * basis.scores.row(row).head(k).transpose();
}

std::vector<FunctionalSample> samples_from_table(const CurveTable& table) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CurveRecord*>> by_channel;
  for (const auto& c : table.curves) {
    if (!by_channel.count(c.channel)) order.push_back(c.channel);
    by_channel[c.channel].push_back(&c);
  }
  std::vector<FunctionalSample> out;
  for (const auto& ch : order) {
    const auto& recs = by_channel[ch];
    FunctionalSample s;
    s.channel = ch;
    s.grid = recs.front()->args;
    s.curves.resize(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(s.grid.size()));
    for (std::size_t r = 0; r < recs.size(); ++r) {
      if (recs[r]->args != s.grid)
        throw InputError("curves: unit '" + recs[r]->unit_id + "' has a different grid in channel '" + ch + "'");
      for (std::size_t g = 0; g < s.grid.size(); ++g)
        s.curves(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(g)) = recs[r]->values[g];
      s.unit_ids.push_back(recs[r]->unit_id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

void LongFuncData::validate() const {
  check_grid(grid, "fit_longfunc");
  require(!units.empty(), "fit_longfunc: no units");
  for (const auto& u : units) {
    require(u.times.size() >= 3, "fit_longfunc: unit '" + u.unit_id + "' has fewer than 3 observation times");
    require(u.curves.rows() == static_cast<Eigen::Index>(u.times.size()),
            "fit_longfunc: unit '" + u.unit_id + "' curve count != time count");
    require(u.curves.cols() == static_cast<Eigen::Index>(grid.size()),
            "fit_longfunc: unit '" + u.unit_id + "' is not on the common grid");
    require(u.curves.allFinite(), "fit_longfunc: non-finite curve values");
    for (std::size_t k = 1; k < u.times.size(); ++k)
      require(u.times[k] > u.times[k - 1], "fit_longfunc: times must be strictly increasing");
  }
}

double MonotoneTrend::operator()(double t) const {
  if (times.empty()) return 0.0;
  if (t <= times.front()) return fitted.front();
  if (t >= times.back()) return fitted.back() + tail_slope * (t - times.back());
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double u = (t - times[k - 1]) / (times[k] - times[k - 1]);
  return fitted[k - 1] + u * (fitted[k] - fitted[k - 1]);
}

Eigen::VectorXd LongFuncModel::mean_at(double t) const {
  return mean_coef.transpose() * time_basis.eval(t, OutOfRange::kExtrapolate);
}

double LongFuncModel::mean_drift(double t) const {
  if (psi.cols() == 0) return 0.0;
  const Eigen::VectorXd d = (mean_at(t) - mean_at(t_ref)).cwiseProduct(weights);
  return psi.col(0).dot(d);
}

Eigen::VectorXd LongFuncModel::scores_at(std::size_t i, double t) const {
  require(i < scores.size(), "scores_at: unit index out of range");
  const auto& ts = times[i];
  const Eigen::MatrixXd& sc = scores[i];
  Eigen::VectorXd out(sc.cols());
  const std::size_t last = ts.size() - 1;
  for (Eigen::Index k = 1; k < sc.cols(); ++k) {
    if (t >= ts[last]) {
      out(k) = sc(static_cast<Eigen::Index>(last), k);
    } else if (t <= ts[0]) {
      out(k) = sc(0, k);
    } else {
      const auto j = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
      const double u = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
      out(k) = (1.0 - u) * sc(static_cast<Eigen::Index>(j - 1), k) + u * sc(static_cast<Eigen::Index>(j), k);
    }
  }
  if (sc.cols() > 0) out(0) = orientation * trends[i](t) - mean_drift(t);
  return out;
}

Eigen::VectorXd LongFuncModel::predict(std::size_t i, double t) const {
  return mean_at(t) + psi * scores_at(i, t);
}

LongFuncModel fit_longfunc(const LongFuncData& data, int K) {
  data.validate();
  require(K >= 1, "fit_longfunc: K must be >= 1");
  require(K <= static_cast<int>(data.grid.size()), "fit_longfunc: K exceeds the grid length");
  LongFuncModel m;
  m.grid = data.grid;
  m.weights = num::trapezoid_weights(data.grid);

  std::vector<double> all_t;
  Eigen::Index total = 0;
  for (const auto& u : data.units) {
    all_t.insert(all_t.end(), u.times.begin(), u.times.end());
    total += u.curves.rows();
  }
  std::vector<double> distinct = all_t;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const int nd = static_cast<int>(distinct.size());
  const int degree = std::min(3, nd - 1);
  const int interior = std::clamp(nd - degree - 1, 0, 4);
  m.time_basis = BSplineBasis::from_values(degree, interior, KnotPlacement::kQuantile, all_t);
  m.t_ref = distinct.front();

  const Eigen::Index G = static_cast<Eigen::Index>(data.grid.size());
  Eigen::MatrixXd y(total, G);
  Eigen::Index row = 0;
  for (const auto& u : data.units) {
    y.middleRows(row, u.curves.rows()) = u.curves;
    row += u.curves.rows();
  }
  const Eigen::MatrixXd bt = m.time_basis.design(all_t);
  Eigen::MatrixXd btb = bt.transpose() * bt;
  const double rho = 1e-8 * std::max(btb.trace() / static_cast<double>(btb.rows()), 1e-12);
  btb += rho * second_difference_penalty(static_cast<int>(btb.rows()));
  btb.diagonal().array() += 1e-12 * std::max(btb.trace() / static_cast<double>(btb.rows()), 1e-12);
  m.mean_coef = btb.ldlt().solve(bt.transpose() * y);

  const Eigen::MatrixXd resid = y - bt * m.mean_coef;
  const Eigen::MatrixXd cov = resid.transpose() * resid / static_cast<double>(total);
  weighted_eigen(cov, m.weights, K, m.eigenvalues, m.psi);
  const Eigen::MatrixXd sc = resid * m.weights.asDiagonal() * m.psi;
  const Eigen::MatrixXd fit_err = resid - sc * m.psi.transpose();
  m.residual_sd = std::sqrt(fit_err.squaredNorm() / static_cast<double>(fit_err.size()));

  // Leading trajectory including the mean drift; orient it to increase.
  std::vector<std::vector<double>> lead(data.units.size());
  double rise = 0.0;
  row = 0;
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    const auto& u = data.units[i];
    m.unit_ids.push_back(u.unit_id);
    m.times.push_back(u.times);
    m.scores.push_back(sc.middleRows(row, u.curves.rows()));
    row += u.curves.rows();
    for (std::size_t j = 0; j < u.times.size(); ++j)
      lead[i].push_back(m.scores.back()(static_cast<Eigen::Index>(j), 0) + m.mean_drift(u.times[j]));
    rise += lead[i].back() - lead[i].front();
  }
  m.orientation = rise < 0.0 ? -1.0 : 1.0;
  for (std::size_t i = 0; i < data.units.size(); ++i) {
    for (double& v : lead[i]) v *= m.orientation;
    MonotoneTrend tr;
    tr.times = m.times[i];
    tr.fitted = num::isotonic_increasing(lead[i]);
    const std::size_t n = tr.times.size(), k = std::min<std::size_t>(3, n);
    double tm = 0.0, fm = 0.0;
    for (std::size_t j = n - k; j < n; ++j) {
      tm += tr.times[j] / static_cast<double>(k);
      fm += tr.fitted[j] / static_cast<double>(k);
    }
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t j = n - k; j < n; ++j) {
      sxy += (tr.times[j] - tm) * (tr.fitted[j] - fm);
      sxx += (tr.times[j] - tm) * (tr.times[j] - tm);
    }
    tr.tail_slope = sxx > 0.0 ? std::max(0.0, sxy / sxx) : 0.0;
    m.trends.push_back(std::move(tr));
  }
  return m;
}

LongFuncData longfunc_from_table(const CurveTable& table, const std::string& channel) {
  std::string ch = channel;
  if (ch.empty()) {
    require(!table.curves.empty(), "curves: empty table");
    ch = table.curves.front().channel;
  }
  LongFuncData d;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<const CurveRecord*>> recs;
  for (const auto& c : table.curves) {
    if (c.channel != ch) continue;
    if (d.grid.empty()) d.grid = c.args;
    if (c.args != d.grid) throw InputError("curves: unit '" + c.unit_id + "' is not on the common grid");
    auto [it, fresh] = index.emplace(c.unit_id, d.units.size());
    if (fresh) {
      d.units.push_back({c.unit_id, {}, {}});
      recs.emplace_back();
    }
    recs[it->second].push_back(&c);
  }
  require(!d.units.empty(), "curves: no records for channel '" + ch + "'");
  for (std::size_t i = 0; i < d.units.size(); ++i) {
    auto& r = recs[i];
    std::stable_sort(r.begin(), r.end(), [](auto a, auto b) { return a->time < b->time; });
    auto& u = d.units[i];
    u.curves.resize(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(d.grid.size()));
    for (std::size_t j = 0; j < r.size(); ++j) {
      u.times.push_back(r[j]->time);
      u.curves.row(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::RowVectorXd>(
          r[j]->values.data(), static_cast<Eigen::Index>(r[j]->values.size()));
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

BSplineBasis psi_basis(double lo, double hi, int m) {
  require(m >= 1, "psi_basis: dimension must be >= 1");
  require(hi > lo, "psi_basis: empty range");
  const int degree = std::min(3, m - 1);
  const int interior = m - degree - 1;
  std::vector<double> knots;
  for (int k = 1; k <= interior; ++k) knots.push_back(lo + (hi - lo) * k / (interior + 1));
  return BSplineBasis(degree, knots, lo, hi);
}

Eigen::MatrixXd functional_covariate_design(const FunctionalCovariate& x, const BSplineBasis& basis) {
  require(!x.grid.empty(), "functional_covariate_design: empty lambda grid");
  require(x.values.rows() == static_cast<Eigen::Index>(x.times.size()),
          "functional_covariate_design: row count != time count");
  require(x.values.cols() == static_cast<Eigen::Index>(x.grid.size()),
          "functional_covariate_design: column count != grid length");
  for (std::size_t k = 1; k < x.times.size(); ++k)
    require(x.times[k] > x.times[k - 1], "functional_covariate_design: times must be increasing");
  const Eigen::VectorXd w =
      x.grid.size() >= 2 ? num::trapezoid_weights(x.grid) : Eigen::VectorXd::Zero(1);
  const Eigen::MatrixXd phi = basis.design(x.grid);
  Eigen::MatrixXd rows = x.values * w.asDiagonal() * phi;
  for (Eigen::Index r = 1; r < rows.rows(); ++r) rows.row(r) += rows.row(r - 1);
  return rows;
}

Eigen::MatrixXd functional_covariate_design(const FunctionalCovariate& x, int m) {
  require(!x.grid.empty(), "functional_covariate_design: empty lambda grid");
  const double lo = x.grid.front(), hi = x.grid.size() > 1 ? x.grid.back() : x.grid.front() + 1.0;
  return functional_covariate_design(x, psi_basis(lo, hi, m));
}

}  // namespace degkit::fda
