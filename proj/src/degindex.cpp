#include "degkit/degindex.hpp"

#include "degkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace degkit::index {

double DegIndexModel::contribution(std::size_t j, double x) const {
  if (beta[j].size() == 0) return 0.0;
  return (bases[j].eval(x) - centers[j]).dot(beta[j]);
}

void DegIndexModel::refresh_selected() {
  selected.clear();
  for (std::size_t j = 0; j < beta.size(); ++j)
    if (beta[j].cwiseAbs().maxCoeff() > 0.0) selected.push_back(j);
}

DegIndexModel make_model(const Dataset& data, const SplineSpec& spline) {
  data.validate();
  require(spline.degree >= 1, "spline degree must be >= 1");
  require(spline.num_interior_knots >= 0, "spline interior knot count must be >= 0");
  DegIndexModel m;
  m.channel_names = data.channel_names;
  m.spline = spline;
  for (std::size_t j = 0; j < data.p(); ++j) {
    std::vector<double> vals;
    for (const auto& u : data.units) vals.insert(vals.end(), u.channels[j].begin(), u.channels[j].end());
    m.bases.push_back(BSplineBasis::from_values(spline.degree, spline.num_interior_knots, spline.placement, vals));
    Eigen::VectorXd center = Eigen::VectorXd::Zero(m.bases.back().dimension());
    for (double v : vals) center += m.bases.back().eval(v);
    m.centers.push_back(center / static_cast<double>(vals.size()));
    m.beta.push_back(Eigen::VectorXd::Zero(m.bases.back().dimension()));
  }
  return m;
}

namespace {

std::vector<std::size_t> channel_map(const DegIndexModel& model, const UnitRecord& unit,
                                     const std::vector<std::string>& names) {
  require(unit.channels.size() == names.size(), "eval_index: unit channel count mismatch");
  std::vector<std::size_t> map(model.p());
  for (std::size_t j = 0; j < model.p(); ++j) {
    const auto it = std::find(names.begin(), names.end(), model.channel_names[j]);
    if (it == names.end()) throw Error("eval_index: channel " + model.channel_names[j] + " missing from data");
    map[j] = static_cast<std::size_t>(it - names.begin());
  }
  return map;
}

std::vector<double> eval_mapped(const DegIndexModel& model, const UnitRecord& unit,
                                const std::vector<std::size_t>& map) {
  std::vector<double> z(unit.times.size(), 0.0);
  for (std::size_t j = 0; j < model.p(); ++j) {
    if (model.beta[j].cwiseAbs().maxCoeff() == 0.0) continue;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += model.contribution(j, unit.channels[map[j]][k]);
  }
  return z;
}

}  // namespace

std::vector<double> eval_index(const DegIndexModel& model, const UnitRecord& unit) {
  require(unit.channels.size() >= model.p(), "eval_index: unit has fewer channels than the model");
  std::vector<std::size_t> map(model.p());
  std::iota(map.begin(), map.end(), 0);
  require(unit.channels.size() == model.p(), "eval_index: channel mismatch");
  return eval_mapped(model, unit, map);
}

double mono_surcharge(double x, double c, MonoPenalty variant) {
  if (variant == MonoPenalty::kHinge) return std::max(x + c, 0.0);
  return x > 0.0 ? x + c : 0.0;
}

ObjectiveParts objective(const DegIndexModel& model, const Dataset& data) {
  require(data.num_events() >= 1, "objective undefined: no event units");
  ObjectiveParts parts;
  for (const auto& u : data.units) {
    const auto z = eval_mapped(model, u, channel_map(model, u, data.channel_names));
    if (u.event_indicator == 1) parts.loss += (z.back() - model.zbar) * (z.back() - model.zbar);
    for (std::size_t k = 1; k < z.size(); ++k) parts.mono_penalty += mono_surcharge(z[k - 1] - z[k], model.c, model.mono);
  }
  for (const auto& b : model.beta) parts.group_penalty += b.norm();
  parts.group_penalty *= model.lambda1;
  parts.mono_penalty *= model.lambda2;
  return parts;
}

namespace {

// Per-channel design blocks: centred basis rows at event times, and
// differences of consecutive rows (z_{k-1} - z_k).
struct Blocks {
  std::vector<Eigen::MatrixXd> event;
  std::vector<Eigen::MatrixXd> diff;
};

Blocks build_blocks(const DegIndexModel& m, const Dataset& data) {
  std::size_t n_e = data.num_events(), n_d = 0;
  for (const auto& u : data.units) n_d += u.times.empty() ? 0 : u.times.size() - 1;
  Blocks b;
  for (std::size_t j = 0; j < m.p(); ++j) {
    const int d = m.bases[j].dimension();
    Eigen::MatrixXd ev(n_e, d), df(n_d, d);
    std::size_t re = 0, rd = 0;
    for (const auto& u : data.units) {
      Eigen::RowVectorXd prev;
      for (std::size_t k = 0; k < u.times.size(); ++k) {
        const Eigen::RowVectorXd row = (m.bases[j].eval(u.channels[j][k]) - m.centers[j]).transpose();
        if (k > 0) df.row(rd++) = prev - row;
        prev = row;
      }
      if (u.event_indicator == 1) ev.row(re++) = prev;
    }
    b.event.push_back(std::move(ev));
    b.diff.push_back(std::move(df));
  }
  return b;
}

Eigen::VectorXd prox_group(const Eigen::VectorXd& v, double t) {
  const double nv = v.norm();
  if (nv <= t) return Eigen::VectorXd::Zero(v.size());
  return (1.0 - t / nv) * v;
}

struct State {
  Eigen::VectorXd ze, zd;
  std::vector<double> norms;
};

double total(const State& s, const DegIndexModel& m) {
  double f = (s.ze.array() - 1.0).square().sum();
  double g = 0.0;
  for (double v : s.norms) g += v;
  double mono = 0.0;
  for (Eigen::Index r = 0; r < s.zd.size(); ++r) mono += mono_surcharge(s.zd(r), m.c, m.mono);
  return f + m.lambda1 * g + m.lambda2 * mono;
}

State make_state(const DegIndexModel& m, const Blocks& b) {
  State s;
  s.ze = Eigen::VectorXd::Zero(b.event.front().rows());
  s.zd = Eigen::VectorXd::Zero(b.diff.front().rows());
  for (std::size_t j = 0; j < m.p(); ++j) {
    s.ze += b.event[j] * m.beta[j];
    s.zd += b.diff[j] * m.beta[j];
    s.norms.push_back(m.beta[j].norm());
  }
  return s;
}

// Rescales every block so the mean event-time index is one.
bool project(DegIndexModel& m, const Blocks& b) {
  State s = make_state(m, b);
  const double zbar = s.ze.mean();
  if (!(zbar > 1e-12)) return false;
  for (auto& v : m.beta) v /= zbar;
  return true;
}

}  // namespace

DegIndexModel fit_index(const Dataset& data, const SplineSpec& spline, double lambda1, double lambda2, double c,
                        const FitOptions& opts, const DegIndexModel* warm_start) {
  require(lambda1 >= 0.0 && lambda2 >= 0.0, "fit_index: lambdas must be >= 0");
  require(c >= 0.0, "fit_index: c must be >= 0");
  require(data.num_events() >= 1, "fit_index: need at least one event unit");
  DegIndexModel m = make_model(data, spline);
  m.lambda1 = lambda1;
  m.lambda2 = lambda2;
  m.c = c;
  m.mono = opts.mono;
  const Blocks blocks = build_blocks(m, data);
  const std::size_t p = m.p();

  if (warm_start && warm_start->p() == p && warm_start->feasible) {
    for (std::size_t j = 0; j < p; ++j)
      if (warm_start->beta[j].size() == m.beta[j].size()) m.beta[j] = warm_start->beta[j];
  }
  bool have_start = false;
  for (const auto& bj : m.beta) have_start = have_start || bj.cwiseAbs().maxCoeff() > 0.0;
  if (!have_start) {
    // Ridge solution of the anchored least-squares problem.
    Eigen::Index dim = 0;
    for (const auto& e : blocks.event) dim += e.cols();
    Eigen::MatrixXd a(blocks.event.front().rows(), dim);
    Eigen::Index col = 0;
    for (const auto& e : blocks.event) {
      a.middleCols(col, e.cols()) = e;
      col += e.cols();
    }
    Eigen::MatrixXd ata = a.transpose() * a;
    const double ridge = opts.ridge_init * std::max(ata.trace() / static_cast<double>(dim), 1e-12);
    ata.diagonal().array() += ridge;
    const Eigen::VectorXd sol = ata.ldlt().solve(a.transpose() * Eigen::VectorXd::Ones(a.rows()));
    col = 0;
    for (std::size_t j = 0; j < p; ++j) {
      m.beta[j] = sol.segment(col, m.beta[j].size());
      col += m.beta[j].size();
    }
  }
  if (!project(m, blocks)) {
    m.feasible = false;
    m.refresh_selected();
    return m;
  }

  std::vector<double> step(p);
  for (std::size_t j = 0; j < p; ++j) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(blocks.event[j].transpose() * blocks.event[j],
                                                       Eigen::EigenvaluesOnly);
    const double l = 2.0 * eig.eigenvalues().maxCoeff();
    step[j] = l > 0.0 ? 1.0 / l : 1.0;
  }

  State s = make_state(m, blocks);
  double f = total(s, m);
  m.objective_trace.push_back(f);
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const double f_start = f;
    std::size_t zero_candidates = 0;
    for (std::size_t j = 0; j < p; ++j) {
     for (int inner = 0; inner < opts.inner_steps; ++inner) {
      const auto& a = blocks.event[j];
      const auto& g = blocks.diff[j];
      bool moved = false;
      Eigen::VectorXd active(s.zd.size());
      for (Eigen::Index r = 0; r < s.zd.size(); ++r) {
        const bool charged = m.mono == MonoPenalty::kHinge ? s.zd(r) > -m.c : s.zd(r) > 0.0;
        active(r) = charged ? 1.0 : 0.0;
      }
      const Eigen::VectorXd grad =
          2.0 * a.transpose() * (s.ze.array() - 1.0).matrix() + m.lambda2 * g.transpose() * active;
      double st = step[j];
      for (int h = 0; h <= opts.max_halvings; ++h, st *= 0.5) {
        const Eigen::VectorXd cand = prox_group(m.beta[j] - st * grad, st * m.lambda1);
        const bool zero = cand.cwiseAbs().maxCoeff() == 0.0;
        if (h == 0 && zero && inner == 0) ++zero_candidates;
        const Eigen::VectorXd delta = cand - m.beta[j];
        if (delta.cwiseAbs().maxCoeff() == 0.0) break;
        State t;
        t.ze = s.ze + a * delta;
        const double zbar = t.ze.mean();
        if (!(zbar > 1e-12)) continue;
        const double scale = 1.0 / zbar;
        t.ze *= scale;
        t.zd = (s.zd + g * delta) * scale;
        t.norms = s.norms;
        t.norms[j] = cand.norm();
        for (double& v : t.norms) v *= scale;
        const double ft = total(t, m);
        if (ft <= f) {
          for (auto& b : m.beta) b *= scale;
          m.beta[j] = cand * scale;
          s = std::move(t);
          moved = ft < f;
          f = ft;
          break;
        }
      }
      if (!moved || m.beta[j].cwiseAbs().maxCoeff() == 0.0) break;
     }
    }
    // Discrete moves: drop a whole block when that lowers the anchored objective.
    for (std::size_t j = 0; j < p; ++j) {
      if (s.norms[j] == 0.0) continue;
      State t;
      t.ze = s.ze - blocks.event[j] * m.beta[j];
      const double zbar = t.ze.mean();
      if (!(zbar > 1e-12)) continue;
      const double scale = 1.0 / zbar;
      t.ze *= scale;
      t.zd = (s.zd - blocks.diff[j] * m.beta[j]) * scale;
      t.norms = s.norms;
      t.norms[j] = 0.0;
      for (double& v : t.norms) v *= scale;
      const double ft = total(t, m);
      if (ft < f) {
        m.beta[j].setZero();
        for (auto& b : m.beta) b *= scale;
        s = std::move(t);
        f = ft;
      }
    }
    m.objective_trace.push_back(f);
    m.sweeps = sweep + 1;
    if (zero_candidates == p) {
      for (auto& b : m.beta) b.setZero();
      m.feasible = false;
      break;
    }
    if (f_start - f <= opts.tol * std::max(std::abs(f), 1e-12)) {
      m.converged = true;
      break;
    }
  }
  m.refresh_selected();
  if (m.selected.empty()) m.feasible = false;
  return m;
}

std::vector<std::pair<double, double>> default_grid() {
  std::vector<std::pair<double, double>> g{{0.0, 1.0}};
  for (double l1 : {1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0, 10.0}) g.emplace_back(l1, 1.0);
  return g;
}

TuningResult select_tuning(const Dataset& data, const SplineSpec& spline,
                           const std::vector<std::pair<double, double>>& grid, double c, const FitOptions& opts) {
  require(!grid.empty(), "select_tuning: grid must be nonempty");
  const double n_e = static_cast<double>(data.num_events());
  require(n_e >= 1, "select_tuning: need at least one event unit");
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return grid[a].second < grid[b].second || (grid[a].second == grid[b].second && grid[a].first < grid[b].first);
  });
  std::vector<DegIndexModel> fits(grid.size());
  TuningResult res;
  res.table.resize(grid.size());
  const DegIndexModel* warm = nullptr;
  double warm_l2 = -1.0;
  for (std::size_t idx : order) {
    const auto [l1, l2] = grid[idx];
    if (l2 != warm_l2) warm = nullptr;
    fits[idx] = fit_index(data, spline, l1, l2, c, opts);
    if (warm) {
      DegIndexModel alt = fit_index(data, spline, l1, l2, c, opts, warm);
      if (alt.feasible && (!fits[idx].feasible || alt.objective_trace.back() < fits[idx].objective_trace.back()))
        fits[idx] = std::move(alt);
    }
    const auto& m = fits[idx];
    TuningRow& row = res.table[idx];
    row.lambda1 = l1;
    row.lambda2 = l2;
    row.feasible = m.feasible;
    row.num_selected = m.selected.size();
    if (m.feasible) {
      row.loss = objective(m, data).loss;
      for (const auto& b : m.beta)
        for (Eigen::Index k = 0; k < b.size(); ++k) row.df += b(k) != 0.0 ? 1 : 0;
      if (static_cast<double>(row.df) >= n_e - 1.0 && n_e > 2.0) {
        row.bic = std::numeric_limits<double>::infinity();
      } else {
        const double loss = std::max(row.loss, 1e-10 * n_e);
        row.bic = n_e * std::log(loss / n_e) + static_cast<double>(row.df) * std::log(n_e);
      }
      warm = &fits[idx];
      warm_l2 = l2;
    } else {
      row.bic = std::numeric_limits<double>::infinity();
    }
  }
  std::size_t best = grid.size();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!res.table[i].feasible) continue;
    if (best == grid.size() || res.table[i].bic < res.table[best].bic ||
        (std::isinf(res.table[best].bic) && std::isinf(res.table[i].bic) &&
         res.table[i].lambda1 > res.table[best].lambda1))
      best = i;
  }
  if (best == grid.size()) throw Error("select_tuning: every grid point was infeasible");
  res.best = best;
  res.model = fits[best];
  return res;
}

std::size_t count_violations(const DegIndexModel& model, const Dataset& data, double tol) {
  std::size_t v = 0;
  for (const auto& u : data.units) {
    const auto z = eval_mapped(model, u, channel_map(model, u, data.channel_names));
    for (std::size_t k = 1; k < z.size(); ++k) v += z[k - 1] - z[k] > tol ? 1 : 0;
  }
  return v;
}

}  // namespace degkit::index
