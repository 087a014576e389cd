#include "degkit/stdeg.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace degkit::st {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::MatrixXd laplacian_1d(int n, double h, Boundary b) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (i > 0) l(i, i - 1) = 1.0;
    if (i + 1 < n) l(i, i + 1) = 1.0;
    if (b == Boundary::kFixedValue) {
      l(i, i) = -2.0;
    } else {
      l(i, i) = -static_cast<double>((i > 0) + (i + 1 < n));
    }
  }
  return l / (h * h);
}

}  // namespace

std::string to_string(Boundary b) { return b == Boundary::kFixedValue ? "fixed-value" : "zero-flux"; }

Boundary boundary_from_string(const std::string& s) {
  if (s == "zero-flux") return Boundary::kZeroFlux;
  if (s == "fixed-value") return Boundary::kFixedValue;
  throw InputError("unknown boundary '" + s + "' (expected zero-flux or fixed-value)");
}

void StGrid::validate() const {
  require(rows >= 2 && cols >= 2, "StGrid: rows and cols must be >= 2");
  require(h > 0.0, "StGrid: spacing must be positive");
}

Laplacian::Laplacian(const StGrid& grid) : grid_(grid) {
  grid.validate();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> er(laplacian_1d(grid.rows, grid.h, grid.boundary));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(laplacian_1d(grid.cols, grid.h, grid.boundary));
  vr_ = er.eigenvectors();
  vc_ = ec.eigenvectors();
  lambda_.resize(grid.m());
  ghost_ = Eigen::VectorXd::Zero(grid.m());
  for (int i = 0; i < grid.rows; ++i)
    for (int j = 0; j < grid.cols; ++j) {
      lambda_(i * grid.cols + j) = std::min(0.0, er.eigenvalues()(i) + ec.eigenvalues()(j));
      if (grid.boundary == Boundary::kFixedValue)
        ghost_(i * grid.cols + j) = (i == 0) + (i == grid.rows - 1) + (j == 0) + (j == grid.cols - 1);
    }
}

Eigen::VectorXd Laplacian::apply(const Eigen::VectorXd& u) const {
  const int r = grid_.rows, c = grid_.cols;
  const double h2 = grid_.h * grid_.h;
  Eigen::VectorXd out(u.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const int k = i * c + j;
      double s = 0.0;
      int nb = 0;
      if (i > 0) s += u(k - c), ++nb;
      if (i + 1 < r) s += u(k + c), ++nb;
      if (j > 0) s += u(k - 1), ++nb;
      if (j + 1 < c) s += u(k + 1), ++nb;
      const double diag = grid_.boundary == Boundary::kFixedValue ? 4.0 : static_cast<double>(nb);
      out(k) = (s - diag * u(k)) / h2;
    }
  return out;
}

Eigen::VectorXd Laplacian::to_eigen(const Eigen::VectorXd& u) const {
  Eigen::Map<const RowMat> um(u.data(), grid_.rows, grid_.cols);
  const RowMat x = vr_.transpose() * um * vc_;
  return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
}

Eigen::VectorXd Laplacian::from_eigen(const Eigen::VectorXd& x) const {
  Eigen::Map<const RowMat> xm(x.data(), grid_.rows, grid_.cols);
  const RowMat u = vr_ * xm * vc_.transpose();
  return Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
}

Eigen::MatrixXd Laplacian::dense() const {
  const int m = grid_.m();
  Eigen::MatrixXd l(m, m);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < m; ++k) {
    e(k) = 1.0;
    l.col(k) = apply(e);
    e(k) = 0.0;
  }
  return l;
}

double alpha_max(const Laplacian& lap) {
  const double mx = lap.max_abs_eigenvalue();
  return mx > 0.0 ? 2.0 / mx : std::numeric_limits<double>::infinity();
}

void StModel::validate(const Laplacian& lap) const {
  require(alpha >= 0.0 && alpha <= alpha_max(lap) * (1.0 + 1e-12),
          "StModel: alpha outside the stable range [0, " + std::to_string(alpha_max(lap)) + "]");
  require(q >= 0.0 && r >= 0.0 && s0 >= 0.0, "StModel: variances must be >= 0");
  require(tau >= 0, "StModel: tau must be >= 0");
  require(mu0.size() == 0 || mu0.size() == 1 || mu0.size() == lap.grid().m(), "StModel: mu0 size must be 1 or m");
  if (lap.grid().boundary == Boundary::kFixedValue)
    require(!boundary_series.empty(), "StModel: fixed-value boundary needs a boundary series");
}

double StModel::boundary_at(int t) const {
  if (boundary_series.empty()) return 0.0;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), boundary_series.size() - 1);
  return boundary_series[k];
}

Eigen::VectorXd StModel::mean0(int m) const {
  if (mu0.size() == m) return mu0;
  return Eigen::VectorXd::Constant(m, mu0.size() == 1 ? mu0(0) : 0.0);
}

Eigen::VectorXd propagate(const Laplacian& lap, double alpha, const Eigen::VectorXd& u, double boundary_value) {
  Eigen::VectorXd out = u + alpha * lap.apply(u);
  if (lap.grid().boundary == Boundary::kFixedValue && boundary_value != 0.0)
    out += (alpha * boundary_value / (lap.grid().h * lap.grid().h)) * lap.ghost_counts();
  return out;
}

StField simulate_field(const StModel& model, const StGrid& grid, const RngSpec& rng) {
  const Laplacian lap(grid);
  model.validate(lap);
  const int m = grid.m(), T = model.tau + 1;
  Rng state(rng.child(tag::kPath, 0));
  Rng noise(rng.child(tag::kNoise, 0));
  StField f;
  f.U.resize(T, m);
  f.D.resize(T, m);
  Eigen::VectorXd u = model.mean0(m);
  const double s0 = std::sqrt(model.s0), sq = std::sqrt(model.q), sr = std::sqrt(model.r);
  for (int k = 0; k < m; ++k) u(k) += s0 > 0.0 ? s0 * state.normal() : 0.0;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      u = propagate(lap, model.alpha, u, model.boundary_at(t - 1));
      if (sq > 0.0)
        for (int k = 0; k < m; ++k) u(k) += sq * state.normal();
    }
    f.U.row(t) = u.transpose();
    for (int k = 0; k < m; ++k) f.D(t, k) = u(k) + (sr > 0.0 ? sr * noise.normal() : 0.0);
  }
  return f;
}

namespace {

struct Workspace {
  Eigen::MatrixXd mf, pf, mp, pp;  // filtered and predicted moments, T x m
};

// FFBS in eigen coordinates. y: T x m eigen-coordinate data; forcing: T x m (row 0 unused).
Eigen::MatrixXd ffbs_eigen(const Eigen::MatrixXd& y, const Eigen::VectorXd& lambda, const Eigen::MatrixXd& forcing,
                           double alpha, double q, double r, const Eigen::VectorXd& mu0e, double s0, Rng& rng,
                           Workspace& w) {
  const Eigen::Index T = y.rows(), m = y.cols();
  w.mf.resize(T, m);
  w.pf.resize(T, m);
  w.mp.resize(T, m);
  w.pp.resize(T, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double a = 1.0 + alpha * lambda(k);
    double mean = mu0e(k), var = s0;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (t > 0) {
        mean = a * mean + forcing(t, k);
        var = a * a * var + q;
      }
      w.mp(t, k) = mean;
      w.pp(t, k) = var;
      const double s = var + r;
      const double gain = s > 0.0 ? var / s : 0.0;
      mean += gain * (y(t, k) - mean);
      var = std::max((1.0 - gain) * var, 0.0);
      w.mf(t, k) = mean;
      w.pf(t, k) = var;
    }
  }
  Eigen::MatrixXd x(T, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double a = 1.0 + alpha * lambda(k);
    x(T - 1, k) = w.mf(T - 1, k) + std::sqrt(w.pf(T - 1, k)) * rng.normal();
    for (Eigen::Index t = T - 2; t >= 0; --t) {
      const double pp = w.pp(t + 1, k);
      const double j = pp > 0.0 ? w.pf(t, k) * a / pp : 0.0;
      const double mean = w.mf(t, k) + j * (x(t + 1, k) - w.mp(t + 1, k));
      const double var = std::max(w.pf(t, k) - j * a * w.pf(t, k), 0.0);
      x(t, k) = mean + std::sqrt(var) * rng.normal();
    }
  }
  return x;
}

// Inverse-gamma(shape, scale) draw.
double inv_gamma(Rng& rng, double shape, double scale) { return scale / rng.gamma(shape, 1.0); }

struct ChainResult {
  std::vector<double> alpha, q, r;
  Eigen::MatrixXd U_last;
  Eigen::MatrixXd sum, sumsq;
  std::vector<Eigen::MatrixXd> latent;
  ChainDiagnostics diag;
  std::vector<std::string> warnings;
};

ChainResult run_chain(const Eigen::MatrixXd& D, const Laplacian& lap, const StPriors& pr, const GibbsOptions& opts,
                      Rng& rng) {
  const Eigen::Index T = D.rows(), m = D.cols();
  const double h2 = lap.grid().h * lap.grid().h;
  const double amax = alpha_max(lap);
  const Eigen::VectorXd& lambda = lap.eigenvalues();
  Eigen::MatrixXd y(T, m);
  for (Eigen::Index t = 0; t < T; ++t) y.row(t) = lap.to_eigen(D.row(t).transpose()).transpose();
  // Boundary forcing per unit alpha, eigen coordinates.
  Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(T, m);
  if (lap.grid().boundary == Boundary::kFixedValue) {
    const Eigen::VectorXd ge = lap.to_eigen(lap.ghost_counts()) / h2;
    for (Eigen::Index t = 1; t < T; ++t) {
      const auto& bs = opts.boundary_series;
      const double b = bs.empty() ? 0.0 : bs[std::min<std::size_t>(static_cast<std::size_t>(t - 1), bs.size() - 1)];
      g1.row(t) = b * ge.transpose();
    }
  }
  const Eigen::VectorXd mu0e = lap.to_eigen(Eigen::VectorXd::Constant(m, pr.mu0));

  double alpha = opts.init_alpha >= 0.0 ? std::min(opts.init_alpha, amax) : 0.5 * std::min(amax, 1.0);
  double var_d = 0.0;
  if (T > 1) var_d = (D.bottomRows(T - 1) - D.topRows(T - 1)).squaredNorm() / static_cast<double>((T - 1) * m);
  var_d = std::max(var_d, 1e-6);
  double q = opts.init_q > 0.0 ? opts.init_q : 0.5 * var_d;
  double r = pr.fix_r ? pr.r_fixed : (opts.init_r > 0.0 ? opts.init_r : 0.5 * var_d);
  double log_step = std::log(0.1 * std::min(amax, 1.0));

  ChainResult res;
  res.sum = Eigen::MatrixXd::Zero(T, m);
  res.sumsq = Eigen::MatrixXd::Zero(T, m);
  const int kept = opts.iters - opts.burn_in;
  res.U_last.resize(kept, m);
  Workspace ws;
  int accepted = 0, proposals = 0;
  for (int it = 0; it < opts.iters; ++it) {
    const Eigen::MatrixXd forcing = alpha * g1;
    const Eigen::MatrixXd x = ffbs_eigen(y, lambda, forcing, alpha, q, r, mu0e, pr.s0, rng, ws);

    // Transition residual e_t(alpha) = c_t - alpha d_t is linear in alpha.
    double A = 0.0, B = 0.0, C = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) {
      const Eigen::ArrayXd c = (x.row(t) - x.row(t - 1)).transpose().array();
      const Eigen::ArrayXd d = lambda.array() * x.row(t - 1).transpose().array() + g1.row(t).transpose().array();
      A += (c * c).sum();
      B += (c * d).sum();
      C += (d * d).sum();
    }
    auto ssq = [&](double a) { return std::max(A - 2.0 * a * B + a * a * C, 0.0); };
    auto log_target = [&](double a) {
      const double z = (a - pr.alpha_mean) / pr.alpha_sd;
      return -0.5 * ssq(a) / q - 0.5 * z * z;
    };
    if (!opts.fix_alpha && T > 1 && q > 0.0) {
      const double prop = alpha + std::exp(log_step) * rng.normal();
      bool acc = false;
      if (prop >= 0.0 && prop <= amax) {
        const double lr = log_target(prop) - log_target(alpha);
        acc = std::log(rng.uniform()) < lr;
        if (acc) alpha = prop;
      }
      if (it < opts.burn_in) {
        log_step += ((acc ? 1.0 : 0.0) - 0.44) * 2.0 / std::sqrt(static_cast<double>(it) + 1.0);
      } else {
        ++proposals;
        accepted += acc ? 1 : 0;
      }
    }
    if (!opts.fix_q && T > 1)
      q = inv_gamma(rng, pr.q_shape + 0.5 * static_cast<double>(m * (T - 1)), pr.q_scale + 0.5 * ssq(alpha));
    if (!pr.fix_r)
      r = inv_gamma(rng, pr.r_shape + 0.5 * static_cast<double>(m * T), pr.r_scale + 0.5 * (y - x).squaredNorm());

    if (it >= opts.burn_in) {
      Eigen::MatrixXd u(T, m);
      for (Eigen::Index t = 0; t < T; ++t) u.row(t) = lap.from_eigen(x.row(t).transpose()).transpose();
      res.sum += u;
      res.sumsq += u.cwiseProduct(u);
      res.U_last.row(it - opts.burn_in) = u.row(T - 1);
      res.alpha.push_back(alpha);
      res.q.push_back(q);
      res.r.push_back(r);
      if (opts.keep_latent) res.latent.push_back(std::move(u));
    }
  }
  res.diag.step = std::exp(log_step);
  res.diag.acceptance = proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  if (proposals > 0 && res.diag.acceptance < 0.05)
    res.warnings.push_back("alpha Metropolis acceptance " + std::to_string(res.diag.acceptance) +
                           " below 5% after adaptation (step " + std::to_string(res.diag.step) + ")");
  res.diag.ess_alpha = effective_sample_size(res.alpha);
  res.diag.ess_q = effective_sample_size(res.q);
  res.diag.ess_r = effective_sample_size(res.r);
  return res;
}

}  // namespace

Eigen::MatrixXd ffbs_draw(const Eigen::MatrixXd& D, const Laplacian& lap, double alpha, double q, double r,
                          const Eigen::VectorXd& mu0, double s0, const std::vector<double>& boundary, Rng& rng) {
  const Eigen::Index T = D.rows(), m = D.cols();
  require(m == lap.grid().m(), "ffbs_draw: data width != grid size");
  Eigen::MatrixXd y(T, m), forcing = Eigen::MatrixXd::Zero(T, m);
  for (Eigen::Index t = 0; t < T; ++t) y.row(t) = lap.to_eigen(D.row(t).transpose()).transpose();
  if (lap.grid().boundary == Boundary::kFixedValue) {
    const Eigen::VectorXd ge = lap.to_eigen(lap.ghost_counts()) * (alpha / (lap.grid().h * lap.grid().h));
    for (Eigen::Index t = 1; t < T; ++t) {
      const double b = boundary.empty() ? 0.0 : boundary[std::min<std::size_t>(static_cast<std::size_t>(t - 1), boundary.size() - 1)];
      forcing.row(t) = b * ge.transpose();
    }
  }
  Workspace ws;
  const Eigen::MatrixXd x = ffbs_eigen(y, lap.eigenvalues(), forcing, alpha, q, r, lap.to_eigen(mu0), s0, rng, ws);
  Eigen::MatrixXd u(T, m);
  for (Eigen::Index t = 0; t < T; ++t) u.row(t) = lap.from_eigen(x.row(t).transpose()).transpose();
  return u;
}

StPosterior gibbs_fit(const Eigen::MatrixXd& D, const StGrid& grid, const StPriors& priors, const GibbsOptions& opts,
                      const RngSpec& rng) {
  const Laplacian lap(grid);
  require(D.cols() == grid.m(), "gibbs_fit: field has " + std::to_string(D.cols()) + " cells, grid has " +
                                    std::to_string(grid.m()));
  require(D.rows() >= 1, "gibbs_fit: no observation times");
  require(D.allFinite(), "gibbs_fit: missing or non-finite field values");
  require(opts.iters > opts.burn_in && opts.burn_in >= 0, "gibbs_fit: need iters > burn_in >= 0");
  require(opts.chains >= 1, "gibbs_fit: chains must be >= 1");
  require(priors.q_shape > 0.0 && priors.q_scale > 0.0 && priors.r_shape > 0.0 && priors.r_scale > 0.0,
          "gibbs_fit: inverse-gamma hyperparameters must be positive");
  require(priors.alpha_sd > 0.0 && priors.s0 >= 0.0, "gibbs_fit: invalid priors");
  if (grid.boundary == Boundary::kFixedValue)
    require(!opts.boundary_series.empty(), "gibbs_fit: fixed-value boundary needs a boundary series");

  std::vector<ChainResult> chains(static_cast<std::size_t>(opts.chains));
  num::parallel_for(
      chains.size(),
      [&](std::size_t c) {
        Rng r(rng.child(tag::kChain, c));
        chains[c] = run_chain(D, lap, priors, opts, r);
      },
      opts.threads);

  StPosterior post;
  post.grid = grid;
  post.tau = static_cast<int>(D.rows()) - 1;
  post.boundary_series = opts.boundary_series;
  const Eigen::Index m = D.cols(), T = D.rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(T, m), sumsq = Eigen::MatrixXd::Zero(T, m);
  std::vector<Eigen::MatrixXd> lasts;
  for (auto& c : chains) {
    post.alpha.insert(post.alpha.end(), c.alpha.begin(), c.alpha.end());
    post.q.insert(post.q.end(), c.q.begin(), c.q.end());
    post.r.insert(post.r.end(), c.r.begin(), c.r.end());
    sum += c.sum;
    sumsq += c.sumsq;
    lasts.push_back(std::move(c.U_last));
    for (auto& l : c.latent) post.latent.push_back(std::move(l));
    post.chains.push_back(c.diag);
    for (auto& w : c.warnings) post.warnings.push_back(w);
  }
  const double n = static_cast<double>(post.draws());
  post.U_mean = sum / n;
  post.U_var = (sumsq / n - post.U_mean.cwiseProduct(post.U_mean)).cwiseMax(0.0);
  post.U_last.resize(static_cast<Eigen::Index>(post.draws()), m);
  Eigen::Index row = 0;
  for (const auto& l : lasts) {
    post.U_last.middleRows(row, l.rows()) = l;
    row += l.rows();
  }
  return post;
}

double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double mu = num::mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mu) * (v - mu);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);
  auto acf = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - mu) * (x[i + lag] - mu);
    return s / (static_cast<double>(n) * c0);
  };
  double tau = 1.0;
  for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
    const double pair = acf(lag) + acf(lag + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) / tau;
}

std::string to_string(FailureRule r) { return r == FailureRule::kAreaAbove ? "area" : "max"; }

FailureRule failure_rule_from_string(const std::string& s) {
  if (s == "max") return FailureRule::kMaxExceeds;
  if (s == "area") return FailureRule::kAreaAbove;
  throw InputError("unknown failure rule '" + s + "' (expected max or area)");
}

FailureCdf predict_failure(const StPosterior& post, const FailureSpec& spec, int horizon, std::size_t n_mc,
                           const RngSpec& rng, int threads) {
  require(post.draws() > 0, "predict_failure: posterior has no draws");
  require(horizon > post.tau, "predict_failure: horizon must exceed tau");
  require(n_mc >= 1, "predict_failure: n_mc must be >= 1");
  if (spec.rule == FailureRule::kAreaAbove) require(spec.area > 0.0, "predict_failure: area must be positive");
  const Laplacian lap(post.grid);
  const double cell = post.grid.h * post.grid.h;
  auto failed = [&](const Eigen::VectorXd& u) {
    if (spec.rule == FailureRule::kMaxExceeds) return u.maxCoeff() >= spec.threshold;
    const double above = static_cast<double>((u.array() > spec.threshold).count()) * cell;
    return above >= spec.area;
  };
  auto boundary = [&](int t) {
    const auto& bs = post.boundary_series;
    if (bs.empty()) return 0.0;
    return bs[std::min<std::size_t>(static_cast<std::size_t>(std::max(t, 0)), bs.size() - 1)];
  };
  const int never = std::numeric_limits<int>::max();
  std::vector<int> first(n_mc, never);
  num::parallel_for(
      n_mc,
      [&](std::size_t p) {
        Rng r(rng.child(tag::kPath, p));
        const std::size_t d = p % post.draws();
        Eigen::VectorXd u = post.U_last.row(static_cast<Eigen::Index>(d)).transpose();
        if (failed(u)) {
          first[p] = post.tau + 1;
          return;
        }
        const double sq = std::sqrt(post.q[d]);
        for (int t = post.tau + 1; t <= horizon; ++t) {
          u = propagate(lap, post.alpha[d], u, boundary(t - 1));
          for (Eigen::Index k = 0; k < u.size(); ++k) u(k) += sq * r.normal();
          if (failed(u)) {
            first[p] = t;
            return;
          }
        }
      },
      threads);
  FailureCdf out;
  out.n_mc = n_mc;
  for (int t = post.tau + 1; t <= horizon; ++t) out.times.push_back(t);
  std::vector<std::size_t> counts(out.times.size(), 0);
  for (int f : first)
    if (f != never) ++counts[static_cast<std::size_t>(f - post.tau - 1)];
  std::size_t cum = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    cum += counts[k];
    out.cdf.push_back(static_cast<double>(cum) / static_cast<double>(n_mc));
  }
  out.prob_never = 1.0 - out.cdf.back();
  return out;
}

}  // namespace degkit::st
