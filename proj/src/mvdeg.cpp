#include "degkit/mvdeg.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace degkit::mvdeg {

double ShapeFn::covariate_scale(const Eigen::VectorXd& x) const {
  if (form != ShapeForm::kExpCovariatePower || gamma.size() == 0 || x.size() == 0) return 1.0;
  require(x.size() == gamma.size(), "shape function: covariate length mismatch");
  return std::exp(x.dot(gamma));
}

double ShapeFn::operator()(double t, const Eigen::VectorXd& x) const {
  if (t <= 0.0) return 0.0;
  return covariate_scale(x) * std::pow(t, kappa);
}

double ShapeFn::inverse(double level, const Eigen::VectorXd& x) const {
  if (!std::isfinite(level)) return level;
  if (level <= 0.0) return 0.0;
  return std::pow(level / covariate_scale(x), 1.0 / kappa);
}

void ShapeFn::validate() const { require(kappa > 0.0, "shape function: kappa must be > 0"); }

void CopulaWienerModel::validate() const {
  require(p >= 1, "model: p must be >= 1");
  require(shapes.size() == p && sigmas.size() == p && marginals.size() == p && noise_sd.size() == p,
          "model: per-channel parameter lists must have length p");
  for (std::size_t j = 0; j < p; ++j) {
    shapes[j].validate();
    require(sigmas[j] > 0.0, "model: sigma must be > 0");
    require(noise_sd[j] >= 0.0, "model: noise sd must be >= 0");
    marginals[j].validate();
  }
  copula.validate(p);
}

Eigen::VectorXd CopulaWienerModel::sample_omega(Rng& rng) const {
  const Eigen::VectorXd u = sample_copula(copula, p, rng);
  Eigen::VectorXd w(static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) w(j) = marginals[j].quantile(u(j));
  return w;
}

double ChannelStats::loglik(double omega) const {
  return -0.5 * (c - 2.0 * omega * b + omega * omega * a) - 0.5 * logdet -
         0.5 * static_cast<double>(n) * std::log(2.0 * num::kPi);
}

// Kalman filter for y = omega * Lambda + e, where e is a Wiener process in
// Lambda-time (started at 0) plus white noise. The filter is linear, so
// running it on y and on Lambda gives innovations whose quadratic forms are
// the statistics a, b, c.
ChannelStats channel_stats(std::span<const double> times, std::span<const double> y, const ShapeFn& shape,
                           double sigma, double noise_sd, const Eigen::VectorXd& x) {
  require(times.size() == y.size(), "channel_stats: length mismatch");
  ChannelStats s;
  const double var_eps = noise_sd * noise_sd;
  const double s2 = sigma * sigma;
  double m_y = 0.0, m_l = 0.0, pvar = 0.0, lam_prev = 0.0, t_prev = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] > t_prev)) throw Error("loglik: times must be strictly increasing");
    t_prev = times[k];
    const double lam = shape(times[k], x);
    const double pminus = pvar + s2 * (lam - lam_prev);
    const double sk = pminus + var_eps;
    lam_prev = lam;
    if (sk <= 0.0) continue;  // exactly observed origin
    const double vy = y[k] - m_y;
    const double vl = lam - m_l;
    s.a += vl * vl / sk;
    s.b += vl * vy / sk;
    s.c += vy * vy / sk;
    s.logdet += std::log(sk);
    ++s.n;
    const double gain = pminus / sk;
    m_y += gain * vy;
    m_l += gain * vl;
    pvar = (1.0 - gain) * pminus;
  }
  return s;
}

double loglik_conditional(const CopulaWienerModel& model, const UnitRecord& unit, const Eigen::VectorXd& omega,
                          const Eigen::VectorXd& x) {
  require(unit.channels.size() == model.p, "loglik: unit channel count differs from model");
  require(omega.size() == static_cast<Eigen::Index>(model.p), "loglik: omega length differs from model");
  double ll = 0.0;
  for (std::size_t j = 0; j < model.p; ++j) {
    const auto st = channel_stats(unit.times, unit.channels[j], model.shapes[j], model.sigmas[j], model.noise_sd[j], x);
    ll += st.loglik(omega(j));
  }
  return ll;
}

double copula_parameter(const CopulaSpec& c) {
  switch (c.family) {
    case CopulaFamily::kIndependence: return 0.0;
    case CopulaFamily::kGaussian: return c.correlation.rows() >= 2 ? c.correlation(0, 1) : 0.0;
    default: return c.theta;
  }
}

namespace {

double normal_score(const Marginal& m, double w) {
  if (m.kind == MarginalKind::kLognormal) return (std::log(w) - m.a) / m.b;
  const double u = std::clamp(m.cdf(w), 1e-15, 1.0 - 1e-15);
  return num::normal_quantile(u);
}

// Prior draws shared by all units, each unit reweighting them by its own
// likelihood. The M-step needs only per-unit weighted moments of omega and
// the weights pooled over units.
struct EStep {
  Eigen::MatrixXd omega;   // S x p
  Eigen::VectorXd pooled;  // S, sum over units of normalized weights
  Eigen::MatrixXd m1, m2;  // n x p, weighted E[omega_j], E[omega_j^2]
  std::vector<double> log_mean_lik, ess;
};

Eigen::VectorXd unit_covariates(const McemOptions& o, const std::string& id) {
  auto it = o.covariates.find(id);
  return it == o.covariates.end() ? Eigen::VectorXd() : it->second;
}

std::vector<std::vector<ChannelStats>> all_stats(const Dataset& data, const CopulaWienerModel& m, const McemOptions& o) {
  std::vector<std::vector<ChannelStats>> st(data.n(), std::vector<ChannelStats>(m.p));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& u = data.units[i];
    const Eigen::VectorXd x = unit_covariates(o, u.unit_id);
    for (std::size_t j = 0; j < m.p; ++j)
      st[i][j] = channel_stats(u.times, u.channels[j], m.shapes[j], m.sigmas[j], m.noise_sd[j], x);
  }
  return st;
}

void fit_marginal(Marginal& mg, const EStep& e, std::size_t j) {
  const double wsum = e.pooled.sum();
  const auto jj = static_cast<Eigen::Index>(j);
  switch (mg.kind) {
    case MarginalKind::kDegenerate: return;
    case MarginalKind::kLognormal: {
      double s1 = 0.0;
      for (Eigen::Index m = 0; m < e.pooled.size(); ++m) s1 += e.pooled(m) * std::log(e.omega(m, jj));
      const double mu = s1 / wsum;
      double s2 = 0.0;
      for (Eigen::Index m = 0; m < e.pooled.size(); ++m) {
        const double z = std::log(e.omega(m, jj)) - mu;
        s2 += e.pooled(m) * z * z;
      }
      mg.a = mu;
      mg.b = std::max(std::sqrt(s2 / wsum), 1e-6);
      return;
    }
    case MarginalKind::kWeibull:
    case MarginalKind::kGamma: {
      auto f = [&](const Eigen::VectorXd& th) {
        Marginal cand{mg.kind, std::exp(th(0)), std::exp(th(1))};
        double ll = 0.0;
        for (Eigen::Index m = 0; m < e.pooled.size(); ++m)
          if (e.pooled(m) > 0.0) ll += e.pooled(m) * cand.logpdf(e.omega(m, jj));
        return -ll;
      };
      Eigen::VectorXd start(2);
      start << std::log(mg.a), std::log(mg.b);
      const auto r = num::nelder_mead(f, start, 0.2, 1e-10, 2000);
      mg.a = std::exp(r.x(0));
      mg.b = std::exp(r.x(1));
      return;
    }
  }
}

void fit_copula(CopulaSpec& cop, const CopulaWienerModel& m, const EStep& e) {
  if (cop.family == CopulaFamily::kIndependence) return;
  const auto p = static_cast<Eigen::Index>(m.p);
  const double wsum = e.pooled.sum();
  if (cop.family == CopulaFamily::kGaussian) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd z(p);
    for (Eigen::Index r = 0; r < e.pooled.size(); ++r) {
      if (e.pooled(r) == 0.0) continue;
      for (Eigen::Index j = 0; j < p; ++j) z(j) = normal_score(m.marginals[j], e.omega(r, j));
      s.noalias() += e.pooled(r) * z * z.transpose();
    }
    s /= wsum;
    if (p == 2) {
      const double tr = s(0, 0) + s(1, 1);
      auto negll = [&](double rho) {
        const double one = 1.0 - rho * rho;
        return 0.5 * std::log(one) + 0.5 * ((tr - 2.0 * rho * s(0, 1)) / one - tr);
      };
      cop.correlation(0, 1) = cop.correlation(1, 0) = num::brent_minimize(negll, -0.999, 0.999).first;
    } else {
      const Eigen::VectorXd dinv = s.diagonal().cwiseSqrt().cwiseInverse();
      cop.correlation = dinv.asDiagonal() * s * dinv.asDiagonal();
      cop.correlation.diagonal().setOnes();
    }
    return;
  }
  std::vector<Eigen::VectorXd> us;
  std::vector<double> ws;
  for (Eigen::Index r = 0; r < e.pooled.size(); ++r) {
    if (e.pooled(r) < 1e-12) continue;
    Eigen::VectorXd u(p);
    for (Eigen::Index j = 0; j < p; ++j) u(j) = m.marginals[j].cdf(e.omega(r, j));
    us.push_back(u);
    ws.push_back(e.pooled(r));
  }
  auto negll = [&](double theta) {
    CopulaSpec c = cop;
    c.theta = theta;
    double ll = 0.0;
    for (std::size_t k = 0; k < us.size(); ++k) ll += ws[k] * copula_logpdf(c, us[k]);
    return -ll;
  };
  switch (cop.family) {
    case CopulaFamily::kClayton: {
      auto f = [&](double lt) { return negll(std::exp(lt)); };
      cop.theta = std::exp(num::brent_minimize(f, std::log(1e-3), std::log(50.0)).first);
      break;
    }
    case CopulaFamily::kGumbel: cop.theta = num::brent_minimize(negll, 1.0 + 1e-6, 30.0).first; break;
    case CopulaFamily::kFrank: {
      auto f = [&](double th) { return std::abs(th) < 1e-8 ? negll(1e-8) : negll(th); };
      double lo = -40.0;
      if (m.p > 2) lo = 1e-6;
      cop.theta = num::brent_minimize(f, lo, 40.0).first;
      if (std::abs(cop.theta) < 1e-8) cop.theta = 1e-8;
      break;
    }
    default: break;
  }
}

void fit_channel(CopulaWienerModel& m, std::size_t j, const Dataset& data, const EStep& e, const McemOptions& o) {
  const Eigen::VectorXd m1 = e.m1.col(static_cast<Eigen::Index>(j));
  const Eigen::VectorXd m2 = e.m2.col(static_cast<Eigen::Index>(j));
  std::vector<Eigen::VectorXd> xs(data.n());
  for (std::size_t i = 0; i < data.n(); ++i) xs[i] = unit_covariates(o, data.units[i].unit_id);
  const bool noise = o.fit_noise && m.noise_sd[j] > 0.0;
  // Expected complete-data log-likelihood of channel j.
  auto expected = [&](const ShapeFn& shape, double sigma, double tau) {
    double ll = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      const auto& u = data.units[i];
      const auto st = channel_stats(u.times, u.channels[j], shape, sigma, tau, xs[i]);
      ll += -0.5 * (st.c - 2.0 * m1[i] * st.b + m2[i] * st.a) - 0.5 * st.logdet;
    }
    return ll;
  };
  if (!noise && m.noise_sd[j] == 0.0) {
    // sigma profiles out in closed form; search over kappa only.
    auto profile = [&](const ShapeFn& shape, double& sigma2) {
      double q = 0.0, logdet = 0.0;
      std::size_t nn = 0;
      for (std::size_t i = 0; i < data.n(); ++i) {
        const auto& u = data.units[i];
        const auto st = channel_stats(u.times, u.channels[j], shape, 1.0, 0.0, xs[i]);
        q += st.c - 2.0 * m1[i] * st.b + m2[i] * st.a;
        logdet += st.logdet;
        nn += st.n;
      }
      sigma2 = q / static_cast<double>(nn);
      return -0.5 * static_cast<double>(nn) * (1.0 + std::log(sigma2)) - 0.5 * logdet;
    };
    double sigma2 = 0.0;
    if (o.fit_shape) {
      auto f = [&](double lk) {
        ShapeFn sh = m.shapes[j];
        sh.kappa = std::exp(lk);
        double s2;
        return -profile(sh, s2);
      };
      const double lk0 = std::log(m.shapes[j].kappa);
      m.shapes[j].kappa = std::exp(num::brent_minimize(f, lk0 - 2.0, lk0 + 2.0).first);
    }
    profile(m.shapes[j], sigma2);
    m.sigmas[j] = std::sqrt(sigma2);
    return;
  }
  Eigen::VectorXd start(1 + (o.fit_shape ? 1 : 0) + (noise ? 1 : 0));
  Eigen::Index k = 0;
  start(k++) = std::log(m.sigmas[j]);
  if (o.fit_shape) start(k++) = std::log(m.shapes[j].kappa);
  if (noise) start(k++) = std::log(m.noise_sd[j]);
  auto unpack = [&](const Eigen::VectorXd& th, ShapeFn& sh, double& sigma, double& tau) {
    Eigen::Index q = 0;
    sh = m.shapes[j];
    sigma = std::exp(th(q++));
    if (o.fit_shape) sh.kappa = std::exp(th(q++));
    tau = noise ? std::exp(th(q++)) : m.noise_sd[j];
  };
  auto f = [&](const Eigen::VectorXd& th) {
    ShapeFn sh;
    double sigma, tau;
    unpack(th, sh, sigma, tau);
    return -expected(sh, sigma, tau);
  };
  const auto r = num::nelder_mead(f, start, 0.05, 1e-9, 3000, 1e-5);
  ShapeFn sh;
  double sigma, tau;
  unpack(r.x, sh, sigma, tau);
  m.shapes[j] = sh;
  m.sigmas[j] = sigma;
  m.noise_sd[j] = tau;
}

double relative_change(const CopulaWienerModel& a, const CopulaWienerModel& b) {
  double d = std::abs(copula_parameter(a.copula) - copula_parameter(b.copula));
  for (std::size_t j = 0; j < a.p; ++j) {
    d = std::max(d, std::abs(a.sigmas[j] - b.sigmas[j]) / b.sigmas[j]);
    d = std::max(d, std::abs(a.shapes[j].kappa - b.shapes[j].kappa) / b.shapes[j].kappa);
    d = std::max(d, std::abs(a.marginals[j].a - b.marginals[j].a) / std::max(1.0, std::abs(b.marginals[j].a)));
    d = std::max(d, std::abs(a.marginals[j].b - b.marginals[j].b) / std::max(1.0, std::abs(b.marginals[j].b)));
  }
  return d;
}

}  // namespace

McemResult fit_mcem(const Dataset& data, const CopulaWienerModel& init, const McemOptions& opts, const RngSpec& rng) {
  init.validate();
  data.validate();
  require(data.p() == init.p, "fit_mcem: data channel count differs from model p");
  require(opts.mc_draws >= 10, "fit_mcem: mc_draws must be >= 10");
  McemResult res;
  res.model = init;
  std::size_t draws_per_unit = opts.mc_draws;
  bool doubled = false;
  const std::size_t n = data.n();
  CopulaWienerModel previous = init;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    CopulaWienerModel& m = res.model;
    const auto stats = all_stats(data, m, opts);
    EStep e;
    double min_ess = 0.0;
    for (;;) {
      const auto S = static_cast<Eigen::Index>(draws_per_unit);
      const auto p = static_cast<Eigen::Index>(m.p);
      // Common random numbers: every iteration transforms the same base draws.
      Rng r(rng.child(tag::kEStep, 0).child(tag::kMisc, draws_per_unit));
      e.omega.resize(S, p);
      for (Eigen::Index s = 0; s < S; ++s) e.omega.row(s) = m.sample_omega(r).transpose();
      e.m1.resize(static_cast<Eigen::Index>(n), p);
      e.m2.resize(static_cast<Eigen::Index>(n), p);
      e.log_mean_lik.assign(n, 0.0);
      e.ess.assign(n, 0.0);
      // Fixed chunking keeps the pooled sums independent of the thread count.
      const std::size_t chunks = std::min<std::size_t>(n, 16);
      std::vector<Eigen::VectorXd> pooled(chunks, Eigen::VectorXd::Zero(S));
      num::parallel_for(
          chunks,
          [&](std::size_t c) {
            Eigen::VectorXd lw(S);
            for (std::size_t i = c; i < n; i += chunks) {
              lw.setZero();
              for (Eigen::Index j = 0; j < p; ++j) {
                const ChannelStats& st = stats[i][static_cast<std::size_t>(j)];
                const auto om = e.omega.col(j).array();
                lw.array() += st.loglik(0.0) - 0.5 * om * (st.a * om - 2.0 * st.b);
              }
              const double lse = num::log_sum_exp({lw.data(), static_cast<std::size_t>(S)});
              const Eigen::VectorXd w = (lw.array() - lse).exp().matrix();
              const auto ii = static_cast<Eigen::Index>(i);
              e.m1.row(ii) = (w.transpose() * e.omega);
              e.m2.row(ii) = (w.transpose() * e.omega.cwiseAbs2());
              e.log_mean_lik[i] = lse - std::log(static_cast<double>(S));
              e.ess[i] = 1.0 / w.squaredNorm();
              pooled[c] += w;
            }
          },
          opts.threads);
      e.pooled = Eigen::VectorXd::Zero(S);
      for (const auto& pc : pooled) e.pooled += pc;
      min_ess = *std::min_element(e.ess.begin(), e.ess.end());
      if (min_ess >= 10.0) break;
      if (doubled)
        throw Error("fit_mcem: iteration " + std::to_string(iter) + ": importance-sampling effective sample size " +
                    std::to_string(min_ess) + " < 10 after doubling mc_draws");
      res.warnings.push_back("iteration " + std::to_string(iter) + ": effective sample size " +
                             std::to_string(min_ess) + " < 10; doubling mc_draws to " +
                             std::to_string(2 * draws_per_unit));
      draws_per_unit *= 2;
      doubled = true;
    }
    double mc_ll = 0.0;
    for (double l : e.log_mean_lik) mc_ll += l;
    // Ascent has stalled at the resolution of the shared draws: keep the best iterate.
    if (!res.trace.empty() && res.trace.back().mc_draws == draws_per_unit && mc_ll < res.trace.back().mc_loglik) {
      m = previous;
      res.trace.push_back(McemIteration{iter, mc_ll, min_ess, draws_per_unit, copula_parameter(m.copula), m.sigmas});
      res.converged = true;
      break;
    }
    previous = m;

    const CopulaWienerModel before = m;
    for (std::size_t j = 0; j < m.p; ++j) {
      fit_channel(m, j, data, e, opts);
      fit_marginal(m.marginals[j], e, j);
    }
    fit_copula(m.copula, m, e);
    res.trace.push_back(McemIteration{iter, mc_ll, min_ess, draws_per_unit, copula_parameter(m.copula), m.sigmas});
    if (iter >= 2 && relative_change(m, before) < opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

double sample_passage_time(double drift, double sigma, double level, Rng& rng) {
  require(level > 0.0 && sigma > 0.0, "passage: level and sigma must be positive");
  const double shape = level * level / (sigma * sigma);
  if (drift == 0.0) {
    const double z = rng.normal();
    return shape / (z * z);
  }
  if (drift < 0.0) {
    const double p_finite = std::exp(2.0 * drift * level / (sigma * sigma));
    if (rng.uniform() > p_finite) return std::numeric_limits<double>::infinity();
  }
  // Michael-Schucany-Haas inverse Gaussian draw.
  const double mu = level / std::abs(drift);
  const double nu = rng.normal();
  const double y = nu * nu;
  const double x = mu + mu * mu * y / (2.0 * shape) -
                   mu / (2.0 * shape) * std::sqrt(4.0 * mu * shape * y + mu * mu * y * y);
  return rng.uniform() <= mu / (mu + x) ? x : mu * mu / x;
}

FirstPassageResult first_passage(const CopulaWienerModel& model, const Eigen::VectorXd& x,
                                 const std::vector<double>& thresholds, PassageMode mode,
                                 const FirstPassageOptions& opts, const RngSpec& rng) {
  model.validate();
  require(thresholds.size() == model.p, "first_passage: need one threshold per channel");
  for (double b : thresholds) require(b > 0.0, "first_passage: thresholds must be > 0");
  require(opts.n_mc >= 1000, "first_passage: n_mc must be >= 1000");
  require(opts.grid_points >= 2, "first_passage: grid needs at least two points");
  FirstPassageResult res;
  res.samples.resize(opts.n_mc);
  for (std::size_t s = 0; s < opts.n_mc; ++s) {
    Rng r(rng.child(tag::kPath, s));
    const Eigen::VectorXd w = model.sample_omega(r);
    double t = mode == PassageMode::kAnyChannel ? std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t j = 0; j < model.p; ++j) {
      const double level_time = sample_passage_time(w(j), model.sigmas[j], thresholds[j], r);
      const double tj = model.shapes[j].inverse(level_time, x);
      t = mode == PassageMode::kAnyChannel ? std::min(t, tj) : std::max(t, tj);
    }
    res.samples[s] = t;
  }
  std::vector<double> finite;
  for (double t : res.samples)
    if (std::isfinite(t)) finite.push_back(t);
  std::sort(finite.begin(), finite.end());
  res.prob_never = 1.0 - static_cast<double>(finite.size()) / static_cast<double>(opts.n_mc);
  if (!finite.empty()) {
    res.mean = num::mean(finite);
    res.std_error = finite.size() > 1 ? std::sqrt(num::variance(finite) / static_cast<double>(finite.size())) : 0.0;
  } else {
    res.mean = std::numeric_limits<double>::infinity();
  }
  double t_max = opts.t_max;
  if (t_max <= 0.0) {
    t_max = finite.empty() ? 1.0 : 1.05 * finite[static_cast<std::size_t>(0.999 * (finite.size() - 1))];
  }
  const std::size_t g = opts.grid_points;
  res.grid.resize(g);
  res.cdf.resize(g);
  for (std::size_t k = 0; k < g; ++k) {
    const double t = t_max * static_cast<double>(k) / static_cast<double>(g - 1);
    res.grid[k] = t;
    const auto cnt = std::upper_bound(finite.begin(), finite.end(), t) - finite.begin();
    res.cdf[k] = static_cast<double>(cnt) / static_cast<double>(opts.n_mc);
  }
  return res;
}

}  // namespace degkit::mvdeg
