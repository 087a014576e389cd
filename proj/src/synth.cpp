#include "degkit/synth.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace degkit::synth {

namespace {
constexpr double kThreshold = 25.0;
constexpr double kQuadScale = 20.0;
std::string unit_name(std::size_t i) { return "u" + std::to_string(i + 1); }
}  // namespace

double fused_index_value(const std::vector<std::size_t>& active, std::span<const double> x) {
  double z = 0.0;
  for (std::size_t a = 0; a < active.size(); ++a) {
    const double v = x[active[a] - 1];
    z += a == 1 ? v * v / kQuadScale : v;
  }
  return z;
}

FusedIndexSample synth_fused_index(std::size_t n, std::size_t p, const std::vector<std::size_t>& active,
                                   double noise_sd, const RngSpec& rng) {
  require(!active.empty(), "synth_fused_index: active set must be nonempty");
  require(n >= 2, "synth_fused_index: n must be >= 2");
  require(noise_sd >= 0.0, "synth_fused_index: noise_sd must be >= 0");
  std::set<std::size_t> uniq(active.begin(), active.end());
  require(uniq.size() == active.size(), "synth_fused_index: duplicate active channel");
  for (std::size_t a : active) require(a >= 1 && a <= p, "synth_fused_index: active channel outside 1..p");

  FusedIndexSample out;
  out.truth.active = active;
  out.truth.threshold = kThreshold;
  for (std::size_t j = 1; j <= p; ++j) out.data.channel_names.push_back("s" + std::to_string(j));
  out.data.meta["generator"] = "synth_fused_index";

  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    std::vector<double> rate(active.size());
    for (auto& v : rate) v = 1.0 + r.uniform();
    // Crossing time of the noise-free index sum_a g_a(rate_a * t).
    double lin = 0.0, quad = 0.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (a == 1)
        quad += rate[a] * rate[a] / kQuadScale;
      else
        lin += rate[a];
    }
    const double t_cross = quad > 0.0 ? (-lin + std::sqrt(lin * lin + 4.0 * quad * kThreshold)) / (2.0 * quad)
                                      : kThreshold / lin;
    const bool censored = r.uniform() < 0.3;
    const double t_end = censored ? t_cross * (0.4 + 0.5 * r.uniform()) : t_cross;
    const auto steps = static_cast<std::size_t>(std::max(3.0, std::floor(t_end / 2.0)));
    const double dt = t_end / static_cast<double>(steps);

    UnitRecord u;
    u.unit_id = unit_name(i);
    u.channels.assign(p, {});
    std::vector<double> row(p);
    std::vector<double> latent;
    for (std::size_t k = 1; k <= steps; ++k) {
      const double t = k == steps ? t_end : dt * static_cast<double>(k);
      u.times.push_back(t);
      for (std::size_t j = 1; j <= p; ++j) {
        const auto it = std::find(active.begin(), active.end(), j);
        if (it != active.end()) {
          const double clean = rate[it - active.begin()] * t;
          row[j - 1] = clean + (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0);
        } else {
          row[j - 1] = r.normal();
        }
        u.channels[j - 1].push_back(row[j - 1]);
      }
      latent.push_back(fused_index_value(active, row));
    }
    u.event_indicator = censored ? 0 : 1;
    u.event_time = t_end;
    out.data.units.push_back(std::move(u));
    out.truth.latent_index.push_back(std::move(latent));
    out.truth.crossing_time.push_back(t_cross);
  }
  return out;
}

CopulaWienerSample synth_copula_wiener(const mvdeg::CopulaWienerModel& model, std::size_t n,
                                       const std::vector<double>& grid, const RngSpec& rng,
                                       const std::vector<Eigen::VectorXd>& covariates) {
  model.validate();
  require(!grid.empty() && grid.front() == 0.0, "synth_copula_wiener: grid must start at 0");
  for (std::size_t k = 1; k < grid.size(); ++k)
    require(grid[k] > grid[k - 1], "synth_copula_wiener: grid must be strictly increasing");
  require(covariates.empty() || covariates.size() == n, "synth_copula_wiener: need covariates for every unit");

  CopulaWienerSample out;
  out.omega.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.p));
  for (std::size_t j = 1; j <= model.p; ++j) out.data.channel_names.push_back("d" + std::to_string(j));
  out.data.meta["generator"] = "synth_copula_wiener";
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd x = covariates.empty() ? Eigen::VectorXd() : covariates[i];
    Rng r_omega(rng.child(tag::kOmega, i));
    const Eigen::VectorXd w = model.sample_omega(r_omega);
    out.omega.row(static_cast<Eigen::Index>(i)) = w.transpose();
    UnitRecord u;
    u.unit_id = unit_name(i);
    u.times = grid;
    u.channels.assign(model.p, {});
    for (std::size_t j = 0; j < model.p; ++j) {
      Rng r(rng.child(tag::kPath, i * 1000 + j));
      double d = 0.0, lam_prev = 0.0;
      for (double t : grid) {
        const double lam = model.shapes[j](t, x);
        require(lam >= lam_prev, "synth_copula_wiener: shape function must be non-decreasing on the grid");
        const double dl = lam - lam_prev;
        if (dl > 0.0) d += w(j) * dl + model.sigmas[j] * std::sqrt(dl) * r.normal();
        lam_prev = lam;
        const double eps = model.noise_sd[j] > 0.0 ? model.noise_sd[j] * r.normal() : 0.0;
        u.channels[j].push_back(d + eps);
      }
    }
    out.data.units.push_back(std::move(u));
  }
  return out;
}

FpcaSample synth_fpca_rank2(std::size_t n, std::size_t grid_points, double var_a, double var_b, double noise_sd,
                            const RngSpec& rng) {
  require(n >= 2 && grid_points >= 3, "synth_fpca_rank2: need n >= 2 and >= 3 grid points");
  require(var_a >= 0.0 && var_b >= 0.0 && noise_sd >= 0.0, "synth_fpca_rank2: variances must be >= 0");
  const auto G = static_cast<Eigen::Index>(grid_points);
  FpcaSample out;
  out.sample.channel = "signal";
  out.true_eigenvalues << var_a, var_b;
  out.true_eigenfunctions.resize(G, 2);
  for (Eigen::Index g = 0; g < G; ++g) {
    const double t = static_cast<double>(g) / static_cast<double>(G - 1);
    out.sample.grid.push_back(t);
    out.true_eigenfunctions(g, 0) = std::sqrt(2.0) * std::sin(2.0 * num::kPi * t);
    out.true_eigenfunctions(g, 1) = std::sqrt(2.0) * std::cos(2.0 * num::kPi * t);
  }
  out.sample.curves.resize(static_cast<Eigen::Index>(n), G);
  out.true_scores.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    const auto ii = static_cast<Eigen::Index>(i);
    const double a = r.normal(0.0, std::sqrt(var_a)), b = r.normal(0.0, std::sqrt(var_b));
    out.true_scores(ii, 0) = a;
    out.true_scores(ii, 1) = b;
    for (Eigen::Index g = 0; g < G; ++g) {
      const double t = out.sample.grid[static_cast<std::size_t>(g)];
      out.sample.curves(ii, g) = t * t + a * out.true_eigenfunctions(g, 0) + b * out.true_eigenfunctions(g, 1) +
                                 (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0);
    }
    out.sample.unit_ids.push_back(unit_name(i));
  }
  return out;
}

ClusterScoresSample synth_cluster_scores(std::size_t n, std::size_t d, std::size_t informative, int clusters,
                                         double separation, const RngSpec& rng) {
  require(clusters >= 1 && n >= static_cast<std::size_t>(clusters), "synth_cluster_scores: need n >= clusters >= 1");
  require(informative >= 1 && informative <= d, "synth_cluster_scores: need 1 <= informative <= d");
  ClusterScoresSample out;
  out.scores.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    const int k = static_cast<int>(i % static_cast<std::size_t>(clusters));
    out.labels.push_back(k);
    const double angle = 2.0 * num::kPi * k / clusters + num::kPi / 2.0;
    for (std::size_t c = 0; c < d; ++c) {
      double centre = 0.0;
      if (c == 0 && clusters > 1) centre = separation * std::cos(angle);
      if (c == 1 && clusters > 1) centre = separation * std::sin(angle);
      if (c >= 2 && c < informative && clusters > 1) centre = separation * (k % 2 == 0 ? 0.5 : -0.5);
      out.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = centre + r.normal();
    }
  }
  return out;
}

ClusterCurvesSample synth_cluster_curves(std::size_t n, int archetypes, std::size_t grid_points, double noise_sd,
                                         const RngSpec& rng) {
  require(archetypes >= 1 && n >= static_cast<std::size_t>(archetypes), "synth_cluster_curves: need n >= archetypes");
  require(grid_points >= 3, "synth_cluster_curves: need >= 3 grid points");
  ClusterCurvesSample out;
  out.table.channels = {"A", "B"};
  std::vector<double> grid;
  for (std::size_t g = 0; g < grid_points; ++g) grid.push_back(static_cast<double>(g) / static_cast<double>(grid_points - 1));
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    const int k = static_cast<int>(i % static_cast<std::size_t>(archetypes));
    out.labels.push_back(k);
    out.unit_ids.push_back(unit_name(i));
    const double amp = 3.0 * k + 0.3 * r.normal();
    const double shared = r.normal();
    CurveRecord a{unit_name(i), 0.0, "A", grid, {}}, b{unit_name(i), 0.0, "B", grid, {}};
    for (double t : grid) {
      a.values.push_back(amp * std::exp(-40.0 * (t - 0.5) * (t - 0.5)) + 0.5 * shared * t +
                         (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0));
      b.values.push_back(shared * std::sin(num::kPi * t) + (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0));
    }
    out.table.curves.push_back(std::move(a));
    out.table.curves.push_back(std::move(b));
  }
  return out;
}

LifetimeSample synth_lifetime(std::size_t n, std::size_t p, const std::vector<std::pair<std::size_t, double>>& active,
                              double sigma, double sigma_w, double censor_rate, const RngSpec& rng) {
  require(n >= 2 && p >= 1, "synth_lifetime: need n >= 2 and p >= 1");
  require(sigma > 0.0 && sigma_w >= 0.0, "synth_lifetime: need sigma > 0 and sigma_w >= 0");
  require(censor_rate >= 0.0 && censor_rate < 1.0, "synth_lifetime: censor_rate must be in [0, 1)");
  LifetimeSample out;
  out.beta0 = 2.0;
  out.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (const auto& [j, b] : active) {
    require(j < p, "synth_lifetime: active index out of range");
    out.beta(static_cast<Eigen::Index>(j)) = b;
  }
  out.sigma = sigma;
  out.sigma_w = sigma_w;
  auto& d = out.data;
  d.times.resize(static_cast<Eigen::Index>(n));
  d.delta.resize(static_cast<Eigen::Index>(n));
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j + 1));
  // Censoring log-times ~ N(c, s_c^2) with c chosen from the normal
  // approximation P(C < T) = censor_rate.
  const double sd_t = std::sqrt(out.beta.squaredNorm() + sigma_w * sigma_w + sigma * sigma);
  const double sd_c = 1.2;
  const double shift = censor_rate > 0.0 ? num::normal_quantile(1.0 - censor_rate) * std::hypot(sd_t, sd_c) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < p; ++j) d.x(ii, static_cast<Eigen::Index>(j)) = r.normal();
    const double w = sigma_w > 0.0 ? sigma_w * r.normal() : 0.0;
    const double log_t = out.beta0 + d.x.row(ii).dot(out.beta) + w + sigma * r.normal();
    const double log_c = out.beta0 + shift + sd_c * r.normal();
    if (censor_rate > 0.0 && log_c < log_t) {
      d.times(ii) = std::exp(log_c);
      d.delta(ii) = 0;
    } else {
      d.times(ii) = std::exp(log_t);
      d.delta(ii) = 1;
    }
    d.unit_ids.push_back(unit_name(i));
  }
  return out;
}

double funcreg_psi_truth(double lambda) { return 2.0 * std::exp(-0.5 * std::pow((lambda - 0.4) / 0.15, 2)); }

FuncRegSample synth_funcreg(std::size_t n, std::size_t n_times, std::size_t grid_points, double noise_sd,
                            const RngSpec& rng) {
  require(n >= 1 && n_times >= 1 && grid_points >= 3, "synth_funcreg: need n, n_times >= 1 and >= 3 grid points");
  FuncRegSample out;
  out.beta0 = 0.5;
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double l = static_cast<double>(g) / static_cast<double>(grid_points - 1);
    out.lambda_grid.push_back(l);
    out.psi_truth.push_back(funcreg_psi_truth(l));
  }
  const auto w = num::trapezoid_weights(out.lambda_grid);
  const auto G = static_cast<Eigen::Index>(grid_points);
  std::vector<double> ys;
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    fda::FunctionalCovariate x;
    x.unit_id = unit_name(i);
    x.grid = out.lambda_grid;
    x.values.resize(static_cast<Eigen::Index>(n_times), G);
    // Each spectrum is a random level plus seven damped sine harmonics.
    double cum = 0.0;
    for (std::size_t t = 0; t < n_times; ++t) {
      x.times.push_back(static_cast<double>(t + 1));
      double c[8];
      for (double& ck : c) ck = r.normal();
      double integral = 0.0;
      for (Eigen::Index g = 0; g < G; ++g) {
        const double l = out.lambda_grid[static_cast<std::size_t>(g)];
        double v = 1.0 + 0.5 * c[0];
        for (int k = 1; k < 8; ++k) v += c[k] * std::sin(k * num::kPi * l) / k;
        x.values(static_cast<Eigen::Index>(t), g) = v;
        integral += w[static_cast<std::size_t>(g)] * out.psi_truth[static_cast<std::size_t>(g)] * v;
      }
      cum += integral;
      ys.push_back(out.beta0 + cum + (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0));
      out.unit_of_row.push_back(i);
      out.time_of_row.push_back(x.times.back());
    }
    out.covariates.push_back(std::move(x));
  }
  out.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return out;
}

TensorSample synth_tensor(std::size_t n, int rows, int cols, int rank, bool log_link, double scale, double noise_sd,
                          const RngSpec& rng) {
  require(n >= 1 && rows >= 1 && cols >= 1 && rank >= 0, "synth_tensor: invalid sizes");
  TensorSample out;
  Rng fr(rng.child(tag::kMisc, 0));
  out.B = Eigen::MatrixXd::Zero(rows, cols);
  for (int k = 0; k < rank; ++k) {
    Eigen::VectorXd u(rows), v(cols);
    for (int a = 0; a < rows; ++a) u(a) = fr.normal();
    for (int b = 0; b < cols; ++b) v(b) = fr.normal();
    out.B += u * v.transpose();
  }
  out.B *= scale;
  out.alpha0 = log_link ? 0.5 : 1.5;
  out.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Rng r(rng.child(tag::kUnit, i));
    Eigen::MatrixXd x(rows, cols);
    for (int a = 0; a < rows; ++a)
      for (int b = 0; b < cols; ++b) x(a, b) = r.normal();
    const double eta = out.alpha0 + (out.B.array() * x.array()).sum();
    double y;
    if (log_link) {
      const double mu = std::exp(eta);
      y = noise_sd > 0.0 ? static_cast<double>(std::poisson_distribution<long>(mu)(r)) : mu;
    } else {
      y = eta + (noise_sd > 0.0 ? noise_sd * r.normal() : 0.0);
    }
    out.y(static_cast<Eigen::Index>(i)) = y;
    out.images.push_back(std::move(x));
  }
  return out;
}

}  // namespace degkit::synth
