#include "degkit/error.hpp"
#include "degkit/stdeg.hpp"

#include <doctest.h>

#include <cmath>

using namespace degkit;
using namespace degkit::st;

namespace {

// Five-point stencil written out cell by cell: zero-flux drops the missing
// neighbour's difference, fixed-value uses a ghost cell at the boundary value.
Eigen::MatrixXd stencil(const StGrid& g, Eigen::VectorXd& ghosts) {
  const int m = g.m();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(m, m);
  ghosts = Eigen::VectorXd::Zero(m);
  const double s = 1.0 / (g.h * g.h);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const int k = r * g.cols + c;
      const int nr[4] = {r - 1, r + 1, r, r};
      const int nc[4] = {c, c, c - 1, c + 1};
      for (int e = 0; e < 4; ++e) {
        if (nr[e] >= 0 && nr[e] < g.rows && nc[e] >= 0 && nc[e] < g.cols) {
          L(k, nr[e] * g.cols + nc[e]) += s;
          L(k, k) -= s;
        } else if (g.boundary == Boundary::kFixedValue) {
          L(k, k) -= s;
          ghosts(k) += 1.0;
        }
      }
    }
  return L;
}

// Kalman filter and RTS smoother for U_t = M U_{t-1} + f_t + N(0, qI), D_t = U_t + N(0, rI).
void rts(const Eigen::MatrixXd& D, const Eigen::MatrixXd& M, const Eigen::MatrixXd& f, double q, double r,
         const Eigen::VectorXd& mu0, double s0, Eigen::MatrixXd& mean, Eigen::MatrixXd& var) {
  const Eigen::Index T = D.rows(), m = D.cols();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  std::vector<Eigen::VectorXd> xp(T), xf(T);
  std::vector<Eigen::MatrixXd> Pp(T), Pf(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t == 0) {
      xp[0] = mu0;
      Pp[0] = s0 * I;
    } else {
      xp[t] = M * xf[t - 1] + f.row(t).transpose();
      Pp[t] = M * Pf[t - 1] * M.transpose() + q * I;
    }
    const Eigen::MatrixXd K = Pp[t] * (Pp[t] + r * I).inverse();
    xf[t] = xp[t] + K * (D.row(t).transpose() - xp[t]);
    Pf[t] = (I - K) * Pp[t];
  }
  mean.resize(T, m);
  var.resize(T, m);
  Eigen::VectorXd xs = xf[T - 1];
  Eigen::MatrixXd Ps = Pf[T - 1];
  mean.row(T - 1) = xs.transpose();
  var.row(T - 1) = Ps.diagonal().transpose();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd J = Pf[t] * M.transpose() * Pp[t + 1].inverse();
    xs = xf[t] + J * (xs - xp[t + 1]);
    Ps = Pf[t] + J * (Ps - Pp[t + 1]) * J.transpose();
    mean.row(t) = xs.transpose();
    var.row(t) = Ps.diagonal().transpose();
  }
}

StPosterior point_posterior(const StGrid& g, double alpha, double q, const Eigen::VectorXd& u, int tau) {
  StPosterior p;
  p.grid = g;
  p.tau = tau;
  p.alpha = {alpha};
  p.q = {q};
  p.r = {0.0};
  p.U_last = u.transpose();
  return p;
}

}  // namespace

TEST_CASE("Laplacian matches the explicit stencil") {
  for (Boundary b : {Boundary::kZeroFlux, Boundary::kFixedValue}) {
    StGrid g{3, 4, 0.5, b};
    const Laplacian lap(g);
    Eigen::VectorXd ghosts;
    const Eigen::MatrixXd L = stencil(g, ghosts);
    CHECK((lap.dense() - L).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lap.ghost_counts() - ghosts).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
    Eigen::VectorXd ev = lap.eigenvalues();
    std::sort(ev.data(), ev.data() + ev.size());
    CHECK((ev - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(12, -1.0, 2.0).array().sin();
    CHECK((lap.apply(u) - L * u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((lap.from_eigen(lap.to_eigen(u)) - u).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(alpha_max(lap) == doctest::Approx(2.0 / -es.eigenvalues()(0)));
  }
}

TEST_CASE("zero-flux propagation conserves mass and matches matrix powers") {
  StGrid g{4, 5, 1.0, Boundary::kZeroFlux};
  const Laplacian lap(g);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(20);
  u(7) = 10.0;
  const double alpha = 0.2;
  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(20, 20) + alpha * lap.dense();
  Eigen::VectorXd oracle = u;
  double prev_max = u.maxCoeff();
  for (int t = 1; t <= 30; ++t) {
    u = propagate(lap, alpha, u, 0.0);
    oracle = M * oracle;
    CHECK(u.sum() == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(u.maxCoeff() <= prev_max + 1e-12);
    prev_max = u.maxCoeff();
  }
  CHECK((u - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(u.maxCoeff() < 10.0);
}

TEST_CASE("fixed-value propagation relaxes to the boundary value") {
  StGrid g{3, 3, 1.0, Boundary::kFixedValue};
  const Laplacian lap(g);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(9);
  for (int t = 0; t < 2000; ++t) u = propagate(lap, 0.1, u, 2.0);
  CHECK((u.array() - 2.0).abs().maxCoeff() < 1e-8);
}

TEST_CASE("simulate_field: static noiseless field") {
  StGrid g{3, 3, 1.0, Boundary::kZeroFlux};
  StModel m;
  m.alpha = 0.0;
  m.q = 0.0;
  m.r = 0.0;
  m.mu0 = Eigen::VectorXd::LinSpaced(9, 0.0, 1.0);
  m.s0 = 0.0;
  m.tau = 10;
  const auto f = simulate_field(m, g, RngSpec{1, 0});
  REQUIRE(f.D.rows() == 11);
  for (Eigen::Index t = 0; t <= 10; ++t) CHECK((f.D.row(t).transpose() - m.mu0).cwiseAbs().maxCoeff() == 0.0);
  m.alpha = 10.0;
  CHECK_THROWS_AS(simulate_field(m, g, RngSpec{1, 0}), Error);
}

TEST_CASE("FFBS draws match the Kalman smoother moments") {
  StGrid g{2, 2, 1.0, Boundary::kFixedValue};
  const Laplacian lap(g);
  const double alpha = 0.15, q = 0.05, r = 0.1, s0 = 0.5;
  const std::vector<double> bnd{1.0, 0.5, 0.8};
  StModel sm;
  sm.alpha = alpha;
  sm.q = q;
  sm.r = r;
  sm.mu0 = Eigen::VectorXd::Zero(1);
  sm.s0 = s0;
  sm.tau = 5;
  sm.boundary_series = bnd;
  const auto f = simulate_field(sm, g, RngSpec{2, 0});

  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(4, 4) + alpha * lap.dense();
  Eigen::MatrixXd forcing = Eigen::MatrixXd::Zero(6, 4);
  for (int t = 1; t < 6; ++t)
    forcing.row(t) = (alpha * bnd[std::min<std::size_t>(static_cast<std::size_t>(t - 1), 2)] * lap.ghost_counts()).transpose();
  const Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(4);
  Eigen::MatrixXd mean, var;
  rts(f.D, M, forcing, q, r, mu0, s0, mean, var);

  Rng rng(RngSpec{3, 0});
  const int n = 4000;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(6, 4), s2 = Eigen::MatrixXd::Zero(6, 4);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd u = ffbs_draw(f.D, lap, alpha, q, r, mu0, s0, bnd, rng);
    s1 += u;
    s2 += u.cwiseProduct(u);
  }
  const Eigen::MatrixXd em = s1 / n;
  const Eigen::MatrixXd ev = s2 / n - em.cwiseProduct(em);
  const Eigen::MatrixXd z = (em - mean).array() / (var.array() / n).sqrt();
  CHECK(z.cwiseAbs().maxCoeff() < 4.5);
  CHECK(std::sqrt(z.squaredNorm() / z.size()) < 1.5);
  CHECK(((ev.array() / var.array()) - 1.0).abs().maxCoeff() < 0.15);
}

TEST_CASE("FFBS: vanishing measurement noise reproduces the data") {
  StGrid g{2, 3, 1.0, Boundary::kZeroFlux};
  const Laplacian lap(g);
  StModel sm;
  sm.alpha = 0.1;
  sm.q = 0.1;
  sm.r = 0.0;
  sm.mu0 = Eigen::VectorXd::Zero(1);
  sm.s0 = 1.0;
  sm.tau = 4;
  const auto f = simulate_field(sm, g, RngSpec{4, 0});
  Rng rng(RngSpec{5, 0});
  const auto u = ffbs_draw(f.D, lap, 0.1, 0.1, 1e-12, Eigen::VectorXd::Zero(6), 1.0, {}, rng);
  CHECK((u - f.D).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("effective sample size") {
  Rng rng(RngSpec{6, 0});
  std::vector<double> iid(20000), ar(20000);
  double a = 0.0;
  for (std::size_t i = 0; i < iid.size(); ++i) {
    iid[i] = rng.normal();
    a = 0.5 * a + rng.normal();
    ar[i] = a;
  }
  CHECK(effective_sample_size(iid) == doctest::Approx(20000).epsilon(0.1));
  CHECK(effective_sample_size(ar) == doctest::Approx(20000.0 / 3.0).epsilon(0.15));
}

TEST_CASE("failure prediction") {
  StGrid g{3, 3, 1.0, Boundary::kZeroFlux};
  FailureSpec spec;
  spec.threshold = 1.0;

  SUBCASE("already failed at the last observation") {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(9);
    u(4) = 1.5;
    const auto c = predict_failure(point_posterior(g, 0.1, 0.01, u, 5), spec, 10, 500, RngSpec{7, 0});
    CHECK(c.times.front() == 6);
    CHECK(c.cdf.front() >= 0.99);
  }
  SUBCASE("frozen field never fails") {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(9, 0.5);
    const auto c = predict_failure(point_posterior(g, 0.0, 0.0, u, 5), spec, 40, 200, RngSpec{8, 0});
    for (double p : c.cdf) CHECK(p == 0.0);
    CHECK(c.prob_never == 1.0);
  }
  SUBCASE("rules see the same paths") {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(9, 0.3);
    const auto post = point_posterior(g, 0.1, 0.05, u, 0);
    const auto mx = predict_failure(post, spec, 60, 2000, RngSpec{9, 0});
    FailureSpec one = spec, three = spec;
    one.rule = three.rule = FailureRule::kAreaAbove;
    one.area = 0.5;
    three.area = 3.0;
    const auto a1 = predict_failure(post, one, 60, 2000, RngSpec{9, 0});
    const auto a3 = predict_failure(post, three, 60, 2000, RngSpec{9, 0});
    for (std::size_t k = 0; k < mx.cdf.size(); ++k) {
      if (k > 0) {
        CHECK(mx.cdf[k] >= mx.cdf[k - 1]);
        CHECK(a3.cdf[k] >= a3.cdf[k - 1]);
      }
      CHECK(a1.cdf[k] >= a3.cdf[k]);
      CHECK(mx.cdf[k] >= a1.cdf[k]);
    }
    CHECK(mx.cdf.back() > 0.5);
  }
}

TEST_CASE("Gibbs sampler recovers parameters on a simulated field") {
  StGrid g{5, 5, 1.0, Boundary::kZeroFlux};
  StModel sm;
  sm.alpha = 0.1;
  sm.q = 0.05;
  sm.r = 0.2;
  sm.mu0 = Eigen::VectorXd::Zero(1);
  sm.s0 = 1.0;
  sm.tau = 40;
  const auto f = simulate_field(sm, g, RngSpec{10, 0});
  GibbsOptions o;
  o.iters = 1500;
  o.burn_in = 500;
  const auto post = gibbs_fit(f.D, g, StPriors{}, o, RngSpec{11, 0});
  REQUIRE(post.draws() == 1000);
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  CHECK(mean(post.alpha) == doctest::Approx(0.1).epsilon(0.5));
  CHECK(mean(post.q) == doctest::Approx(0.05).epsilon(0.3));
  CHECK(mean(post.r) == doctest::Approx(0.2).epsilon(0.2));
  CHECK(post.U_last.rows() == 1000);
}
