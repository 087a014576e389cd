#include "degkit/error.hpp"
#include "degkit/funcdata.hpp"
#include "degkit/numerics.hpp"
#include "degkit/synth.hpp"

#include <doctest.h>

#include <cmath>

using namespace degkit;
using namespace degkit::fda;

namespace {

std::vector<double> uniform_grid(int g) {
  std::vector<double> x;
  for (int k = 0; k < g; ++k) x.push_back(static_cast<double>(k) / (g - 1));
  return x;
}

}  // namespace

TEST_CASE("fpca: orthonormal eigenfunctions and centred scores") {
  const auto s = synth::synth_fpca_rank2(200, 101, 4.0, 1.0, 0.1, RngSpec{1, 0});
  const auto b = fpca(s.sample);
  const Eigen::MatrixXd gram = b.eigenfunctions.transpose() * b.weights.asDiagonal() * b.eigenfunctions;
  CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.scores.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
  for (int k = 1; k < b.components(); ++k) CHECK(b.eigenvalues(k) <= b.eigenvalues(k - 1));

  // Eigenvalue sum equals the quadrature trace of the sample covariance.
  const Eigen::MatrixXd c = s.sample.curves.rowwise() - s.sample.curves.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / 199.0;
  CHECK(b.eigenvalues.sum() == doctest::Approx((cov.diagonal().array() * b.weights.array()).sum()).epsilon(1e-9));
  CHECK(b.L == 2);
}

TEST_CASE("fpca: identical curves") {
  FunctionalSample s;
  s.grid = uniform_grid(11);
  s.curves = Eigen::MatrixXd::Ones(5, 11);
  for (int g = 0; g < 11; ++g) s.curves.col(g) *= std::sin(g * 0.3);
  const auto b = fpca(s);
  CHECK(b.L == 1);
  CHECK(b.scores.cwiseAbs().maxCoeff() == 0.0);
  CHECK(b.eigenvalues.cwiseAbs().maxCoeff() == 0.0);
  CHECK((reconstruct(b, 2) - s.curves.row(2).transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fpca: reconstruction") {
  const auto s = synth::synth_fpca_rank2(100, 51, 4.0, 1.0, 0.0, RngSpec{2, 0});
  const auto b = fpca(s.sample, 1.0);
  for (std::size_t i : {0u, 17u, 99u}) {
    const Eigen::VectorXd y = s.sample.curves.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK((reconstruct(b, i, b.components()) - y).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((reconstruct(b, i, 0) - b.mean).cwiseAbs().maxCoeff() == 0.0);
  }
  // Mean squared L2 error at L = 1 relative to total variance is lambda2 / (lambda1 + lambda2).
  double err = 0.0, tot = 0.0;
  for (std::size_t i = 0; i < s.sample.n(); ++i) {
    const Eigen::VectorXd y = s.sample.curves.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd r = reconstruct(b, i, 1) - y, c = y - b.mean;
    err += r.cwiseProduct(r).dot(b.weights);
    tot += c.cwiseProduct(c).dot(b.weights);
  }
  const double expect = std::sqrt(b.eigenvalues(1) / (b.eigenvalues(0) + b.eigenvalues(1)));
  CHECK(std::sqrt(err / tot) == doctest::Approx(expect).epsilon(1e-8));
  CHECK(std::abs(expect / std::sqrt(1.0 / 5.0) - 1.0) < 0.15);
}

TEST_CASE("fpca: recovers the generating eigenstructure") {
  const auto s = synth::synth_fpca_rank2(500, 101, 4.0, 1.0, 0.05, RngSpec{3, 0});
  const auto b = fpca(s.sample);
  for (int k = 0; k < 2; ++k) {
    const double c = std::abs(b.eigenfunctions.col(k).cwiseProduct(s.true_eigenfunctions.col(k)).dot(b.weights));
    CHECK(c > 0.99);
  }
  CHECK(b.eigenvalues(0) == doctest::Approx(4.0).epsilon(0.2));
  CHECK(b.eigenvalues(1) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("fpca: preconditions") {
  FunctionalSample s;
  s.grid = {0.0, 0.5, 0.5};
  s.curves = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(fpca(s), Error);
  s.grid = {0.0, 0.5, 1.0};
  s.curves(1, 1) = std::nan("");
  CHECK_THROWS_AS(fpca(s), Error);
  s.curves(1, 1) = 0.0;
  CHECK_THROWS_AS(fpca(s, 0.0), Error);
}

TEST_CASE("project matches stored scores") {
  const auto s = synth::synth_fpca_rank2(50, 41, 2.0, 1.0, 0.1, RngSpec{4, 0});
  const auto b = fpca(s.sample);
  const Eigen::VectorXd p = b.project(s.sample.curves.row(7).transpose());
  CHECK((p - b.scores.row(7).transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("longfunc: extrapolates a linear degradation trajectory") {
  LongFuncData d;
  d.grid = uniform_grid(31);
  Eigen::VectorXd mu(31), psi(31);
  for (int g = 0; g < 31; ++g) {
    mu(g) = 1.0 + d.grid[static_cast<std::size_t>(g)];
    psi(g) = std::sqrt(2.0) * std::sin(num::kPi * d.grid[static_cast<std::size_t>(g)]);
  }
  Rng rng(RngSpec{5, 0});
  std::vector<double> rate;
  for (int i = 0; i < 30; ++i) {
    LongFuncUnit u;
    u.unit_id = "u" + std::to_string(i);
    const double a = 0.5 + rng.uniform();
    rate.push_back(a);
    for (int j = 0; j <= 5; ++j) u.times.push_back(j);
    u.curves.resize(6, 31);
    for (int j = 0; j <= 5; ++j) u.curves.row(j) = (mu + a * j * psi).transpose();
    d.units.push_back(std::move(u));
  }
  const auto m = fit_longfunc(d, 1);
  CHECK(m.K() == 1);
  for (std::size_t i : {0u, 11u, 29u}) {
    const Eigen::VectorXd truth = mu + rate[i] * 8.0 * psi;
    const Eigen::VectorXd pred = m.predict(i, 8.0);
    CHECK((pred - truth).norm() / truth.norm() < 0.02);
  }
  for (std::size_t i = 0; i < 30; ++i)
    for (double t = 0.0; t < 10.0; t += 0.5) CHECK(m.trends[i](t + 0.5) >= m.trends[i](t));
}

TEST_CASE("longfunc: static curves predict themselves") {
  LongFuncData d;
  d.grid = uniform_grid(11);
  for (int i = 0; i < 4; ++i) {
    LongFuncUnit u;
    u.unit_id = std::to_string(i);
    u.times = {0.0, 1.0, 2.0, 3.0};
    u.curves = Eigen::MatrixXd::Constant(4, 11, static_cast<double>(i));
    d.units.push_back(u);
  }
  const auto m = fit_longfunc(d, 2);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK((m.predict(i, 6.0).array() - static_cast<double>(i)).abs().maxCoeff() < 1e-6);
}

TEST_CASE("longfunc: preconditions") {
  LongFuncData d;
  d.grid = uniform_grid(5);
  LongFuncUnit u;
  u.unit_id = "a";
  u.times = {0.0, 1.0};
  u.curves = Eigen::MatrixXd::Zero(2, 5);
  d.units.push_back(u);
  CHECK_THROWS_AS(fit_longfunc(d, 1), Error);
  d.units[0].times = {0.0, 1.0, 2.0};
  d.units[0].curves = Eigen::MatrixXd::Zero(3, 5);
  CHECK_THROWS_AS(fit_longfunc(d, 6), Error);
  CHECK_NOTHROW(fit_longfunc(d, 5));
}

TEST_CASE("functional covariate design") {
  FunctionalCovariate x;
  x.grid = uniform_grid(41);
  x.times = {1.0, 2.0, 3.0};
  x.values = Eigen::MatrixXd::Zero(3, 41);
  CHECK(functional_covariate_design(x, 6).cwiseAbs().maxCoeff() == 0.0);

  // Partition of unity: constant x = 1 over [0, 1] gives row sums 1, 2, 3.
  x.values.setOnes();
  const Eigen::MatrixXd z = functional_covariate_design(x, 6);
  CHECK(z.row(1).sum() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(z.row(2).sum() == doctest::Approx(3.0).epsilon(1e-12));

  // Brute force: trapezoid sums of phi_b * x accumulated over steps.
  Rng rng(RngSpec{6, 0});
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index g = 0; g < 41; ++g) x.values(r, g) = rng.normal();
  const auto basis = psi_basis(0.0, 1.0, 6);
  const Eigen::MatrixXd zz = functional_covariate_design(x, basis);
  for (Eigen::Index j = 0; j < 3; ++j)
    for (int b = 0; b < 6; ++b) {
      double s = 0.0;
      for (Eigen::Index k = 0; k <= j; ++k)
        for (std::size_t g = 0; g + 1 < 41; ++g) {
          const double h = x.grid[g + 1] - x.grid[g];
          const double f0 = basis.eval(x.grid[g])(b) * x.values(k, static_cast<Eigen::Index>(g));
          const double f1 = basis.eval(x.grid[g + 1])(b) * x.values(k, static_cast<Eigen::Index>(g + 1));
          s += 0.5 * h * (f0 + f1);
        }
      CHECK(zz(j, b) == doctest::Approx(s).epsilon(1e-10).scale(1.0));
    }

  // Additive in time: each row increment is the current step's integral.
  FunctionalCovariate one = x;
  one.times = {2.0};
  one.values = x.values.row(1);
  CHECK((functional_covariate_design(one, basis).row(0) - (zz.row(1) - zz.row(0))).cwiseAbs().maxCoeff() < 1e-12);
}
