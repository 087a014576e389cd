#include "degkit/error.hpp"
#include "degkit/io.hpp"
#include "degkit/numerics.hpp"
#include "degkit/rng.hpp"
#include "degkit/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace degkit;

namespace {

Dataset parse(const std::string& text, Schema s = Schema::kDegradation) {
  std::istringstream in(text);
  return read_long_csv(in, s, "test.csv");
}

std::string dump(const Dataset& d, Schema s = Schema::kDegradation) {
  std::ostringstream os;
  write_long_csv(d, os, s);
  return os.str();
}

}  // namespace

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(RngSpec{7, 1}), b(RngSpec{7, 1}), c(RngSpec{7, 2});
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    differs |= x != z;
  }
  CHECK(differs);
  const RngSpec s{3, 0};
  CHECK(s.child(tag::kUnit, 4) == s.child(tag::kUnit, 4));
  CHECK_FALSE(s.child(tag::kUnit, 4) == s.child(tag::kUnit, 5));
  CHECK_FALSE(s.child(tag::kUnit, 4) == s.child(tag::kNoise, 4));
}

TEST_CASE("rng samplers have the right moments") {
  Rng r(RngSpec{11, 0});
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sg = 0, lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sg += r.gamma(2.5, 2.0);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.01);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(sg / n == doctest::Approx(5.0).epsilon(0.01));
}

TEST_CASE("load_long_csv: minimal file") {
  const Dataset d = parse("unit_id,time,channel,value\nu1,1,s1,0.5\nu1,2,s1,0.7\nu1,3,s1,0.9\n");
  CHECK(d.n() == 1);
  CHECK(d.p() == 1);
  CHECK(d.units[0].times == std::vector<double>{1, 2, 3});
  CHECK(d.units[0].channels[0] == std::vector<double>{0.5, 0.7, 0.9});
}

TEST_CASE("load_long_csv: unsorted times canonicalize") {
  const Dataset a = parse("unit_id,time,channel,value\nu1,1,s1,0.5\nu1,2,s1,0.7\nu1,3,s1,0.9\n");
  const Dataset b = parse("unit_id,time,channel,value\nu1,3,s1,0.9\nu1,1,s1,0.5\nu1,2,s1,0.7\n");
  CHECK(dump(a) == dump(b));
}

TEST_CASE("load_long_csv: errors name the line") {
  CHECK_THROWS_WITH_AS(parse("unit_id,time,channel,value\nu1,1,s1,0.5\nu1,2.0,s1,0.7\nu1,2,s1,0.8\n"),
                       doctest::Contains("line 4"), InputError);
  CHECK_THROWS_WITH_AS(parse("unit_id,time,channel,value\nu1,1,s1,abc\n"), doctest::Contains("line 2"), InputError);
  CHECK_THROWS_AS(parse("unit,time,channel,value\nu1,1,s1,1\n"), InputError);
  // gaps are rejected, not imputed
  CHECK_THROWS_AS(parse("unit_id,time,channel,value\nu1,1,s1,1\nu1,1,s2,1\nu1,2,s1,1\n"), Error);
}

TEST_CASE("events join onto units") {
  Dataset d = parse("unit_id,time,channel,value\nu1,1,s1,0\nu1,2,s1,1\nu2,1,s1,0\nu2,2,s1,0.5\n");
  const Dataset e = parse("unit_id,event_time,event\nu1,2,1\nu2,2,0\n", Schema::kEvents);
  d = join_events(d, e);
  CHECK(d.units[0].event_indicator == 1);
  CHECK(*d.units[0].event_time == 2.0);
  CHECK(d.num_events() == 1);
  const Dataset bad = parse("unit_id,event_time,event\nu9,2,1\n", Schema::kEvents);
  CHECK_THROWS_AS(join_events(d, bad), InputError);
  // event time must coincide with the last measurement
  const Dataset off = parse("unit_id,event_time,event\nu1,1.5,1\n", Schema::kEvents);
  CHECK_THROWS_AS(join_events(d, off), Error);
}

TEST_CASE("save(load(file)) round trips byte-identically") {
  const auto s = synth::synth_fused_index(6, 3, {1}, 0.1, RngSpec{2, 0});
  const std::string text = dump(s.data);
  CHECK(dump(parse(text)) == text);
  const std::string ev = dump(s.data, Schema::kEvents);
  CHECK(dump(parse(ev, Schema::kEvents), Schema::kEvents) == ev);
  std::ostringstream fo;
  fo << "time,row,col,value\n";
  for (int t = 0; t < 2; ++t)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) fo << t << ',' << i << ',' << j << ',' << format_double(0.1 * t + i - 0.3 * j) << '\n';
  const Dataset f = parse(fo.str(), Schema::kField);
  CHECK(f.p() == 6);
  CHECK(dump(f, Schema::kField) == fo.str());
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 123456789.125}) CHECK(std::stod(format_double(x)) == x);
}

TEST_CASE("synth_fused_index: noiseless events sit on the threshold") {
  const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.0, RngSpec{1, 0});
  CHECK(s.data.n() == 50);
  CHECK(s.data.p() == 10);
  std::size_t events = 0;
  for (std::size_t i = 0; i < s.data.n(); ++i) {
    const auto& u = s.data.units[i];
    if (u.event_indicator != 1) continue;
    ++events;
    CHECK(s.truth.latent_index[i].back() == doctest::Approx(s.truth.threshold).epsilon(1e-12));
  }
  CHECK(events > 0);
  CHECK_THROWS_AS(synth::synth_fused_index(50, 10, {}, 0.0, RngSpec{1, 0}), Error);
}

TEST_CASE("synth_fused_index: event-time index spread stays under its Monte Carlo bound") {
  auto event_variance = [](std::uint64_t seed) {
    const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.1, RngSpec{seed, 0});
    std::vector<double> z;
    for (std::size_t i = 0; i < s.data.n(); ++i)
      if (s.data.units[i].event_indicator == 1) z.push_back(s.truth.latent_index[i].back());
    return num::variance(z);
  };
  std::vector<double> v;
  for (std::uint64_t r = 1; r <= 2000; ++r) v.push_back(event_variance(100000 + r));
  std::sort(v.begin(), v.end());
  const double bound = v[static_cast<std::size_t>(0.99 * static_cast<double>(v.size()))];
  CHECK(event_variance(1) <= bound);
}

TEST_CASE("synth_fused_index is deterministic") {
  const auto a = synth::synth_fused_index(20, 4, {2}, 0.1, RngSpec{5, 0});
  const auto b = synth::synth_fused_index(20, 4, {2}, 0.1, RngSpec{5, 0});
  CHECK(dump(a.data) == dump(b.data));
  CHECK(dump(a.data, Schema::kEvents) == dump(b.data, Schema::kEvents));
}

TEST_CASE("synth_copula_wiener: independence gives near-zero Kendall tau") {
  mvdeg::CopulaWienerModel m;
  m.p = 2;
  m.shapes = {mvdeg::ShapeFn{}, mvdeg::ShapeFn{}};
  m.sigmas = {1.0, 1.0};
  m.noise_sd = {0.0, 0.0};
  m.marginals = {Marginal{MarginalKind::kLognormal, 0.0, 0.5}, Marginal{MarginalKind::kGamma, 2.0, 1.0}};
  const auto s = synth::synth_copula_wiener(m, 10000, {0.0, 1.0}, RngSpec{4, 0});
  const Eigen::VectorXd a = s.omega.col(0), b = s.omega.col(1);
  CHECK(std::abs(num::kendall_tau({a.data(), 10000}, {b.data(), 10000})) < 0.05);
}

TEST_CASE("synth_copula_wiener: Wiener increments") {
  mvdeg::CopulaWienerModel m;
  m.p = 1;
  m.shapes = {mvdeg::ShapeFn{}};
  m.sigmas = {1.0};
  m.noise_sd = {0.0};
  m.marginals = {Marginal{MarginalKind::kDegenerate, 2.0, 0.0}};
  const std::size_t n = 20000;
  const auto s = synth::synth_copula_wiener(m, n, {0.0, 0.5, 1.0, 1.5}, RngSpec{6, 0});
  std::vector<double> d1, d2;
  for (const auto& u : s.data.units) {
    d1.push_back(u.channels[0][1] - u.channels[0][0]);
    d2.push_back(u.channels[0][3] - u.channels[0][2]);
  }
  const double v1 = num::variance(d1);
  CHECK(std::abs(v1 - 0.5) < 3 * 0.5 * std::sqrt(2.0 / (n - 1)));
  CHECK(std::abs(num::mean(d1) - 1.0) < 3 * std::sqrt(0.5 / n));
  const double m1 = num::mean(d1), m2 = num::mean(d2);
  double c = 0;
  for (std::size_t i = 0; i < n; ++i) c += (d1[i] - m1) * (d2[i] - m2);
  c /= (n - 1) * std::sqrt(v1 * num::variance(d2));
  CHECK(std::abs(c) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("synth_copula_wiener: Gaussian copula rank correlation") {
  const double rho = 0.8;
  const double identity = 2.0 / num::kPi * std::asin(rho);
  // independent sampler oracle for the identity
  std::mt19937_64 eng(99);
  std::normal_distribution<double> nd;
  const std::size_t big = 1000000;
  std::vector<double> x(big), y(big);
  for (std::size_t i = 0; i < big; ++i) {
    x[i] = nd(eng);
    y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * nd(eng);
  }
  CHECK(std::abs(num::kendall_tau(x, y) - identity) < 0.005);

  mvdeg::CopulaWienerModel m;
  m.p = 2;
  m.shapes = {mvdeg::ShapeFn{}, mvdeg::ShapeFn{}};
  m.sigmas = {0.5, 0.5};
  m.noise_sd = {0.0, 0.0};
  m.marginals = {Marginal{MarginalKind::kLognormal, 0.0, 0.5}, Marginal{MarginalKind::kLognormal, 1.0, 0.2}};
  m.copula = CopulaSpec::gaussian2(rho);
  const auto s = synth::synth_copula_wiener(m, 5000, {0.0, 1.0}, RngSpec{8, 0});
  const Eigen::VectorXd a = s.omega.col(0), b = s.omega.col(1);
  CHECK(std::abs(num::kendall_tau({a.data(), 5000}, {b.data(), 5000}) - identity) < 0.05);
}

TEST_CASE("synth_copula_wiener: preconditions") {
  mvdeg::CopulaWienerModel m;
  m.shapes = {mvdeg::ShapeFn{}};
  m.sigmas = {1.0};
  m.noise_sd = {0.0};
  m.marginals = {Marginal{}};
  CHECK_THROWS_AS(synth::synth_copula_wiener(m, 3, {0.5, 1.0}, RngSpec{}), Error);
  CHECK_THROWS_AS(synth::synth_copula_wiener(m, 3, {0.0, 1.0, 1.0}, RngSpec{}), Error);
}
