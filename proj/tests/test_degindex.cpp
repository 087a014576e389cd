#include "degkit/degindex.hpp"
#include "degkit/error.hpp"
#include "degkit/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace degkit;
using namespace degkit::index;

namespace {

// Cox-de Boor recursion on a full knot vector.
double cox_de_boor(const std::vector<double>& t, int i, int k, double x) {
  if (k == 0) {
    const bool last = t[static_cast<std::size_t>(i + 1)] == t.back() && x == t.back() && t[static_cast<std::size_t>(i)] < t.back();
    return (t[static_cast<std::size_t>(i)] <= x && x < t[static_cast<std::size_t>(i + 1)]) || last ? 1.0 : 0.0;
  }
  double v = 0.0;
  const double d1 = t[static_cast<std::size_t>(i + k)] - t[static_cast<std::size_t>(i)];
  const double d2 = t[static_cast<std::size_t>(i + k + 1)] - t[static_cast<std::size_t>(i + 1)];
  if (d1 > 0) v += (x - t[static_cast<std::size_t>(i)]) / d1 * cox_de_boor(t, i, k - 1, x);
  if (d2 > 0) v += (t[static_cast<std::size_t>(i + k + 1)] - x) / d2 * cox_de_boor(t, i + 1, k - 1, x);
  return v;
}

DegIndexModel identity_model(double lo, double hi) {
  DegIndexModel m;
  m.channel_names = {"s1"};
  m.spline.degree = 1;
  m.spline.num_interior_knots = 0;
  m.bases = {BSplineBasis(1, {}, lo, hi)};
  m.centers = {Eigen::VectorXd::Zero(2)};
  m.beta = {Eigen::Vector2d(lo, hi)};
  m.refresh_selected();
  return m;
}

Dataset one_unit(std::vector<double> z, int event) {
  Dataset d;
  d.channel_names = {"s1"};
  UnitRecord u;
  u.unit_id = "u1";
  for (std::size_t k = 0; k < z.size(); ++k) u.times.push_back(static_cast<double>(k + 1));
  u.channels = {z};
  if (event) {
    u.event_indicator = 1;
    u.event_time = u.times.back();
  }
  d.units.push_back(u);
  return d;
}

Dataset keep_channels(const Dataset& d, const std::vector<std::size_t>& keep) {
  Dataset out = d;
  out.channel_names.clear();
  for (auto j : keep) out.channel_names.push_back(d.channel_names[j]);
  for (std::size_t i = 0; i < d.n(); ++i) {
    out.units[i].channels.clear();
    for (auto j : keep) out.units[i].channels.push_back(d.units[i].channels[j]);
  }
  return out;
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

TEST_CASE("eval_index: zero coefficients give a zero index") {
  const auto s = synth::synth_fused_index(5, 3, {1}, 0.1, RngSpec{1, 0});
  const DegIndexModel m = make_model(s.data, SplineSpec{});
  for (const auto& u : s.data.units)
    for (double z : eval_index(m, u)) CHECK(z == 0.0);
}

TEST_CASE("eval_index: degree-1 identity spline reproduces the channel") {
  const DegIndexModel m = identity_model(0.0, 1.0);
  const Dataset d = one_unit({0.0, 0.25, 0.6, 1.0}, 0);
  const auto z = eval_index(m, d.units[0]);
  for (std::size_t k = 0; k < z.size(); ++k) CHECK(z[k] == doctest::Approx(d.units[0].channels[0][k]).epsilon(1e-14));
  // out-of-range inputs clamp
  const auto zc = eval_index(m, one_unit({-1.0, 2.0}, 0).units[0]);
  CHECK(zc[0] == doctest::Approx(0.0));
  CHECK(zc[1] == doctest::Approx(1.0));
}

TEST_CASE("eval_index: cubic contributions match a de Boor oracle") {
  DegIndexModel m;
  m.channel_names = {"a", "b"};
  m.bases = {BSplineBasis(3, {0.3, 0.7}, 0.0, 1.0), BSplineBasis(3, {0.5}, 0.0, 1.0)};
  m.centers = {Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(5)};
  Eigen::VectorXd b1(6), b2(5);
  b1 << 0.3, -1.0, 2.0, 0.5, 1.5, -0.7;
  b2 << 1.0, 0.2, -0.4, 0.9, 2.2;
  m.beta = {b1, b2};
  const std::vector<double> t1{0, 0, 0, 0, 0.3, 0.7, 1, 1, 1, 1}, t2{0, 0, 0, 0, 0.5, 1, 1, 1, 1};
  double expect = 0.0;
  for (int i = 0; i < 6; ++i) expect += b1(i) * cox_de_boor(t1, i, 3, 0.5);
  for (int i = 0; i < 5; ++i) expect += b2(i) * cox_de_boor(t2, i, 3, 0.5);
  UnitRecord u{"u", {1.0}, {{0.5}, {0.5}}, std::nullopt, 0};
  CHECK(eval_index(m, u)[0] == doctest::Approx(expect).epsilon(1e-13));
  UnitRecord bad{"u", {1.0}, {{0.5}}, std::nullopt, 0};
  CHECK_THROWS_AS(eval_index(m, bad), Error);
}

TEST_CASE("objective: plug-in values") {
  const auto s = synth::synth_fused_index(30, 4, {1, 2}, 0.1, RngSpec{2, 0});
  DegIndexModel m = make_model(s.data, SplineSpec{});
  m.lambda1 = 2.0;
  m.lambda2 = 3.0;
  const auto parts = objective(m, s.data);
  CHECK(parts.loss == doctest::Approx(static_cast<double>(s.data.num_events())));
  CHECK(parts.group_penalty == 0.0);
  CHECK(parts.mono_penalty == 0.0);

  DegIndexModel id = identity_model(0.0, 3.0);
  id.lambda2 = 1.0;
  id.c = 0.01;
  CHECK(objective(id, one_unit({0.5, 1.0, 2.0}, 1)).mono_penalty == 0.0);
  const auto down = objective(id, one_unit({2.0, 1.0}, 1));
  CHECK(down.mono_penalty == doctest::Approx(1.01).epsilon(1e-14));
  CHECK(down.loss == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(down.total() == doctest::Approx(down.loss + down.group_penalty + down.mono_penalty));
  id.lambda1 = 0.5;
  CHECK(objective(id, one_unit({1.0}, 1)).group_penalty == doctest::Approx(0.5 * 3.0));
  CHECK_THROWS_WITH(objective(id, one_unit({2.0, 1.0}, 0)), doctest::Contains("objective undefined"));
}

TEST_CASE("monotonicity surcharge variants") {
  CHECK(mono_surcharge(0.0, 0.01, MonoPenalty::kAsWritten) == 0.0);
  CHECK(mono_surcharge(1e-9, 0.01, MonoPenalty::kAsWritten) == doctest::Approx(0.01 + 1e-9));
  CHECK(mono_surcharge(-0.5, 0.01, MonoPenalty::kAsWritten) == 0.0);
  CHECK(mono_surcharge(-0.005, 0.01, MonoPenalty::kHinge) == doctest::Approx(0.005));
  CHECK(mono_surcharge(-0.5, 0.01, MonoPenalty::kHinge) == 0.0);
}

TEST_CASE("fit_index: anchor, sparsity and monotone trace") {
  const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.1, RngSpec{3, 0});
  const auto m = fit_index(s.data, SplineSpec{}, 1.0, 1.0, 0.01);
  REQUIRE(m.feasible);
  double zsum = 0.0;
  for (const auto& u : s.data.units)
    if (u.event_indicator == 1) zsum += eval_index(m, u).back();
  CHECK(zsum / static_cast<double>(s.data.num_events()) == doctest::Approx(1.0).epsilon(1e-10));
  for (std::size_t j = 0; j < m.p(); ++j) {
    const bool sel = contains(m.selected, j);
    if (sel) CHECK(m.beta[j].norm() > 0.0);
    else CHECK(m.beta[j].cwiseAbs().maxCoeff() == 0.0);
  }
  for (std::size_t k = 1; k < m.objective_trace.size(); ++k)
    CHECK(m.objective_trace[k] <= m.objective_trace[k - 1] + 1e-10 * std::max(1.0, std::abs(m.objective_trace[k - 1])));
  CHECK(objective(m, s.data).total() == doctest::Approx(m.objective_trace.back()).epsilon(1e-9));
}

TEST_CASE("fit_index: noiseless support recovery on the default grid") {
  const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.0, RngSpec{4, 0});
  const auto tr = select_tuning(s.data, SplineSpec{}, default_grid(), 0.01);
  CHECK(tr.table.size() == default_grid().size());
  const auto& m = tr.model;
  CHECK(contains(m.selected, 0));
  CHECK(contains(m.selected, 1));
  CHECK(m.selected.size() <= 3);
  // refit on the true channels alone does at least as well
  const double l1 = tr.table[tr.best].lambda1, l2 = tr.table[tr.best].lambda2;
  const Dataset active = keep_channels(s.data, {0, 1});
  const auto sub = fit_index(active, SplineSpec{}, l1, l2, 0.01);
  CHECK(sub.objective_trace.back() <= m.objective_trace.back() * (1 + 1e-6) + 1e-9);
}

TEST_CASE("fit_index: huge lambda1 is reported infeasible") {
  const auto s = synth::synth_fused_index(30, 4, {1}, 0.1, RngSpec{5, 0});
  const auto m = fit_index(s.data, SplineSpec{}, 1e8, 1.0, 0.01);
  CHECK_FALSE(m.feasible);
  for (const auto& b : m.beta) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.selected.empty());
}

TEST_CASE("fit_index: large lambda2 removes decreases") {
  const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.1, RngSpec{6, 0});
  const auto m = fit_index(s.data, SplineSpec{}, 0.3, 1e3, 0.01);
  REQUIRE(m.feasible);
  CHECK(count_violations(m, s.data, 1e-8) == 0);
}

TEST_CASE("fit_index: preconditions") {
  const auto s = synth::synth_fused_index(10, 3, {1}, 0.1, RngSpec{7, 0});
  CHECK_THROWS_AS(fit_index(s.data, SplineSpec{}, -1.0, 0.0, 0.01), Error);
  Dataset none = s.data;
  for (auto& u : none.units) {
    u.event_indicator = 0;
    u.event_time.reset();
  }
  CHECK_THROWS_AS(fit_index(none, SplineSpec{}, 1.0, 1.0, 0.01), Error);
  CHECK_THROWS_AS(make_model(s.data, SplineSpec{0, 5, KnotPlacement::kQuantile}), Error);
}

TEST_CASE("select_tuning: degenerate grids") {
  const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.0, RngSpec{8, 0});
  const auto one = select_tuning(s.data, SplineSpec{}, {{0.3, 1.0}}, 0.01);
  const auto direct = fit_index(s.data, SplineSpec{}, 0.3, 1.0, 0.01);
  CHECK(one.table.size() == 1);
  for (std::size_t j = 0; j < direct.p(); ++j) CHECK((one.model.beta[j] - direct.beta[j]).norm() == 0.0);

  const auto two = select_tuning(s.data, SplineSpec{}, {{0.0, 0.0}, {1.0, 0.0}}, 0.01);
  CHECK(two.table.size() == 2);
  CHECK(two.model.selected.size() <= two.table[0].num_selected);
  CHECK(contains(two.model.selected, 0));
  CHECK(contains(two.model.selected, 1));
  CHECK_THROWS_AS(select_tuning(s.data, SplineSpec{}, {}, 0.01), Error);
}
