#include "degkit/error.hpp"
#include "degkit/serialize.hpp"
#include "degkit/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace degkit;
using namespace degkit::json_io;

namespace {

// Writes, re-reads and writes again; the two texts must agree byte for byte.
template <class T, class Load>
T round_trip(const T& x, const std::string& kind, Load load) {
  const std::string a = dump(document(kind, to_json(x)));
  const T y = load(parse_document(a, kind));
  const std::string b = dump(document(kind, to_json(y)));
  CHECK(a == b);
  return y;
}

}  // namespace

TEST_CASE("documents carry schema version and kind") {
  const Json d = document("thing", Json{{"x", 1}});
  CHECK(d["schema_version"] == kSchemaVersion);
  CHECK(d["kind"] == "thing");
  CHECK(dump(d).back() == '\n');
  CHECK_THROWS_AS(parse_document(dump(d), "other"), Error);
  CHECK_THROWS_AS(parse_document("{\"schema_version\": \"99\", \"kind\": \"thing\"}", "thing"), Error);
  CHECK_THROWS_AS(parse_document("{not json", "thing"), Error);
}

TEST_CASE("non-finite numbers survive") {
  const Eigen::Vector3d v(std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.1);
  const Eigen::VectorXd w = to_vector(Json::parse(vec(v).dump()));
  CHECK(std::isinf(w(0)));
  CHECK(w(0) > 0);
  CHECK(w(1) < 0);
  CHECK(w(2) == 0.1);
  const Eigen::VectorXd n = to_vector(Json::parse(vec(std::vector<double>{std::nan("")}).dump()));
  CHECK(std::isnan(n(0)));
}

TEST_CASE("index model") {
  const auto s = synth::synth_fused_index(40, 4, {1, 2}, 0.02, RngSpec{1, 0});
  const auto m = index::fit_index(s.data, {}, 0.5, 1.0, 0.01);
  const auto r = round_trip(m, "index-model", index_model_from_json);
  CHECK(r.selected == m.selected);
  const auto a = index::eval_index(m, s.data.units[3]), b = index::eval_index(r, s.data.units[3]);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("copula-Wiener model") {
  mvdeg::CopulaWienerModel m;
  m.p = 2;
  m.shapes = {mvdeg::ShapeFn{}, mvdeg::ShapeFn{mvdeg::ShapeForm::kPower, 1.3, {}}};
  m.sigmas = {0.5, 0.7};
  m.noise_sd = {0.0, 0.1};
  m.marginals = {Marginal{MarginalKind::kLognormal, 0.1, 0.4}, Marginal{MarginalKind::kGamma, 2.0, 0.5}};
  m.copula = CopulaSpec::archimedean(CopulaFamily::kGumbel, 1.7);
  const auto r = round_trip(m, "mvdeg-model", mvdeg_model_from_json);
  CHECK(r.copula.family == CopulaFamily::kGumbel);
  CHECK(r.marginals[1].kind == MarginalKind::kGamma);
  CHECK(r.shapes[1].kappa == 1.3);
}

TEST_CASE("FPCA basis and mixture model") {
  const auto s = synth::synth_fpca_rank2(30, 21, 2.0, 1.0, 0.1, RngSpec{2, 0});
  const auto b = fda::fpca(s.sample);
  const auto rb = round_trip(b, "fpca-basis", fpca_from_json);
  CHECK((rb.eigenfunctions - b.eigenfunctions).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rb.L == b.L);

  const auto c = synth::synth_cluster_scores(60, 3, 2, 2, 4.0, RngSpec{3, 0});
  const auto g = cluster::fit_em(c.scores, 2, 1.0, RngSpec{4, 0}).model;
  const auto rg = round_trip(g, "cluster-model", gmm_from_json);
  CHECK(cluster::penalized_loglik(rg, c.scores) == cluster::penalized_loglik(g, c.scores));
}

TEST_CASE("regression models") {
  const auto s = synth::synth_lifetime(60, 4, {{0, 1.0}}, 0.5, 0.0, 0.2, RngSpec{5, 0});
  const auto en = covreg::fit_en_lifetime(s.data.times, s.data.delta, s.data.x, 1.0, 0.5);
  const auto ren = round_trip(en, "en-model", en_model_from_json);
  CHECK(ren.eta(s.data.x.row(2).transpose()) == en.eta(s.data.x.row(2).transpose()));

  covreg::FuncRegModel fr;
  fr.basis = fda::psi_basis(0.0, 1.0, 6);
  fr.psi_coef = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
  fr.beta0 = 0.3;
  fr.sigma = 0.2;
  const auto rfr = round_trip(fr, "funcreg-model", funcreg_model_from_json);
  CHECK(rfr.psi(0.37) == fr.psi(0.37));

  const auto t = synth::synth_tensor(60, 4, 3, 1, false, 1.0, 0.1, RngSpec{6, 0});
  const auto tm = covreg::fit_tensorreg(t.y, t.images, 1, covreg::Link::kIdentity);
  const auto rtm = round_trip(tm, "tensor-model", tensor_model_from_json);
  CHECK(rtm.predict(t.images[0]) == tm.predict(t.images[0]));
  const auto t0 = covreg::fit_tensorreg(t.y, t.images, 0, covreg::Link::kIdentity);
  const auto r0 = round_trip(t0, "tensor-model", tensor_model_from_json);
  CHECK(r0.B().rows() == 4);
  CHECK(r0.B().cols() == 3);
}

TEST_CASE("spatio-temporal posterior") {
  st::StGrid g{3, 3, 0.5, st::Boundary::kFixedValue};
  st::StModel sm;
  sm.alpha = 0.02;
  sm.mu0 = Eigen::VectorXd::Zero(1);
  sm.s0 = 1.0;
  sm.tau = 10;
  sm.boundary_series = {1.0};
  const auto f = st::simulate_field(sm, g, RngSpec{7, 0});
  st::GibbsOptions o;
  o.iters = 60;
  o.burn_in = 20;
  o.boundary_series = {1.0};
  const auto p = st::gibbs_fit(f.D, g, st::StPriors{}, o, RngSpec{8, 0});
  const auto r = round_trip(p, "st-posterior", posterior_from_json);
  CHECK(r.grid.boundary == st::Boundary::kFixedValue);
  CHECK(r.draws() == p.draws());
  CHECK((r.U_last - p.U_last).cwiseAbs().maxCoeff() == 0.0);
}
