#include "degkit/serialize.hpp"

#include "degkit/error.hpp"
#include "degkit/io.hpp"

#include <cmath>
#include <limits>

namespace degkit::json_io {

namespace {

// JSON has no infinities; they travel as strings.
Json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double num_of(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw InputError("expected a number in JSON document, got " + j.dump());
}

const Json& field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw InputError(std::string("JSON document is missing field '") + key + "'");
  return *it;
}

template <class T>
T get(const Json& j, const char* key) {
  return field(j, key).get<T>();
}

double getd(const Json& j, const char* key) { return num_of(field(j, key)); }

std::vector<std::vector<int>> groups_of(const Json& j) { return j.get<std::vector<std::vector<int>>>(); }

}  // namespace

Json document(const std::string& kind, Json body) {
  Json d;
  d["schema_version"] = kSchemaVersion;
  d["kind"] = kind;
  for (auto& [k, v] : body.items()) d[k] = v;
  return d;
}

Json parse_document(const std::string& text, const std::string& kind, const std::string& source) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(source + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("schema_version")) throw InputError(source + ": missing schema_version");
  if (j["schema_version"] != kSchemaVersion)
    throw InputError(source + ": unsupported schema_version " + j["schema_version"].dump());
  if (!kind.empty() && j.value("kind", std::string()) != kind)
    throw InputError(source + ": expected a '" + kind + "' document, found '" + j.value("kind", std::string()) + "'");
  return j;
}

Json read_document(const std::filesystem::path& path, const std::string& kind) {
  return parse_document(read_file(path), kind, path.string());
}

std::string dump(const Json& j) { return j.dump(1) + "\n"; }

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

Json vec(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(Eigen::VectorXd(m.row(r).transpose())));
  return a;
}

Eigen::VectorXd to_vector(const Json& j) {
  require(j.is_array(), "expected a JSON array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = num_of(j[i]);
  return v;
}

std::vector<double> to_std_vector(const Json& j) {
  const Eigen::VectorXd v = to_vector(j);
  return {v.data(), v.data() + v.size()};
}

Eigen::MatrixXd to_matrix(const Json& j) {
  require(j.is_array(), "expected a JSON array of rows");
  if (j.empty()) return {};
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    require(j[r].size() == cols, "ragged matrix in JSON document");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = num_of(j[r][c]);
  }
  return m;
}

Json to_json(const BSplineBasis& b) {
  Json j;
  j["degree"] = b.degree();
  j["lo"] = num(b.lo());
  j["hi"] = num(b.hi());
  j["interior_knots"] = vec(b.interior_knots());
  return j;
}

BSplineBasis bspline_from_json(const Json& j) {
  return BSplineBasis(get<int>(j, "degree"), to_std_vector(field(j, "interior_knots")), getd(j, "lo"), getd(j, "hi"));
}

// ---------------------------------------------------------------------------

Json to_json(const index::DegIndexModel& m) {
  Json j;
  j["channel_names"] = m.channel_names;
  j["spline"] = {{"degree", m.spline.degree},
                 {"num_interior_knots", m.spline.num_interior_knots},
                 {"knot_placement", m.spline.placement == KnotPlacement::kQuantile ? "quantile" : "uniform"}};
  j["lambda1"] = num(m.lambda1);
  j["lambda2"] = num(m.lambda2);
  j["c"] = num(m.c);
  j["mono_penalty"] = m.mono == index::MonoPenalty::kHinge ? "hinge" : "as-written";
  j["zbar"] = num(m.zbar);
  Json sel = Json::array();
  for (auto s : m.selected) sel.push_back(s + 1);
  j["selected"] = sel;
  Json ch = Json::array();
  for (std::size_t k = 0; k < m.p(); ++k) {
    Json c = to_json(m.bases[k]);
    c["name"] = m.channel_names[k];
    c["center"] = vec(m.centers[k]);
    c["beta"] = vec(m.beta[k]);
    ch.push_back(c);
  }
  j["channels"] = ch;
  j["objective_trace"] = vec(m.objective_trace);
  j["converged"] = m.converged;
  j["feasible"] = m.feasible;
  j["sweeps"] = m.sweeps;
  return j;
}

index::DegIndexModel index_model_from_json(const Json& j) {
  index::DegIndexModel m;
  m.channel_names = get<std::vector<std::string>>(j, "channel_names");
  const Json& sp = field(j, "spline");
  m.spline.degree = get<int>(sp, "degree");
  m.spline.num_interior_knots = get<int>(sp, "num_interior_knots");
  m.spline.placement = get<std::string>(sp, "knot_placement") == "uniform" ? KnotPlacement::kUniform
                                                                             : KnotPlacement::kQuantile;
  m.lambda1 = getd(j, "lambda1");
  m.lambda2 = getd(j, "lambda2");
  m.c = getd(j, "c");
  m.mono = get<std::string>(j, "mono_penalty") == "hinge" ? index::MonoPenalty::kHinge : index::MonoPenalty::kAsWritten;
  m.zbar = getd(j, "zbar");
  for (const auto& c : field(j, "channels")) {
    m.bases.push_back(bspline_from_json(c));
    m.centers.push_back(to_vector(field(c, "center")));
    m.beta.push_back(to_vector(field(c, "beta")));
  }
  require(m.bases.size() == m.channel_names.size(), "index model: channel count mismatch");
  m.refresh_selected();
  m.objective_trace = to_std_vector(field(j, "objective_trace"));
  m.converged = get<bool>(j, "converged");
  m.feasible = get<bool>(j, "feasible");
  m.sweeps = get<int>(j, "sweeps");
  return m;
}

// ---------------------------------------------------------------------------

Json to_json(const CopulaSpec& c) {
  Json j;
  j["family"] = to_string(c.family);
  if (c.family == CopulaFamily::kGaussian) j["correlation"] = mat(c.correlation);
  else if (c.family != CopulaFamily::kIndependence) j["theta"] = num(c.theta);
  return j;
}

CopulaSpec copula_from_json(const Json& j) {
  CopulaSpec c;
  c.family = copula_family_from_string(get<std::string>(j, "family"));
  if (c.family == CopulaFamily::kGaussian) c.correlation = to_matrix(field(j, "correlation"));
  else if (c.family != CopulaFamily::kIndependence) c.theta = getd(j, "theta");
  return c;
}

Json to_json(const Marginal& m) { return {{"kind", to_string(m.kind)}, {"a", num(m.a)}, {"b", num(m.b)}}; }

Marginal marginal_from_json(const Json& j) {
  return Marginal{marginal_kind_from_string(get<std::string>(j, "kind")), getd(j, "a"), getd(j, "b")};
}

Json to_json(const mvdeg::CopulaWienerModel& m) {
  Json j;
  j["p"] = m.p;
  j["process"] = m.process;
  Json ch = Json::array();
  for (std::size_t k = 0; k < m.p; ++k) {
    Json c;
    c["shape"] = {{"form", m.shapes[k].form == mvdeg::ShapeForm::kPower ? "power" : "exp-covariate-power"},
                  {"kappa", num(m.shapes[k].kappa)},
                  {"gamma", vec(m.shapes[k].gamma)}};
    c["sigma"] = num(m.sigmas[k]);
    c["noise_sd"] = num(m.noise_sd[k]);
    c["omega_marginal"] = to_json(m.marginals[k]);
    ch.push_back(c);
  }
  j["channels"] = ch;
  j["copula"] = to_json(m.copula);
  return j;
}

mvdeg::CopulaWienerModel mvdeg_model_from_json(const Json& j) {
  mvdeg::CopulaWienerModel m;
  m.p = get<std::size_t>(j, "p");
  m.process = j.value("process", std::string("wiener"));
  for (const auto& c : field(j, "channels")) {
    const Json& s = field(c, "shape");
    mvdeg::ShapeFn sh;
    const auto form = get<std::string>(s, "form");
    if (form == "power") sh.form = mvdeg::ShapeForm::kPower;
    else if (form == "exp-covariate-power") sh.form = mvdeg::ShapeForm::kExpCovariatePower;
    else throw InputError("unknown shape form '" + form + "'");
    sh.kappa = getd(s, "kappa");
    sh.gamma = to_vector(field(s, "gamma"));
    m.shapes.push_back(sh);
    m.sigmas.push_back(getd(c, "sigma"));
    m.noise_sd.push_back(getd(c, "noise_sd"));
    m.marginals.push_back(marginal_from_json(field(c, "omega_marginal")));
  }
  m.copula = copula_from_json(field(j, "copula"));
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------

Json to_json(const fda::FpcaBasis& b) {
  Json j;
  j["channel"] = b.channel;
  j["var_threshold"] = num(b.var_threshold);
  j["L"] = b.L;
  j["var_explained"] = num(b.var_explained);
  j["grid"] = vec(b.grid);
  j["weights"] = vec(b.weights);
  j["mean"] = vec(b.mean);
  j["eigenvalues"] = vec(b.eigenvalues);
  j["eigenfunctions"] = mat(b.eigenfunctions.transpose());  // one row per component
  j["unit_ids"] = b.unit_ids;
  j["scores"] = mat(b.scores);
  return j;
}

fda::FpcaBasis fpca_from_json(const Json& j) {
  fda::FpcaBasis b;
  b.channel = get<std::string>(j, "channel");
  b.var_threshold = getd(j, "var_threshold");
  b.L = get<int>(j, "L");
  b.var_explained = getd(j, "var_explained");
  b.grid = to_std_vector(field(j, "grid"));
  b.weights = to_vector(field(j, "weights"));
  b.mean = to_vector(field(j, "mean"));
  b.eigenvalues = to_vector(field(j, "eigenvalues"));
  b.eigenfunctions = to_matrix(field(j, "eigenfunctions")).transpose();
  b.unit_ids = get<std::vector<std::string>>(j, "unit_ids");
  b.scores = to_matrix(field(j, "scores"));
  return b;
}

// ---------------------------------------------------------------------------

Json to_json(const cluster::PenalizedGmm& m) {
  Json j;
  j["K"] = m.K();
  j["K_max"] = m.K_max;
  j["lambda"] = num(m.lambda);
  j["weights"] = vec(m.weights);
  j["center"] = vec(m.center);
  j["means"] = mat(m.means);
  j["variances"] = vec(m.variances);
  j["groups"] = m.groups;
  j["active_vars"] = m.active_vars;
  j["loglik"] = num(m.loglik);
  j["penalized_loglik"] = num(m.penalized);
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  j["trace"] = vec(m.trace);
  j["pruned_at"] = m.pruned_at;
  return j;
}

cluster::PenalizedGmm gmm_from_json(const Json& j) {
  cluster::PenalizedGmm m;
  m.K_max = get<int>(j, "K_max");
  m.lambda = getd(j, "lambda");
  m.weights = to_vector(field(j, "weights"));
  m.center = to_vector(field(j, "center"));
  m.means = to_matrix(field(j, "means"));
  m.variances = to_vector(field(j, "variances"));
  m.groups = groups_of(field(j, "groups"));
  m.active_vars = get<std::vector<int>>(j, "active_vars");
  m.loglik = getd(j, "loglik");
  m.penalized = getd(j, "penalized_loglik");
  m.iterations = get<int>(j, "iterations");
  m.converged = get<bool>(j, "converged");
  m.trace = to_std_vector(field(j, "trace"));
  m.pruned_at = get<std::vector<int>>(j, "pruned_at");
  return m;
}

// ---------------------------------------------------------------------------

Json to_json(const covreg::EnLifetimeModel& m) {
  Json j;
  j["family"] = "lognormal";
  j["beta0"] = num(m.beta0);
  j["beta"] = vec(m.beta);
  j["sigma"] = num(m.sigma);
  j["sigma_w"] = num(m.sigma_w);
  j["alpha1"] = num(m.alpha1);
  j["alpha2"] = num(m.alpha2);
  j["quad_order"] = m.quad_order;
  j["x_center"] = vec(m.x_center);
  j["x_scale"] = vec(m.x_scale);
  j["covariate_names"] = m.covariate_names;
  j["selected"] = m.selected();
  j["objective_trace"] = vec(m.objective_trace);
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  return j;
}

covreg::EnLifetimeModel en_model_from_json(const Json& j) {
  covreg::EnLifetimeModel m;
  m.beta0 = getd(j, "beta0");
  m.beta = to_vector(field(j, "beta"));
  m.sigma = getd(j, "sigma");
  m.sigma_w = getd(j, "sigma_w");
  m.alpha1 = getd(j, "alpha1");
  m.alpha2 = getd(j, "alpha2");
  m.quad_order = get<int>(j, "quad_order");
  m.x_center = to_vector(field(j, "x_center"));
  m.x_scale = to_vector(field(j, "x_scale"));
  m.covariate_names = get<std::vector<std::string>>(j, "covariate_names");
  m.objective_trace = to_std_vector(field(j, "objective_trace"));
  m.iterations = get<int>(j, "iterations");
  m.converged = get<bool>(j, "converged");
  return m;
}

Json to_json(const covreg::FuncRegModel& m) {
  Json j;
  j["beta0"] = num(m.beta0);
  j["psi_basis"] = to_json(m.basis);
  j["psi_coef"] = vec(m.psi_coef);
  j["beta"] = vec(m.beta);
  j["sigma"] = num(m.sigma);
  j["smooth"] = num(m.smooth);
  return j;
}

covreg::FuncRegModel funcreg_model_from_json(const Json& j) {
  covreg::FuncRegModel m;
  m.beta0 = getd(j, "beta0");
  m.basis = bspline_from_json(field(j, "psi_basis"));
  m.psi_coef = to_vector(field(j, "psi_coef"));
  m.beta = to_vector(field(j, "beta"));
  m.sigma = getd(j, "sigma");
  m.smooth = getd(j, "smooth");
  return m;
}

Json to_json(const covreg::TensorRegModel& m) {
  Json j;
  j["link"] = to_string(m.link);
  j["rank"] = m.rank();
  j["alpha0"] = num(m.alpha0);
  j["U"] = mat(m.U);
  j["V"] = mat(m.V);
  j["rows"] = m.U.rows();
  j["cols"] = m.V.rows();
  j["noise_sd"] = num(m.noise_sd);
  j["objective_trace"] = vec(m.objective_trace);
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  return j;
}

covreg::TensorRegModel tensor_model_from_json(const Json& j) {
  covreg::TensorRegModel m;
  m.link = covreg::link_from_string(get<std::string>(j, "link"));
  m.alpha0 = getd(j, "alpha0");
  const auto rank = get<int>(j, "rank");
  m.U = to_matrix(field(j, "U"));
  m.V = to_matrix(field(j, "V"));
  if (rank == 0) {
    m.U.resize(get<Eigen::Index>(j, "rows"), 0);
    m.V.resize(get<Eigen::Index>(j, "cols"), 0);
  }
  m.noise_sd = getd(j, "noise_sd");
  m.objective_trace = to_std_vector(field(j, "objective_trace"));
  m.iterations = get<int>(j, "iterations");
  m.converged = get<bool>(j, "converged");
  return m;
}

// ---------------------------------------------------------------------------

Json to_json(const st::StGrid& g) {
  return {{"rows", g.rows}, {"cols", g.cols}, {"h", num(g.h)}, {"boundary", to_string(g.boundary)}};
}

st::StGrid grid_from_json(const Json& j) {
  st::StGrid g;
  g.rows = get<int>(j, "rows");
  g.cols = get<int>(j, "cols");
  g.h = getd(j, "h");
  g.boundary = st::boundary_from_string(get<std::string>(j, "boundary"));
  g.validate();
  return g;
}

Json to_json(const st::StPosterior& p) {
  Json j;
  j["grid"] = to_json(p.grid);
  j["tau"] = p.tau;
  j["boundary_series"] = vec(p.boundary_series);
  j["draws"] = p.draws();
  j["alpha"] = vec(p.alpha);
  j["q"] = vec(p.q);
  j["r"] = vec(p.r);
  Json ch = Json::array();
  for (const auto& c : p.chains)
    ch.push_back({{"acceptance", num(c.acceptance)},
                  {"step", num(c.step)},
                  {"ess_alpha", num(c.ess_alpha)},
                  {"ess_q", num(c.ess_q)},
                  {"ess_r", num(c.ess_r)}});
  j["chains"] = ch;
  j["warnings"] = p.warnings;
  j["U_mean"] = mat(p.U_mean);
  j["U_var"] = mat(p.U_var);
  j["U_last"] = mat(p.U_last);
  return j;
}

st::StPosterior posterior_from_json(const Json& j) {
  st::StPosterior p;
  p.grid = grid_from_json(field(j, "grid"));
  p.tau = get<int>(j, "tau");
  p.boundary_series = to_std_vector(field(j, "boundary_series"));
  p.alpha = to_std_vector(field(j, "alpha"));
  p.q = to_std_vector(field(j, "q"));
  p.r = to_std_vector(field(j, "r"));
  for (const auto& c : field(j, "chains"))
    p.chains.push_back(st::ChainDiagnostics{getd(c, "acceptance"), getd(c, "step"), getd(c, "ess_alpha"),
                                            getd(c, "ess_q"), getd(c, "ess_r")});
  p.warnings = get<std::vector<std::string>>(j, "warnings");
  p.U_mean = to_matrix(field(j, "U_mean"));
  p.U_var = to_matrix(field(j, "U_var"));
  p.U_last = to_matrix(field(j, "U_last"));
  require(p.q.size() == p.alpha.size() && p.r.size() == p.alpha.size() &&
              static_cast<std::size_t>(p.U_last.rows()) == p.alpha.size(),
          "posterior document: draw counts disagree");
  require(p.U_last.cols() == p.grid.m(), "posterior document: U_last width != grid size");
  return p;
}

}  // namespace degkit::json_io
