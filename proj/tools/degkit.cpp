// degkit: batch command-line front end.

#include "degkit/degindex.hpp"
#include "degkit/error.hpp"
#include "degkit/funcdata.hpp"
#include "degkit/io.hpp"
#include "degkit/mvdeg.hpp"
#include "degkit/numerics.hpp"
#include "degkit/serialize.hpp"
#include "degkit/sigclust.hpp"
#include "degkit/stdeg.hpp"
#include "degkit/synth.hpp"
#include "degkit/version.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace degkit;
using json_io::Json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Parameters: config file values overlaid by command-line values.

class Params {
 public:
  std::map<std::string, std::string> values;

  bool has(const std::string& k) const { return values.count(k) > 0; }

  std::string need(const std::string& k) const {
    auto it = values.find(k);
    if (it == values.end() || it->second.empty()) throw UsageError("missing required option --" + k);
    return it->second;
  }
  std::string str(const std::string& k, const std::string& def) const {
    auto it = values.find(k);
    return it == values.end() ? def : it->second;
  }
  double num(const std::string& k, double def) const { return has(k) ? to_num(k, values.at(k)) : def; }
  double need_num(const std::string& k) const { return to_num(k, need(k)); }
  long integer(const std::string& k, long def) const {
    if (!has(k)) return def;
    const double v = to_num(k, values.at(k));
    if (v != std::floor(v)) throw UsageError("--" + k + " expects an integer");
    return static_cast<long>(v);
  }
  std::size_t count(const std::string& k, std::size_t def) const {
    const long v = integer(k, static_cast<long>(def));
    if (v < 0) throw UsageError("--" + k + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  bool flag(const std::string& k, bool def) const {
    if (!has(k)) return def;
    const auto& v = values.at(k);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("--" + k + " expects true or false");
  }
  std::vector<double> nums(const std::string& k, std::vector<double> def) const {
    if (!has(k)) return def;
    std::vector<double> out;
    for (const auto& s : split(values.at(k), ',')) out.push_back(to_num(k, s));
    return out;
  }
  std::vector<std::string> strs(const std::string& k, const std::string& def) const {
    return split(str(k, def), ',');
  }

 private:
  static double to_num(const std::string& k, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("--" + k + ": '" + s + "' is not a number");
  }
};

std::map<std::string, std::string> read_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw UsageError(std::string("cannot read config: ") + e.what());
  }
  std::map<std::string, std::string> out;
  auto key_of = [](std::string k) {
    k = trim(k);
    while (!k.empty() && k.front() == '-') k.erase(k.begin());
    return k;
  };
  const std::string t = trim(text);
  if (!t.empty() && t.front() == '{') {
    Json j;
    try {
      j = Json::parse(t);
    } catch (const std::exception& e) {
      throw UsageError(path.string() + ": invalid JSON config: " + e.what());
    }
    auto scalar = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    for (auto& [k, v] : j.items()) {
      if (v.is_array()) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + scalar(v[i]);
        out[key_of(k)] = s;
      } else if (v.is_object()) {
        throw UsageError(path.string() + ": nested object for key '" + k + "'");
      } else {
        out[key_of(k)] = scalar(v);
      }
    }
    return out;
  }
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path.string() + ":" + std::to_string(ln) + ": expected key=value");
    out[key_of(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run context: inputs are digested, outputs land under --out-dir.

class Run {
 public:
  Params p;
  fs::path out_dir;
  RngSpec rng;
  int threads = 1;

  fs::path input(const std::string& key) {
    const fs::path path = p.need(key);
    if (!fs::is_regular_file(path)) throw InputError("--" + key + ": no such file " + path.string());
    add_input(path);
    return path;
  }
  void add_input(const fs::path& path) { inputs_.emplace_back(path.string(), sha256_hex(read_file(path))); }

  /// Output file name from --<key> (default `def`), resolved inside out_dir.
  std::string out_name(const std::string& key, const std::string& def) const {
    const fs::path rel = p.str(key, def);
    if (rel.empty() || rel.is_absolute()) throw UsageError("--" + key + " must be a relative path inside --out-dir");
    for (const auto& part : rel)
      if (part == "..") throw UsageError("--" + key + " may not leave --out-dir");
    return rel.lexically_normal().string();
  }
  void write(const std::string& rel, const std::string& contents) {
    const fs::path path = out_dir / rel;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, contents);
    outputs_.emplace_back(rel, sha256_hex(contents));
  }
  void write_json(const std::string& rel, const std::string& kind, Json body) {
    write(rel, json_io::dump(json_io::document(kind, std::move(body))));
  }

  Json manifest_inputs() const { return digests(inputs_); }
  Json manifest_outputs() const { return digests(outputs_); }

 private:
  static Json digests(const std::vector<std::pair<std::string, std::string>>& v) {
    Json a = Json::array();
    for (const auto& [path, sha] : v) a.push_back({{"path", path}, {"sha256", sha}});
    return a;
  }
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

std::string f(double x) { return format_double(x); }

std::string csv_t_prob(const std::vector<double>& t, const std::vector<double>& prob) {
  std::ostringstream os;
  os << "t,prob\n";
  for (std::size_t k = 0; k < t.size(); ++k) os << f(t[k]) << ',' << f(prob[k]) << '\n';
  return os.str();
}

std::string long_csv(const Dataset& d, Schema s) {
  std::ostringstream os;
  write_long_csv(d, os, s);
  return os.str();
}

std::string curves_csv(const CurveTable& t) {
  std::ostringstream os;
  write_curves_csv(t, os);
  return os.str();
}

CurveTable table_from_sample(const fda::FunctionalSample& s) {
  CurveTable t;
  for (std::size_t i = 0; i < s.n(); ++i) {
    CurveRecord r;
    r.unit_id = s.unit_ids.empty() ? "u" + std::to_string(i + 1) : s.unit_ids[i];
    r.args = s.grid;
    r.values.assign(s.curves.row(static_cast<Eigen::Index>(i)).data(),
                    s.curves.row(static_cast<Eigen::Index>(i)).data() + s.grid.size());
    for (std::size_t g = 0; g < s.grid.size(); ++g) r.values[g] = s.curves(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g));
    t.curves.push_back(std::move(r));
  }
  return t;
}

Dataset field_dataset(const Eigen::MatrixXd& D, int rows, int cols) {
  Dataset d;
  d.meta["rows"] = std::to_string(rows);
  d.meta["cols"] = std::to_string(cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) d.channel_names.push_back("r" + std::to_string(i) + "c" + std::to_string(j));
  UnitRecord u{"field", {}, std::vector<std::vector<double>>(static_cast<std::size_t>(D.cols())), std::nullopt, 0};
  for (Eigen::Index t = 0; t < D.rows(); ++t) {
    u.times.push_back(static_cast<double>(t));
    for (Eigen::Index k = 0; k < D.cols(); ++k) u.channels[static_cast<std::size_t>(k)].push_back(D(t, k));
  }
  d.units.push_back(std::move(u));
  return d;
}

Marginal default_marginal(const std::string& name) {
  switch (marginal_kind_from_string(name)) {
    case MarginalKind::kLognormal: return {MarginalKind::kLognormal, 0.0, 1.0};
    case MarginalKind::kWeibull: return {MarginalKind::kWeibull, 1.5, 1.0};
    case MarginalKind::kGamma: return {MarginalKind::kGamma, 2.0, 0.5};
    case MarginalKind::kDegenerate: return {MarginalKind::kDegenerate, 1.0, 0.0};
  }
  throw UsageError("unknown marginal '" + name + "'");
}

CopulaSpec make_copula(const std::string& family, std::size_t p, const Params& prm, double rho_def, double theta_def) {
  CopulaFamily fam;
  try {
    fam = copula_family_from_string(family);
  } catch (const std::exception&) {
    throw UsageError("unknown copula '" + family + "'");
  }
  switch (fam) {
    case CopulaFamily::kIndependence: return CopulaSpec::independence();
    case CopulaFamily::kGaussian: {
      const double rho = prm.num("rho", rho_def);
      Eigen::MatrixXd r = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p), rho);
      r.diagonal().setOnes();
      return CopulaSpec::gaussian(r);
    }
    default: return CopulaSpec::archimedean(fam, prm.num("theta", theta_def));
  }
}

template <class T>
std::vector<T> broadcast(std::vector<T> v, std::size_t p, const std::string& what) {
  if (v.size() == 1) v.assign(p, v.front());
  if (v.size() != p) throw UsageError("--" + what + " needs 1 or " + std::to_string(p) + " values");
  return v;
}

Eigen::MatrixXd field_matrix(const Dataset& d) {
  const auto& u = d.units.front();
  Eigen::MatrixXd D(static_cast<Eigen::Index>(u.times.size()), static_cast<Eigen::Index>(d.p()));
  for (std::size_t k = 0; k < d.p(); ++k)
    for (std::size_t t = 0; t < u.times.size(); ++t) D(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = u.channels[k][t];
  return D;
}

// ---------------------------------------------------------------------------
// simulate

void simulate(Run& run) {
  const Params& p = run.p;
  const std::string kind = p.need("kind");
  if (kind == "fused-index") {
    std::vector<std::size_t> active;
    for (double a : p.nums("active", {1, 2})) active.push_back(static_cast<std::size_t>(a));
    auto s = synth::synth_fused_index(p.count("n", 50), p.count("p", 10), active, p.num("noise-sd", 0.1), run.rng);
    run.write("data.csv", long_csv(s.data, Schema::kDegradation));
    run.write("events.csv", long_csv(s.data, Schema::kEvents));
    Json lat = Json::array();
    for (const auto& z : s.truth.latent_index) lat.push_back(json_io::vec(z));
    run.write_json("truth.json", "fused-index-truth",
                   {{"active", s.truth.active}, {"threshold", s.truth.threshold},
                    {"crossing_time", json_io::vec(s.truth.crossing_time)}, {"latent_index", lat}});
  } else if (kind == "copula-wiener") {
    const auto margs = p.strs("marginals", "lognormal,lognormal");
    const std::size_t dim = margs.size();
    mvdeg::CopulaWienerModel m;
    m.p = dim;
    const auto ma = broadcast(p.nums("marginal-a", {0.0}), dim, "marginal-a");
    const auto mb = broadcast(p.nums("marginal-b", {0.5}), dim, "marginal-b");
    const auto kappa = broadcast(p.nums("kappa", {1.0}), dim, "kappa");
    m.sigmas = broadcast(p.nums("sigma", {0.5}), dim, "sigma");
    m.noise_sd = broadcast(p.nums("noise-sd", {0.05}), dim, "noise-sd");
    for (std::size_t k = 0; k < dim; ++k) {
      m.marginals.push_back({marginal_kind_from_string(margs[k]), ma[k], mb[k]});
      m.shapes.push_back({mvdeg::ShapeForm::kPower, kappa[k], {}});
    }
    m.copula = make_copula(p.str("copula", "gaussian"), dim, p, 0.8, 2.0);
    m.validate();
    const std::size_t nt = p.count("times", 50);
    if (nt < 2) throw UsageError("--times must be >= 2");
    std::vector<double> grid;
    for (std::size_t k = 0; k < nt; ++k) grid.push_back(static_cast<double>(k) * p.num("span", 1.0) / static_cast<double>(nt - 1));
    auto s = synth::synth_copula_wiener(m, p.count("n", 100), grid, run.rng);
    run.write("data.csv", long_csv(s.data, Schema::kDegradation));
    std::ostringstream om;
    om << "unit_id";
    for (std::size_t k = 0; k < dim; ++k) om << ",omega" << k + 1;
    om << '\n';
    for (std::size_t i = 0; i < s.data.n(); ++i) {
      om << s.data.units[i].unit_id;
      for (std::size_t k = 0; k < dim; ++k) om << ',' << f(s.omega(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
      om << '\n';
    }
    run.write("omega.csv", om.str());
    run.write_json("truth.json", "mvdeg-model", {{"model", json_io::to_json(m)}});
  } else if (kind == "fpca") {
    auto s = synth::synth_fpca_rank2(p.count("n", 500), p.count("grid", 101), p.num("var-a", 4.0), p.num("var-b", 1.0),
                                     p.num("noise-sd", 0.0), run.rng);
    run.write("curves.csv", curves_csv(table_from_sample(s.sample)));
    run.write_json("truth.json", "fpca-truth",
                   {{"eigenvalues", json_io::vec(Eigen::VectorXd(s.true_eigenvalues))},
                    {"eigenfunctions", json_io::mat(s.true_eigenfunctions.transpose())},
                    {"scores", json_io::mat(s.true_scores)}});
  } else if (kind == "cluster-curves") {
    auto s = synth::synth_cluster_curves(p.count("n", 300), static_cast<int>(p.integer("K", 3)), p.count("grid", 50),
                                         p.num("noise-sd", 0.1), run.rng);
    run.write("curves.csv", curves_csv(s.table));
    std::ostringstream os;
    os << "unit_id,cluster\n";
    for (std::size_t i = 0; i < s.unit_ids.size(); ++i) os << s.unit_ids[i] << ',' << s.labels[i] + 1 << '\n';
    run.write("labels.csv", os.str());
  } else if (kind == "lifetime") {
    const auto beta = p.nums("beta", {1.0, -0.8, 0.6});
    std::vector<std::pair<std::size_t, double>> active;
    for (std::size_t k = 0; k < beta.size(); ++k) active.emplace_back(k, beta[k]);
    auto s = synth::synth_lifetime(p.count("n", 300), p.count("p", 50), active, p.num("sigma", 0.5),
                                   p.num("sigma-w", 0.3), p.num("censor", 0.2), run.rng);
    std::ostringstream os;
    write_survival_csv(s.data, os);
    run.write("surv.csv", os.str());
    run.write_json("truth.json", "lifetime-truth",
                   {{"beta0", s.beta0}, {"beta", json_io::vec(s.beta)}, {"sigma", s.sigma}, {"sigma_w", s.sigma_w}});
  } else if (kind == "funcreg") {
    auto s = synth::synth_funcreg(p.count("n", 40), p.count("times", 10), p.count("grid", 50), p.num("noise-sd", 0.05),
                                  run.rng);
    CurveTable t;
    for (const auto& x : s.covariates)
      for (std::size_t k = 0; k < x.times.size(); ++k) {
        CurveRecord r;
        r.unit_id = x.unit_id;
        r.time = x.times[k];
        r.args = x.grid;
        for (std::size_t g = 0; g < x.grid.size(); ++g) r.values.push_back(x.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g)));
        t.curves.push_back(std::move(r));
      }
    run.write("covariates.csv", curves_csv(t));
    std::ostringstream os;
    os << "unit_id,time,y\n";
    for (Eigen::Index r = 0; r < s.y.size(); ++r)
      os << s.covariates[s.unit_of_row[static_cast<std::size_t>(r)]].unit_id << ',' << f(s.time_of_row[static_cast<std::size_t>(r)])
         << ',' << f(s.y(r)) << '\n';
    run.write("response.csv", os.str());
    run.write_json("truth.json", "funcreg-truth",
                   {{"beta0", s.beta0}, {"lambda", json_io::vec(s.lambda_grid)}, {"psi", json_io::vec(s.psi_truth)}});
  } else if (kind == "tensor") {
    const std::string link = p.str("link", "identity");
    const bool log_link = covreg::link_from_string(link) == covreg::Link::kLog;
    auto s = synth::synth_tensor(p.count("n", 500), static_cast<int>(p.integer("rows", 16)), static_cast<int>(p.integer("cols", 16)),
                                 static_cast<int>(p.integer("rank", 1)), log_link, p.num("scale", log_link ? 0.05 : 1.0),
                                 p.num("noise-sd", 0.0), run.rng);
    std::ostringstream man;
    man << "unit_id,path,y\n";
    for (std::size_t i = 0; i < s.images.size(); ++i) {
      const std::string id = "u" + std::to_string(i + 1);
      std::ostringstream img;
      write_matrix_text(s.images[i], img);
      run.write("images/" + id + ".txt", img.str());
      man << id << ",images/" << id << ".txt," << f(s.y(static_cast<Eigen::Index>(i))) << '\n';
    }
    run.write("images.csv", man.str());
    run.write_json("truth.json", "tensor-truth", {{"link", link}, {"alpha0", s.alpha0}, {"B", json_io::mat(s.B)}});
  } else if (kind == "field") {
    st::StGrid g;
    g.rows = static_cast<int>(p.integer("rows", 16));
    g.cols = static_cast<int>(p.integer("cols", 16));
    g.h = p.num("spacing", 1.0);
    g.boundary = st::boundary_from_string(p.str("boundary", "zero-flux"));
    g.validate();
    st::StModel m;
    m.alpha = p.num("alpha", 0.1);
    m.q = p.num("q", 0.05);
    m.r = p.num("r", 0.2);
    m.mu0 = Eigen::VectorXd::Constant(1, p.num("mu0", 0.0));
    m.s0 = p.num("s0", 1.0);
    m.tau = static_cast<int>(p.integer("tau", 30));
    m.boundary_series = p.nums("boundary-series", {0.0});
    auto fld = st::simulate_field(m, g, run.rng);
    run.write("field.csv", long_csv(field_dataset(fld.D, g.rows, g.cols), Schema::kField));
    run.write("latent.csv", long_csv(field_dataset(fld.U, g.rows, g.cols), Schema::kField));
    run.write_json("truth.json", "field-truth",
                   {{"grid", json_io::to_json(g)}, {"alpha", m.alpha}, {"q", m.q}, {"r", m.r}, {"s0", m.s0},
                    {"mu0", m.mu0(0)}, {"tau", m.tau}, {"boundary_series", json_io::vec(m.boundary_series)}});
  } else {
    throw UsageError("unknown --kind '" + kind + "'");
  }
}

// ---------------------------------------------------------------------------

void fit_index_cmd(Run& run) {
  const Params& p = run.p;
  Dataset data = load_long_csv(run.input("data"), Schema::kDegradation);
  data = join_events(std::move(data), load_long_csv(run.input("events"), Schema::kEvents));
  index::SplineSpec sp;
  sp.degree = static_cast<int>(p.integer("degree", 3));
  sp.num_interior_knots = static_cast<int>(p.integer("knots", 5));
  const std::string placement = p.str("knot-placement", "quantile");
  if (placement != "quantile" && placement != "uniform") throw UsageError("--knot-placement must be quantile or uniform");
  sp.placement = placement == "uniform" ? KnotPlacement::kUniform : KnotPlacement::kQuantile;
  index::FitOptions opts;
  const std::string mono = p.str("mono", "as-written");
  if (mono != "as-written" && mono != "hinge") throw UsageError("--mono must be as-written or hinge");
  opts.mono = mono == "hinge" ? index::MonoPenalty::kHinge : index::MonoPenalty::kAsWritten;
  opts.max_sweeps = static_cast<int>(p.integer("max-sweeps", opts.max_sweeps));
  const double c = p.num("c", 0.01);
  index::DegIndexModel model;
  if (p.has("lambda1") && p.str("lambda1", "") != "auto") {
    model = index::fit_index(data, sp, p.need_num("lambda1"), p.num("lambda2", 1.0), c, opts);
  } else {
    auto tr = index::select_tuning(data, sp, index::default_grid(), c, opts);
    model = std::move(tr.model);
    std::ostringstream os;
    os << "lambda1,lambda2,loss,df,bic,feasible,selected\n";
    for (const auto& r : tr.table)
      os << f(r.lambda1) << ',' << f(r.lambda2) << ',' << f(r.loss) << ',' << r.df << ',' << f(r.bic) << ','
         << r.feasible << ',' << r.num_selected << '\n';
    run.write("tuning.csv", os.str());
  }
  Json body = json_io::to_json(model);
  body["violations"] = index::count_violations(model, data);
  run.write_json(run.out_name("out", "model.json"), "degindex-model", body);
}

void fit_mvdeg_cmd(Run& run) {
  const Params& p = run.p;
  const Dataset data = load_long_csv(run.input("data"), Schema::kDegradation);
  const std::size_t dim = data.p();
  mvdeg::CopulaWienerModel init;
  init.p = dim;
  const auto margs = broadcast(p.strs("marginals", "lognormal"), dim, "marginals");
  for (const auto& name : margs) {
    try {
      init.marginals.push_back(default_marginal(name));
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError("unknown marginal '" + name + "'");
    }
  }
  const auto kappa = broadcast(p.nums("kappa", {1.0}), dim, "kappa");
  for (double k : kappa) init.shapes.push_back({mvdeg::ShapeForm::kPower, k, {}});
  init.sigmas = broadcast(p.nums("sigma", {1.0}), dim, "sigma");
  init.noise_sd = broadcast(p.nums("noise-sd", {0.1}), dim, "noise-sd");
  init.copula = make_copula(p.str("copula", "gaussian"), dim, p, 0.0, 1.0);
  mvdeg::McemOptions o;
  o.mc_draws = p.count("mc-draws", o.mc_draws);
  o.max_iters = static_cast<int>(p.integer("max-iters", o.max_iters));
  o.tol = p.num("tol", o.tol);
  o.fit_shape = p.flag("fit-shape", true);
  o.fit_noise = p.flag("fit-noise", true);
  o.threads = run.threads;
  auto res = mvdeg::fit_mcem(data, init, o, run.rng);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  Json trace = Json::array();
  std::ostringstream os;
  os << "iter,mc_loglik,min_ess,mc_draws,copula_param\n";
  for (const auto& it : res.trace)
    os << it.iter << ',' << f(it.mc_loglik) << ',' << f(it.min_ess) << ',' << it.mc_draws << ',' << f(it.copula_param) << '\n';
  run.write("trace.csv", os.str());
  run.write_json(run.out_name("out", "model.json"), "mvdeg-model",
                 {{"model", json_io::to_json(res.model)},
                  {"copula_parameter", mvdeg::copula_parameter(res.model.copula)},
                  {"converged", res.converged},
                  {"iterations", res.trace.size()},
                  {"warnings", res.warnings}});
}

void predict_fp_cmd(Run& run) {
  const Params& p = run.p;
  const Json doc = json_io::read_document(run.input("model"), "mvdeg-model");
  const auto model = json_io::mvdeg_model_from_json(doc.at("model"));
  const auto thr = broadcast(p.nums("threshold", {}), model.p, "threshold");
  const std::string mode = p.str("mode", "any");
  if (mode != "any" && mode != "all") throw UsageError("--mode must be any or all");
  mvdeg::FirstPassageOptions o;
  o.n_mc = p.count("n-mc", o.n_mc);
  o.t_max = p.num("t-max", 0.0);
  o.grid_points = p.count("grid-points", o.grid_points);
  const auto xv = p.nums("x", {});
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(xv.data(), static_cast<Eigen::Index>(xv.size()));
  auto r = mvdeg::first_passage(model, x, thr, mode == "any" ? mvdeg::PassageMode::kAnyChannel : mvdeg::PassageMode::kAllChannels,
                                o, run.rng);
  run.write(run.out_name("out", "cdf.csv"), csv_t_prob(r.grid, r.cdf));
  run.write_json("summary.json", "first-passage-summary",
                 {{"mean", r.mean}, {"std_error", r.std_error}, {"prob_never", r.prob_never}, {"n_mc", o.n_mc}});
}

fda::FunctionalSample pick_channel(const CurveTable& t, const std::string& channel) {
  auto samples = fda::samples_from_table(t);
  if (channel.empty()) return samples.front();
  for (auto& s : samples)
    if (s.channel == channel) return s;
  throw InputError("no curves for channel '" + channel + "'");
}

void fpca_cmd(Run& run) {
  const Params& p = run.p;
  const CurveTable t = load_curves_csv(run.input("curves"));
  const auto sample = pick_channel(t, p.str("channel", ""));
  const auto basis = fda::fpca(sample, p.num("threshold", 0.95));
  run.write_json(run.out_name("out", "basis.json"), "fpca-basis", json_io::to_json(basis));
  std::ostringstream os;
  os << "unit_id";
  for (int l = 0; l < basis.L; ++l) os << ",score" << l + 1;
  os << '\n';
  for (Eigen::Index i = 0; i < basis.scores.rows(); ++i) {
    os << basis.unit_ids[static_cast<std::size_t>(i)];
    for (int l = 0; l < basis.L; ++l) os << ',' << f(basis.scores(i, l));
    os << '\n';
  }
  run.write("scores.csv", os.str());
}

void cluster_cmd(Run& run) {
  const Params& p = run.p;
  const CurveTable t = load_curves_csv(run.input("curves"));
  std::optional<double> lambda;
  const std::string ls = p.str("lambda", "auto");
  if (ls != "auto") lambda = p.need_num("lambda");
  cluster::EmOptions o;
  o.restarts = static_cast<int>(p.integer("restarts", o.restarts));
  o.threads = run.threads;
  auto res = cluster::cluster_signals(fda::samples_from_table(t), p.num("threshold", 0.95),
                                      static_cast<int>(p.integer("K", 8)), lambda, run.rng, o);
  std::ostringstream os;
  os << "unit_id,cluster\n";
  for (std::size_t i = 0; i < res.unit_ids.size(); ++i) os << res.unit_ids[i] << ',' << res.labels[i] + 1 << '\n';
  run.write(run.out_name("out", "labels.csv"), os.str());
  Json body = json_io::to_json(res.model);
  body["channels"] = res.channels;
  run.write_json("model.json", "gmm-model", body);
  if (res.selection) {
    std::ostringstream ss;
    ss << "K,lambda,clusters,df,loglik,bic\n";
    for (const auto& r : res.selection->table)
      ss << r.K << ',' << f(r.lambda) << ',' << r.clusters << ',' << r.df << ',' << f(r.loglik) << ',' << f(r.bic) << '\n';
    run.write("selection.csv", ss.str());
  }
}

void fit_en_cmd(Run& run) {
  const Params& p = run.p;
  const SurvivalData d = load_survival_csv(run.input("data"));
  covreg::EnOptions o;
  o.sigma_w = p.num("sigma-w", 0.0);
  o.quad_order = static_cast<int>(p.integer("quad-order", o.quad_order));
  covreg::EnLifetimeModel model;
  if (p.has("alpha1") && p.str("alpha1", "") != "auto") {
    model = covreg::fit_en_lifetime(d.times, d.delta, d.x, p.need_num("alpha1"), p.num("alpha2", 0.0), o);
  } else {
    auto sel = covreg::select_en(d.times, d.delta, d.x, p.nums("alpha2", {0.0, 1.0}), o);
    model = std::move(sel.model);
    std::ostringstream os;
    os << "alpha1,alpha2,df,negloglik,refit_negloglik,bic,converged\n";
    for (const auto& r : sel.table)
      os << f(r.alpha1) << ',' << f(r.alpha2) << ',' << r.df << ',' << f(r.negloglik) << ',' << f(r.refit_negloglik)
         << ',' << f(r.bic) << ',' << r.converged << '\n';
    run.write("path.csv", os.str());
  }
  model.covariate_names = d.covariate_names;
  run.write_json(run.out_name("out", "model.json"), "en-model", json_io::to_json(model));
  std::ostringstream os;
  os << "covariate,beta\n";
  for (Eigen::Index j = 0; j < model.beta.size(); ++j)
    os << d.covariate_names[static_cast<std::size_t>(j)] << ',' << f(model.beta(j)) << '\n';
  run.write("coefficients.csv", os.str());
}

void fit_funcreg_cmd(Run& run) {
  const Params& p = run.p;
  const CurveTable t = load_curves_csv(run.input("covariates"));
  std::map<std::string, fda::FunctionalCovariate> units;
  for (const auto& r : t.curves) {
    auto& x = units[r.unit_id];
    if (x.unit_id.empty()) {
      x.unit_id = r.unit_id;
      x.grid = r.args;
    } else if (x.grid != r.args) {
      throw InputError("unit " + r.unit_id + ": covariate grids differ between times");
    }
    x.times.push_back(r.time);
  }
  for (auto& [id, x] : units) {
    x.values.resize(static_cast<Eigen::Index>(x.times.size()), static_cast<Eigen::Index>(x.grid.size()));
    std::size_t k = 0;
    for (const auto& r : t.curves)
      if (r.unit_id == id) {
        for (std::size_t g = 0; g < r.values.size(); ++g) x.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g)) = r.values[g];
        ++k;
      }
  }
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& [id, x] : units) {
    lo = first ? x.grid.front() : std::min(lo, x.grid.front());
    hi = first ? x.grid.back() : std::max(hi, x.grid.back());
    first = false;
  }
  if (first) throw InputError("covariate file has no curves");
  const BSplineBasis basis = fda::psi_basis(lo, hi, static_cast<int>(p.integer("basis-dim", 8)));
  std::map<std::string, Eigen::MatrixXd> designs;
  for (const auto& [id, x] : units) designs[id] = fda::functional_covariate_design(x, basis);

  CsvReader r(run.input("response"));
  r.expect_header({"unit_id", "time", "y"});
  std::vector<double> y;
  std::vector<Eigen::VectorXd> rows;
  std::vector<std::string> fields;
  while (r.next(fields)) {
    if (fields.size() != 3) r.fail("expected 3 fields");
    auto it = units.find(fields[0]);
    if (it == units.end()) r.fail("no covariate curves for unit " + fields[0]);
    const double tm = parse_double(fields[1], r.line(), "time");
    const auto& times = it->second.times;
    const auto pos = std::find(times.begin(), times.end(), tm);
    if (pos == times.end()) r.fail("no covariate curve at time " + fields[1] + " for unit " + fields[0]);
    rows.push_back(designs[fields[0]].row(pos - times.begin()).transpose());
    y.push_back(parse_double(fields[2], r.line(), "y"));
  }
  if (y.empty()) throw InputError("response file has no rows");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), basis.dimension());
  for (std::size_t i = 0; i < rows.size(); ++i) design.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const auto model = covreg::fit_funcreg(yv, design, basis, p.num("smooth", 1e-6));
  run.write_json(run.out_name("out", "model.json"), "funcreg-model", json_io::to_json(model));
  std::ostringstream os;
  os << "lambda,psi\n";
  const std::size_t G = 101;
  for (std::size_t g = 0; g < G; ++g) {
    const double l = lo + (hi - lo) * static_cast<double>(g) / (G - 1);
    os << f(l) << ',' << f(model.psi(l)) << '\n';
  }
  run.write("psi.csv", os.str());
}

void fit_tensor_cmd(Run& run) {
  const Params& p = run.p;
  const fs::path manifest = run.input("images");
  const ImageData d = load_image_manifest(manifest);
  {
    CsvReader r(manifest);
    std::vector<std::string> fields;
    while (r.next(fields)) run.add_input(manifest.parent_path() / fields[1]);
  }
  const covreg::Link link = covreg::link_from_string(p.str("link", "identity"));
  covreg::TensorOptions o;
  o.max_iters = static_cast<int>(p.integer("max-iters", o.max_iters));
  covreg::TensorRegModel model;
  Json extra;
  if (p.str("rank", "auto") == "auto") {
    auto sel = covreg::select_tensor_rank(d.y, d.images, {1, 2, 3}, link, run.rng, o);
    model = std::move(sel.model);
    extra = {{"ranks", sel.ranks}, {"validation_error", json_io::vec(sel.validation_error)}};
  } else {
    model = covreg::fit_tensorreg(d.y, d.images, static_cast<int>(p.integer("rank", 1)), link, o);
  }
  Json body = json_io::to_json(model);
  if (!extra.is_null()) body["rank_selection"] = extra;
  run.write_json(run.out_name("out", "model.json"), "tensor-model", body);
  std::ostringstream os;
  write_matrix_text(model.B(), os);
  run.write("B.txt", os.str());
}

void fit_st_cmd(Run& run) {
  const Params& p = run.p;
  const Dataset data = load_long_csv(run.input("field"), Schema::kField);
  st::StGrid g;
  g.rows = std::stoi(data.meta.at("rows"));
  g.cols = std::stoi(data.meta.at("cols"));
  if (p.has("rows") && p.integer("rows", 0) != g.rows) throw InputError("--rows does not match the field file");
  if (p.has("cols") && p.integer("cols", 0) != g.cols) throw InputError("--cols does not match the field file");
  g.h = p.num("spacing", 1.0);
  g.boundary = st::boundary_from_string(p.str("boundary", "zero-flux"));
  g.validate();
  st::StPriors pr;
  pr.s0 = p.num("s0", pr.s0);
  pr.mu0 = p.num("mu0", pr.mu0);
  pr.alpha_mean = p.num("alpha-mean", pr.alpha_mean);
  pr.alpha_sd = p.num("alpha-sd", pr.alpha_sd);
  pr.q_shape = p.num("q-shape", pr.q_shape);
  pr.q_scale = p.num("q-scale", pr.q_scale);
  pr.r_shape = p.num("r-shape", pr.r_shape);
  pr.r_scale = p.num("r-scale", pr.r_scale);
  if (p.has("fix-r")) {
    pr.fix_r = true;
    pr.r_fixed = p.need_num("fix-r");
  }
  st::GibbsOptions o;
  o.iters = static_cast<int>(p.integer("iters", o.iters));
  o.burn_in = static_cast<int>(p.integer("burn", o.burn_in));
  o.chains = static_cast<int>(p.integer("chains", o.chains));
  o.threads = run.threads;
  o.boundary_series = p.nums("boundary-series", {});
  const auto post = st::gibbs_fit(field_matrix(data), g, pr, o, run.rng);
  for (const auto& w : post.warnings) std::cerr << "warning: " << w << '\n';
  run.write_json(run.out_name("out", "post.json"), "st-posterior", json_io::to_json(post));
}

void predict_st_cmd(Run& run) {
  const Params& p = run.p;
  const auto post = json_io::posterior_from_json(json_io::read_document(run.input("post"), "st-posterior"));
  st::FailureSpec spec;
  spec.rule = st::failure_rule_from_string(p.str("rule", "max"));
  spec.threshold = p.need_num("threshold");
  spec.area = p.num("area", 1.0);
  const int horizon = static_cast<int>(p.integer("horizon", post.tau + 30));
  const auto cdf = st::predict_failure(post, spec, horizon, p.count("n-mc", 1000), run.rng, run.threads);
  std::vector<double> t(cdf.times.begin(), cdf.times.end());
  run.write(run.out_name("out", "cdf.csv"), csv_t_prob(t, cdf.cdf));
  run.write_json("summary.json", "failure-summary", {{"prob_never", cdf.prob_never}, {"n_mc", cdf.n_mc}});
}

// ---------------------------------------------------------------------------

void plotdata_cmd(Run& run) {
  const Params& p = run.p;
  const std::string kind = p.need("kind");
  const std::string out = run.out_name("out", "plot.csv");
  std::ostringstream os;
  if (kind == "index-paths") {
    const auto model = json_io::index_model_from_json(json_io::read_document(run.input("input"), "degindex-model"));
    const Dataset data = load_long_csv(run.input("data"), Schema::kDegradation);
    if (data.channel_names != model.channel_names) throw InputError("dataset channels differ from the model's");
    os << "series,x,y\n";
    for (const auto& u : data.units) {
      const auto z = index::eval_index(model, u);
      for (std::size_t k = 0; k < z.size(); ++k) os << u.unit_id << ',' << f(u.times[k]) << ',' << f(z[k]) << '\n';
    }
  } else if (kind == "cdf") {
    const fs::path in = run.input("input");
    CsvReader r(in);
    r.expect_header({"t", "prob"});
    os << read_file(in);
  } else if (kind == "posterior-mean") {
    const auto post = json_io::posterior_from_json(json_io::read_document(run.input("input"), "st-posterior"));
    os << "t,row,col,value\n";
    for (Eigen::Index t = 0; t < post.U_mean.rows(); ++t)
      for (Eigen::Index k = 0; k < post.U_mean.cols(); ++k)
        os << t << ',' << k / post.grid.cols << ',' << k % post.grid.cols << ',' << f(post.U_mean(t, k)) << '\n';
  } else if (kind == "fpca") {
    const auto b = json_io::fpca_from_json(json_io::read_document(run.input("input"), "fpca-basis"));
    os << "series,x,y\n";
    for (std::size_t g = 0; g < b.grid.size(); ++g) os << "mean," << f(b.grid[g]) << ',' << f(b.mean(static_cast<Eigen::Index>(g))) << '\n';
    for (int l = 0; l < b.L; ++l)
      for (std::size_t g = 0; g < b.grid.size(); ++g)
        os << "phi" << l + 1 << ',' << f(b.grid[g]) << ',' << f(b.eigenfunctions(static_cast<Eigen::Index>(g), l)) << '\n';
  } else if (kind == "psi") {
    const auto m = json_io::funcreg_model_from_json(json_io::read_document(run.input("input"), "funcreg-model"));
    os << "series,x,y\n";
    const std::size_t G = 101;
    for (std::size_t g = 0; g < G; ++g) {
      const double l = m.basis.lo() + (m.basis.hi() - m.basis.lo()) * static_cast<double>(g) / (G - 1);
      os << "psi," << f(l) << ',' << f(m.psi(l)) << '\n';
    }
  } else if (kind == "coefficient-image") {
    const auto m = json_io::tensor_model_from_json(json_io::read_document(run.input("input"), "tensor-model"));
    const Eigen::MatrixXd B = m.B();
    os << "t,row,col,value\n";
    for (Eigen::Index i = 0; i < B.rows(); ++i)
      for (Eigen::Index j = 0; j < B.cols(); ++j) os << "0," << i << ',' << j << ',' << f(B(i, j)) << '\n';
  } else {
    throw UsageError("unknown plot-data --kind '" + kind + "'");
  }
  run.write(out, os.str());
}

// ---------------------------------------------------------------------------

struct Command {
  std::string name;
  std::string help;
  std::vector<std::pair<std::string, std::string>> options;
  std::function<void(Run&)> body;
};

std::vector<Command> commands() {
  return {
      {"simulate",
       "Generate a synthetic dataset with known truth",
       {{"kind", "fused-index|copula-wiener|fpca|cluster-curves|lifetime|funcreg|tensor|field"},
        {"n", "number of units"}, {"p", "number of channels or covariates"}, {"active", "active channels (1-based list)"},
        {"noise-sd", "measurement noise sd"}, {"marginals", "random-effect marginals, one per channel"},
        {"marginal-a", "first marginal parameter(s)"}, {"marginal-b", "second marginal parameter(s)"},
        {"kappa", "time-scale exponent(s)"}, {"sigma", "diffusion or error scale"}, {"copula", "copula family"},
        {"rho", "gaussian copula correlation"}, {"theta", "archimedean copula parameter"},
        {"times", "number of measurement times"}, {"span", "time span"}, {"grid", "curve grid points"},
        {"var-a", "first eigenvalue"}, {"var-b", "second eigenvalue"}, {"K", "number of archetypes"},
        {"beta", "active coefficients"}, {"sigma-w", "random-effect sd"}, {"censor", "target censoring rate"},
        {"rows", "image or grid rows"}, {"cols", "image or grid columns"}, {"rank", "coefficient rank"},
        {"link", "identity|log"}, {"scale", "coefficient scale"}, {"spacing", "grid spacing h"},
        {"boundary", "zero-flux|fixed-value"}, {"alpha", "diffusion coefficient"}, {"q", "state noise variance"},
        {"r", "observation noise variance"}, {"mu0", "initial mean"}, {"s0", "initial variance"},
        {"tau", "last time index"}, {"boundary-series", "boundary values b_0,b_1,..."}},
       simulate},
      {"fit-index",
       "Fit a degradation index (lambda1 omitted: BIC tuning)",
       {{"data", "degradation CSV"}, {"events", "events CSV"}, {"lambda1", "group-lasso weight or auto"},
        {"lambda2", "monotonicity weight"}, {"c", "monotonicity margin"}, {"degree", "spline degree"},
        {"knots", "interior knots"}, {"knot-placement", "quantile|uniform"}, {"mono", "as-written|hinge"},
        {"max-sweeps", "coordinate-descent sweeps"}, {"out", "model JSON"}},
       fit_index_cmd},
      {"fit-mvdeg",
       "Fit a copula random-effects Wiener model by MC-EM",
       {{"data", "degradation CSV"}, {"copula", "independence|gaussian|clayton|gumbel|frank"},
        {"marginals", "random-effect marginals"}, {"rho", "initial correlation"}, {"theta", "initial copula parameter"},
        {"kappa", "initial exponent(s)"}, {"sigma", "initial diffusion scale(s)"}, {"noise-sd", "initial noise sd(s)"},
        {"mc-draws", "Monte Carlo draws per iteration"}, {"max-iters", "EM iterations"}, {"tol", "stopping tolerance"},
        {"fit-shape", "estimate exponents"}, {"fit-noise", "estimate noise sd"}, {"out", "model JSON"}},
       fit_mvdeg_cmd},
      {"predict-fp",
       "First-passage CDF of a fitted model",
       {{"model", "model JSON"}, {"threshold", "failure thresholds, one per channel"}, {"mode", "any|all"},
        {"n-mc", "Monte Carlo paths"}, {"t-max", "CDF grid end (0: automatic)"}, {"grid-points", "CDF grid size"},
        {"x", "covariate vector"}, {"out", "CDF CSV"}},
       predict_fp_cmd},
      {"fpca",
       "Functional principal components of a curves file",
       {{"curves", "curves CSV"}, {"threshold", "variance fraction"}, {"channel", "channel to use"},
        {"out", "basis JSON"}},
       fpca_cmd},
      {"cluster",
       "Cluster units by penalized mixture of FPCA scores",
       {{"curves", "curves CSV"}, {"K", "maximum clusters"}, {"lambda", "penalty or auto"},
        {"threshold", "FPCA variance fraction"}, {"restarts", "EM restarts"}, {"out", "labels CSV"}},
       cluster_cmd},
      {"fit-en",
       "Elastic-net lognormal lifetime regression",
       {{"data", "survival CSV"}, {"alpha1", "L1 weight or auto"}, {"alpha2", "L2 weight(s)"},
        {"sigma-w", "random-effect sd"}, {"quad-order", "Gauss-Hermite nodes"}, {"out", "model JSON"}},
       fit_en_cmd},
      {"fit-funcreg",
       "Cumulative functional-covariate regression",
       {{"covariates", "curves CSV of covariate spectra"}, {"response", "response CSV unit_id,time,y"},
        {"basis-dim", "psi basis dimension"}, {"smooth", "roughness weight"}, {"out", "model JSON"}},
       fit_funcreg_cmd},
      {"fit-tensor",
       "Low-rank scalar-on-image regression",
       {{"images", "image manifest CSV"}, {"rank", "rank or auto"}, {"link", "identity|log"},
        {"max-iters", "ALS iterations"}, {"out", "model JSON"}},
       fit_tensor_cmd},
      {"fit-st",
       "Gibbs sampler for a spatio-temporal diffusion field",
       {{"field", "field CSV"}, {"rows", "grid rows (checked)"}, {"cols", "grid columns (checked)"}, {"spacing", "grid spacing h"},
        {"boundary", "zero-flux|fixed-value"}, {"boundary-series", "boundary values"}, {"iters", "iterations"},
        {"burn", "burn-in"}, {"chains", "chains"}, {"s0", "initial variance prior"}, {"mu0", "initial mean prior"},
        {"alpha-mean", "alpha prior mean"}, {"alpha-sd", "alpha prior sd"}, {"q-shape", "q prior shape"},
        {"q-scale", "q prior scale"}, {"r-shape", "r prior shape"}, {"r-scale", "r prior scale"},
        {"fix-r", "hold r at this value"}, {"out", "posterior JSON"}},
       fit_st_cmd},
      {"predict-st",
       "Failure-time CDF from a field posterior",
       {{"post", "posterior JSON"}, {"rule", "max|area"}, {"threshold", "degradation threshold"},
        {"area", "critical area"}, {"horizon", "last time step"}, {"n-mc", "Monte Carlo paths"}, {"out", "CDF CSV"}},
       predict_st_cmd},
      {"plotdata",
       "Plot-ready tables from fitted artifacts",
       {{"kind", "index-paths|cdf|posterior-mean|fpca|psi|coefficient-image"}, {"input", "artifact"},
        {"data", "dataset (index-paths)"}, {"out", "table CSV"}},
       plotdata_cmd},
  };
}

int run_main(int argc, char** argv) {
  const auto start = std::chrono::steady_clock::now();
  CLI::App app{"degkit: degradation analytics toolkit"};
  app.set_version_flag("--version", std::string("degkit ") + kVersion);
  app.require_subcommand(0, 1);
  const auto cmds = commands();

  struct Common {
    std::string config, out_dir = ".";
    std::uint64_t seed = 0;
    int threads = 1;
  };
  std::vector<Common> common(cmds.size());
  std::vector<CLI::App*> subs;
  std::vector<std::vector<std::pair<std::string, CLI::Option*>>> opts(cmds.size());
  for (std::size_t c = 0; c < cmds.size(); ++c) {
    auto* sub = app.add_subcommand(cmds[c].name, cmds[c].help);
    sub->add_option("--config", common[c].config, "config file (key=value lines or JSON object)");
    sub->add_option("--seed", common[c].seed, "random seed");
    sub->add_option("--out-dir", common[c].out_dir, "directory receiving every output");
    sub->add_option("--threads", common[c].threads, "worker cap");
    for (const auto& [name, help] : cmds[c].options) opts[c].emplace_back(name, sub->add_option("--" + name, help));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* active = &app;
    for (auto* s : subs)
      if (s->parsed()) active = s;
    std::cerr << active->help();
    return 2;
  }

  std::size_t c = 0;
  while (c < subs.size() && !subs[c]->parsed()) ++c;
  if (c == subs.size()) {
    std::cerr << app.help();
    return 2;
  }
  const Command& cmd = cmds[c];
  auto* sub = subs[c];

  try {
    Run run;
    std::set<std::string> known;
    for (const auto& [name, _] : cmd.options) known.insert(name);
    Common cm = common[c];
    if (!cm.config.empty()) {
      for (auto& [k, v] : read_config(cm.config)) {
        if (k == "seed" || k == "out-dir" || k == "threads") {
          if (sub->count("--" + k)) continue;
          try {
            if (k == "seed") cm.seed = std::stoull(v);
            else if (k == "threads") cm.threads = std::stoi(v);
            else cm.out_dir = v;
          } catch (const std::exception&) {
            throw UsageError("config key " + k + ": invalid value '" + v + "'");
          }
          continue;
        }
        if (!known.count(k)) throw UsageError("config key '" + k + "' is not an option of " + cmd.name);
        run.p.values[k] = v;
      }
    }
    for (const auto& [name, opt] : opts[c])
      if (opt->count() > 0) run.p.values[name] = opt->as<std::string>();
    if (cm.threads < 1) throw UsageError("--threads must be >= 1");
    run.out_dir = cm.out_dir;
    run.rng = RngSpec{cm.seed, 0};
    run.threads = cm.threads;
    num::set_default_threads(cm.threads);
    fs::create_directories(run.out_dir);
    if (!cm.config.empty()) run.add_input(cm.config);

    cmd.body(run);

    Json canon;
    canon["command"] = cmd.name;
    canon["seed"] = cm.seed;
    for (const auto& [k, v] : run.p.values) canon["options"][k] = v;
    Json argv_json = Json::array();
    for (int i = 0; i < argc; ++i) argv_json.push_back(argv[i]);
    Json m;
    m["command_line"] = argv_json;
    m["command"] = cmd.name;
    m["config_hash"] = sha256_hex(canon.dump());
    m["options"] = canon.contains("options") ? canon["options"] : Json::object();
    m["rng"] = {{"seed", run.rng.seed}, {"stream_id", run.rng.stream_id}};
    m["inputs"] = run.manifest_inputs();
    m["outputs"] = run.manifest_outputs();
    m["version"] = kVersion;
    m["threads"] = run.threads;
    m["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_file(run.out_dir / "manifest.json", json_io::dump(json_io::document("run-manifest", m)));
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << sub->help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run_main(argc, argv); }
