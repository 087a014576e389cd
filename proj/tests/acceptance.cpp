// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
// Usage: acceptance [--cli <degkit binary>] [--scratch <dir>] [--only 1,4,9] [--threads N]

#include "degkit/covreg.hpp"
#include "degkit/degindex.hpp"
#include "degkit/funcdata.hpp"
#include "degkit/mvdeg.hpp"
#include "degkit/numerics.hpp"
#include "degkit/sigclust.hpp"
#include "degkit/stdeg.hpp"
#include "degkit/synth.hpp"

#include <CLI11.hpp>

#include <boost/math/distributions/inverse_gaussian.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

using namespace degkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

int g_threads = 1;
std::string g_cli;
fs::path g_scratch;

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// 1. First passage of a drifted Wiener process is inverse Gaussian.
Outcome first_passage_check() {
  mvdeg::CopulaWienerModel m;
  m.p = 1;
  m.shapes = {mvdeg::ShapeFn{}};
  m.sigmas = {1.0};
  m.noise_sd = {0.0};
  m.marginals = {Marginal{MarginalKind::kDegenerate, 2.0, 0.0}};
  mvdeg::FirstPassageOptions o;
  o.n_mc = 100000;
  o.t_max = 3.0;
  o.grid_points = 601;
  const auto r = mvdeg::first_passage(m, {}, {1.0}, mvdeg::PassageMode::kAnyChannel, o, RngSpec{1, 0});
  boost::math::inverse_gaussian ig(0.5, 1.0);
  double sup = 0.0;
  for (std::size_t k = 0; k < r.grid.size(); ++k)
    sup = std::max(sup, std::abs(r.cdf[k] - (r.grid[k] > 0 ? boost::math::cdf(ig, r.grid[k]) : 0.0)));
  // The empirical CDF between grid points: check at every sample too.
  std::vector<double> s = r.samples;
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = boost::math::cdf(ig, s[i]);
    sup = std::max({sup, std::abs((i + 1) / n - f), std::abs(i / n - f)});
  }
  const double z = (r.mean - 0.5) / r.std_error;
  return {sup <= 0.01 && std::abs(z) <= 3.0, "sup " + fmt("%.4f", sup) + ", mean z " + fmt("%.2f", z)};
}

// Kalman filter plus RTS smoother on the dense state space.
Eigen::MatrixXd kalman_smoother_mean(const Eigen::MatrixXd& D, const Eigen::MatrixXd& M, double q, double r,
                                     const Eigen::VectorXd& mu0, double s0) {
  const Eigen::Index T = D.rows(), m = D.cols();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  std::vector<Eigen::VectorXd> mp(T), mf(T);
  std::vector<Eigen::MatrixXd> Pp(T), Pf(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t == 0) {
      mp[0] = mu0;
      Pp[0] = s0 * I;
    } else {
      mp[t] = M * mf[t - 1];
      Pp[t] = M * Pf[t - 1] * M.transpose() + q * I;
    }
    const Eigen::MatrixXd K = (Pp[t] + r * I).ldlt().solve(Pp[t]).transpose();
    mf[t] = mp[t] + K * (D.row(t).transpose() - mp[t]);
    Pf[t] = (I - K) * Pp[t];
  }
  Eigen::MatrixXd out(T, m);
  Eigen::VectorXd ms = mf[T - 1];
  out.row(T - 1) = ms.transpose();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::MatrixXd J = Pp[t + 1].ldlt().solve(M * Pf[t]).transpose();
    ms = mf[t] + J * (ms - mp[t + 1]);
    out.row(t) = ms.transpose();
  }
  return out;
}

// 2. FFBS draws average to the Kalman smoother mean.
Outcome ffbs_check() {
  st::StGrid g;
  g.rows = 16;
  g.cols = 16;
  const st::Laplacian lap(g);
  st::StModel mdl;
  mdl.mu0 = Eigen::VectorXd::Zero(1);
  mdl.s0 = 1.0;
  mdl.tau = 30;
  const auto f = st::simulate_field(mdl, g, RngSpec{1, 0});
  const int m = g.m();
  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(m, m) + mdl.alpha * lap.dense();
  const Eigen::MatrixXd ks = kalman_smoother_mean(f.D, M, mdl.q, mdl.r, Eigen::VectorXd::Zero(m), mdl.s0);
  Rng rng(RngSpec{2, 0});
  const int n = 2000;
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(f.D.rows(), m), s2 = s1;
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd u = st::ffbs_draw(f.D, lap, mdl.alpha, mdl.q, mdl.r, Eigen::VectorXd::Zero(m), mdl.s0, {}, rng);
    s1 += u;
    s2 += u.cwiseProduct(u);
  }
  const Eigen::MatrixXd em = s1 / n;
  const Eigen::MatrixXd se = ((s2 / n - em.cwiseProduct(em)) / n).cwiseSqrt();
  const Eigen::MatrixXd z = (em - ks).cwiseQuotient(se);
  double worst_rms = 0.0;
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    worst_rms = std::max(worst_rms, std::sqrt(z.row(t).squaredNorm() / static_cast<double>(m)));
  const double beyond = static_cast<double>((z.array().abs() > 2.0).count()) / static_cast<double>(z.size());
  return {worst_rms <= 2.0, "worst per-time RMS z " + fmt("%.3f", worst_rms) + ", cells beyond 2 s.e. " +
                                fmt("%.3f", beyond)};
}

// 3. Posterior credible intervals cover the generating parameters.
Outcome gibbs_calibration() {
  st::StGrid g;
  g.rows = 16;
  g.cols = 16;
  const double truth[3] = {0.1, 0.05, 0.2};
  int cover[3] = {0, 0, 0};
  for (int s = 0; s < 20; ++s) {
    st::StModel mdl;
    mdl.alpha = truth[0];
    mdl.q = truth[1];
    mdl.r = truth[2];
    mdl.mu0 = Eigen::VectorXd::Zero(1);
    mdl.s0 = 1.0;
    mdl.tau = 30;
    const auto f = st::simulate_field(mdl, g, RngSpec{static_cast<std::uint64_t>(100 + s), 0});
    st::StPriors pr;
    pr.s0 = 1.0;
    st::GibbsOptions o;
    o.threads = g_threads;
    const auto post = st::gibbs_fit(f.D, g, pr, o, RngSpec{static_cast<std::uint64_t>(500 + s), 0});
    const std::vector<double>* v[3] = {&post.alpha, &post.q, &post.r};
    for (int j = 0; j < 3; ++j) {
      std::vector<double> x = *v[j];
      std::sort(x.begin(), x.end());
      const double lo = x[static_cast<std::size_t>(0.025 * static_cast<double>(x.size()))];
      const double hi = x[static_cast<std::size_t>(0.975 * static_cast<double>(x.size())) - 1];
      cover[j] += lo <= truth[j] && truth[j] <= hi;
    }
  }
  const bool ok = cover[0] >= 17 && cover[1] >= 17 && cover[2] >= 17;
  return {ok, "coverage alpha " + std::to_string(cover[0]) + "/20, q " + std::to_string(cover[1]) + "/20, r " +
                  std::to_string(cover[2]) + "/20"};
}

// 4. Index support recovery with BIC tuning.
Outcome index_support() {
  int good = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto s = synth::synth_fused_index(50, 10, {1, 2}, 0.1, RngSpec{static_cast<std::uint64_t>(seed), 0});
    const auto tr = index::select_tuning(s.data, {}, index::default_grid(), 0.01);
    const auto& sel = tr.model.selected;
    const bool has = std::count(sel.begin(), sel.end(), 0) && std::count(sel.begin(), sel.end(), 1);
    good += has && sel.size() <= 3 && index::count_violations(tr.model, s.data, 1e-8) == 0;
  }
  return {good >= 18, std::to_string(good) + "/20 seeds"};
}

// 5. FPCA recovers the rank-2 truth.
Outcome fpca_truth() {
  const auto s = synth::synth_fpca_rank2(500, 101, 4.0, 1.0, 0.1, RngSpec{5, 0});
  const auto b = fda::fpca(s.sample, 0.95);
  const double ratio = b.eigenvalues(0) / b.eigenvalues(1);
  double worst = 1.0;
  for (int k = 0; k < 2; ++k) {
    const Eigen::VectorXd x = b.scores.col(k), y = s.true_scores.col(k);
    const Eigen::VectorXd xc = x.array() - x.mean(), yc = y.array() - y.mean();
    worst = std::min(worst, std::abs(xc.dot(yc)) / (xc.norm() * yc.norm()));
  }
  const bool ok = b.L == 2 && std::abs(ratio / 4.0 - 1.0) <= 0.15 && worst >= 0.99;
  return {ok, "L " + std::to_string(b.L) + ", ratio " + fmt("%.3f", ratio) + ", min |corr| " + fmt("%.4f", worst)};
}

// 6. Penalized clustering with 18 noise coordinates.
Outcome clustering() {
  int good = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto s = synth::synth_cluster_scores(300, 20, 2, 3, 4.5, RngSpec{static_cast<std::uint64_t>(seed), 7});
    cluster::EmOptions o;
    o.threads = g_threads;
    const auto sel = cluster::select_model(s.scores, 3, {}, RngSpec{static_cast<std::uint64_t>(seed), 1}, o);
    const double ari = cluster::adjusted_rand_index(sel.fit.labels, s.labels);
    int zero = 0;
    for (int c = 2; c < 20; ++c) zero += sel.fit.model.means.col(c).cwiseAbs().maxCoeff() == 0.0;
    good += ari >= 0.9 && zero >= 15;
  }
  return {good >= 18, std::to_string(good) + "/20 seeds"};
}

// 7. Elastic-net lifetime regression.
Outcome en_lifetime() {
  int good = 0;
  covreg::EnOptions o;
  o.sigma_w = 0.3;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto s = synth::synth_lifetime(300, 50, {{0, 1.0}, {1, -0.8}, {2, 0.6}}, 0.5, 0.3, 0.2,
                                         RngSpec{static_cast<std::uint64_t>(seed), 3});
    const auto sel = covreg::select_en(s.data.times, s.data.delta, s.data.x, {0.0, 1.0}, o);
    const auto picked = sel.model.selected();
    const std::set<int> chosen(picked.begin(), picked.end());
    const bool has = chosen.count(0) && chosen.count(1) && chosen.count(2);
    good += has && chosen.size() <= 5;
  }

  // Duplicated column: equal coefficients under the ridge term.
  const auto d = synth::synth_lifetime(200, 4, {{0, 1.0}}, 0.5, 0.2, 0.2, RngSpec{2, 2});
  Eigen::MatrixXd x(d.data.x.rows(), 5);
  x.leftCols(4) = d.data.x;
  x.col(4) = d.data.x.col(0);
  covreg::EnOptions od;
  od.sigma_w = 0.2;
  const auto dup = covreg::fit_en_lifetime(d.data.times, d.data.delta, x, 2.0, 1.0, od);
  const double gap = std::abs(dup.beta(0) - dup.beta(4));

  // No penalty, no random effect, no censoring: ordinary least squares on log T.
  Rng r(RngSpec{5, 5});
  const Eigen::Index n = 100, p = 3;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = r.normal();
    t(i) = std::exp(1.0 + X(i, 0) + 0.5 * r.normal());
  }
  const auto cf = covreg::fit_en_lifetime(t, Eigen::VectorXi::Ones(n), X, 0.0, 0.0);
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  const Eigen::VectorXd y = t.array().log();
  const Eigen::VectorXd b = A.colPivHouseholderQr().solve(y);
  const double sig = std::sqrt((y - A * b).squaredNorm() / static_cast<double>(n));
  const double cf_err = std::max({std::abs(cf.beta0 - b(0)), (cf.beta - b.tail(p)).cwiseAbs().maxCoeff(),
                                  std::abs(cf.sigma - sig)});
  const bool ok = good >= 18 && gap <= 1e-6 && cf_err <= 1e-6;
  return {ok, std::to_string(good) + "/20 seeds, duplicate gap " + fmt("%.2e", gap) + ", closed-form error " +
                  fmt("%.2e", cf_err)};
}

// 8. Noiseless rank-1 tensor regression.
Outcome tensor_rank1() {
  const auto s = synth::synth_tensor(500, 16, 16, 1, false, 1.0, 0.0, RngSpec{8, 0});
  const auto m = covreg::fit_tensorreg(s.y, s.images, 1, covreg::Link::kIdentity);
  const double err = (m.B() - s.B).norm() / s.B.norm();
  bool mono = true;
  for (std::size_t k = 1; k < m.objective_trace.size(); ++k)
    mono &= m.objective_trace[k] <= m.objective_trace[k - 1] * (1.0 + 1e-12) + 1e-300;
  return {err <= 1e-3 && mono, "relative error " + fmt("%.2e", err) + (mono ? ", objective monotone" : ", objective NOT monotone")};
}

// 9. MC-EM recovers a strong Gaussian-copula dependence.
Outcome mcem_rho() {
  int good = 0, trend_ok = 0;
  for (int s = 0; s < 20; ++s) {
    mvdeg::CopulaWienerModel m;
    m.p = 2;
    m.shapes = {mvdeg::ShapeFn{}, mvdeg::ShapeFn{}};
    m.sigmas = {0.5, 0.5};
    m.marginals = {Marginal{MarginalKind::kLognormal, 0.0, 0.5}, Marginal{MarginalKind::kLognormal, 0.0, 0.5}};
    m.copula = CopulaSpec::gaussian2(0.8);
    m.noise_sd = {0.05, 0.05};
    std::vector<double> grid;
    for (int k = 0; k < 50; ++k) grid.push_back(k / 49.0);
    const auto d = synth::synth_copula_wiener(m, 400, grid, RngSpec{static_cast<std::uint64_t>(10 + s), 0});
    mvdeg::CopulaWienerModel init = m;
    init.copula = CopulaSpec::gaussian2(0.0);
    init.sigmas = {1.0, 1.0};
    init.marginals = {Marginal{MarginalKind::kLognormal, 0.5, 1.0}, Marginal{MarginalKind::kLognormal, 0.5, 1.0}};
    mvdeg::McemOptions o;
    o.mc_draws = 40000;
    o.threads = g_threads;
    const auto r = mvdeg::fit_mcem(d.data, init, o, RngSpec{static_cast<std::uint64_t>(900 + s), 0});
    good += std::abs(mvdeg::copula_parameter(r.model.copula) - 0.8) <= 0.1;
    int dec = 0, tot = 0;
    for (std::size_t i = 0; i + 5 < r.trace.size(); ++i) {
      ++tot;
      dec += r.trace[i + 5].mc_loglik < r.trace[i].mc_loglik;
    }
    trend_ok += dec <= 0.1 * tot;
  }
  return {good >= 18 && trend_ok == 20,
          std::to_string(good) + "/20 seeds within 0.1, trend check " + std::to_string(trend_ok) + "/20"};
}

// 10. Coarsened fine-grid paths have the coarse-grid increment law.
Outcome infinite_divisibility() {
  mvdeg::CopulaWienerModel m;
  m.p = 2;
  m.shapes = {mvdeg::ShapeFn{mvdeg::ShapeForm::kPower, 1.5, {}}, mvdeg::ShapeFn{mvdeg::ShapeForm::kPower, 0.7, {}}};
  m.sigmas = {0.5, 1.0};
  m.noise_sd = {0.0, 0.0};
  m.marginals = {Marginal{MarginalKind::kLognormal, 0.0, 0.3}, Marginal{MarginalKind::kGamma, 2.0, 0.5}};
  m.copula = CopulaSpec::gaussian2(0.7);
  std::vector<double> fine;
  for (int k = 0; k <= 40; ++k) fine.push_back(0.05 * k);
  const auto a = synth::synth_copula_wiener(m, 10000, fine, RngSpec{3, 0});
  const auto b = synth::synth_copula_wiener(m, 10000, {0.0, 1.0, 2.0}, RngSpec{4, 0});
  double pmin = 1.0;
  for (int j = 0; j < 2; ++j)
    for (int seg = 0; seg < 2; ++seg) {
      std::vector<double> x, y;
      for (const auto& u : a.data.units) x.push_back(u.channels[j][20 * (seg + 1)] - u.channels[j][20 * seg]);
      for (const auto& u : b.data.units) y.push_back(u.channels[j][seg + 1] - u.channels[j][seg]);
      pmin = std::min(pmin, num::ks_two_sample(x, y).p_value);
    }
  return {pmin > 0.01, "smallest KS p " + fmt("%.3f", pmin)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 11. Repeated CLI runs produce identical bytes.
Outcome cli_determinism() {
  if (g_cli.empty()) return {false, "no --cli binary given"};
  const std::vector<std::string> steps = {
      "simulate --kind fused-index --n 40 --p 5 --active 1,2 --seed 3 --out-dir sim-index",
      "fit-index --data sim-index/data.csv --events sim-index/events.csv --out-dir fit-index",
      "simulate --kind copula-wiener --n 60 --p 2 --copula gaussian --rho 0.6 --times 12 --seed 4 --out-dir sim-mv",
      "fit-mvdeg --data sim-mv/data.csv --mc-draws 2000 --max-iters 8 --seed 5 --threads 3 --out-dir fit-mv",
      "predict-fp --model fit-mv/model.json --threshold 1,1 --n-mc 5000 --seed 6 --threads 3 --out-dir fp",
      "simulate --kind cluster-curves --n 60 --K 3 --grid 31 --seed 7 --out-dir sim-cl",
      "cluster --curves sim-cl/curves.csv --K 4 --seed 8 --threads 2 --out-dir cl",
      "simulate --kind lifetime --n 100 --p 10 --seed 9 --out-dir sim-en",
      "fit-en --data sim-en/surv.csv --out-dir en",
      "simulate --kind tensor --n 120 --rows 5 --cols 5 --rank 1 --seed 10 --out-dir sim-tr",
      "fit-tensor --images sim-tr/images.csv --rank auto --seed 11 --out-dir tr",
      "simulate --kind field --rows 4 --cols 4 --times 20 --seed 12 --out-dir sim-st",
      "fit-st --field sim-st/field.csv --rows 4 --cols 4 --iters 400 --burn 100 --chains 3 --threads 3 --seed 13 --out-dir st",
      "predict-st --post st/post.json --threshold 2 --horizon 60 --n-mc 2000 --seed 14 --threads 3 --out-dir st-pred",
  };
  std::map<std::string, std::string> first;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = g_scratch / ("run" + std::to_string(rep));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& s : steps) {
      const std::string cmd = "cd '" + dir.string() + "' && '" + g_cli + "' " + s + " >/dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + s};
    }
    std::size_t files = 0, mismatched = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
      const std::string rel = fs::relative(e.path(), dir).string();
      const std::string bytes = slurp(e.path());
      if (rep == 0) {
        first[rel] = bytes;
      } else {
        ++files;
        auto it = first.find(rel);
        mismatched += it == first.end() || it->second != bytes;
      }
    }
    if (rep == 1) {
      const bool ok = mismatched == 0 && files == first.size() && files > 0;
      return {ok, std::to_string(files) + " files compared, " + std::to_string(mismatched) + " differ"};
    }
  }
  return {false, "unreachable"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"degkit acceptance checks"};
  std::string only;
  std::string scratch = (fs::temp_directory_path() / "degkit-acceptance").string();
  g_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--cli", g_cli, "degkit binary for the determinism check");
  app.add_option("--scratch", scratch, "scratch directory");
  app.add_option("--only", only, "comma-separated criterion numbers");
  app.add_option("--threads", g_threads, "worker threads");
  CLI11_PARSE(app, argc, argv);
  g_scratch = scratch;
  if (!g_cli.empty()) g_cli = fs::absolute(g_cli).string();
  num::set_default_threads(g_threads);

  std::set<int> pick;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) pick.insert(std::stoi(tok));

  const std::vector<Criterion> all = {
      {1, "first-passage inverse Gaussian", 30, first_passage_check},
      {2, "FFBS vs Kalman smoother", 120, ffbs_check},
      {3, "Gibbs calibration", 1200, gibbs_calibration},
      {4, "index support recovery", 300, index_support},
      {5, "FPCA truth recovery", 30, fpca_truth},
      {6, "penalized clustering", 300, clustering},
      {7, "elastic-net lifetime", 300, en_lifetime},
      {8, "rank-1 tensor regression", 120, tensor_rank1},
      {9, "MC-EM copula dependence", 900, mcem_rho},
      {10, "infinite divisibility", 60, infinite_divisibility},
      {11, "CLI determinism", 600, cli_determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    if (!pick.empty() && !pick.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("criterion %2d %s: %s  %s; %.1fs (limit %.0fs)%s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : " over time");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
