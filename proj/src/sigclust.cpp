#include "degkit/sigclust.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

namespace degkit::cluster {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd log_joint(const PenalizedGmm& m, const Eigen::MatrixXd& xc) {
  const Eigen::Index n = xc.rows();
  Eigen::MatrixXd lj(n, m.K());
  const double logdet = m.variances.array().log().sum();
  const Eigen::ArrayXd inv = m.variances.array().inverse();
  for (int k = 0; k < m.K(); ++k) {
    const double base = std::log(m.weights(k)) - 0.5 * (static_cast<double>(m.dim()) * kLog2Pi + logdet);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::ArrayXd d = xc.row(i).transpose().array() - m.means.row(k).transpose().array();
      lj(i, k) = base - 0.5 * (d.square() * inv).sum();
    }
  }
  return lj;
}

// Normalizes rows of log-joint into responsibilities; returns the log-likelihood.
double normalize(const Eigen::MatrixXd& lj, Eigen::MatrixXd& resp) {
  resp.resize(lj.rows(), lj.cols());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    const double mx = lj.row(i).maxCoeff();
    const Eigen::ArrayXd e = (lj.row(i).array() - mx).exp();
    const double s = e.sum();
    resp.row(i) = (e / s).matrix().transpose();
    ll += mx + std::log(s);
  }
  return ll;
}

// M-step on the centered data. Returns true if components were removed.
bool m_step(PenalizedGmm& m, const Eigen::MatrixXd& xc, Eigen::MatrixXd& resp) {
  const Eigen::Index n = xc.rows(), d = xc.cols();
  bool pruned = false;
  {
    const Eigen::VectorXd nk = resp.colwise().sum().transpose();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < resp.cols(); ++k)
      if (nk(k) / static_cast<double>(n) >= 0.5 / static_cast<double>(n)) keep.push_back(k);
    if (keep.empty()) {
      Eigen::Index best = 0;
      nk.maxCoeff(&best);
      keep.push_back(best);
    }
    if (static_cast<Eigen::Index>(keep.size()) < resp.cols()) {
      Eigen::MatrixXd r(n, static_cast<Eigen::Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) r.col(static_cast<Eigen::Index>(k)) = resp.col(keep[k]);
      for (Eigen::Index i = 0; i < n; ++i) r.row(i) /= r.row(i).sum();
      resp = std::move(r);
      pruned = true;
    }
  }
  const Eigen::Index K = resp.cols();
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  m.weights = nk / static_cast<double>(n);
  const Eigen::MatrixXd wmean = (resp.transpose() * xc).array().colwise() / nk.array();
  m.means.resize(K, d);
  if (m.variances.size() != d) {
    // Start from the unpenalized within-cluster spread.
    m.variances.resize(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) s += (resp.col(k).array() * (xc.col(c).array() - wmean(k, c)).square()).sum();
      m.variances(c) = std::max(s / static_cast<double>(n), 1e-12);
    }
  }
  for (const auto& g : m.groups) {
    const Eigen::Index sz = K * static_cast<Eigen::Index>(g.size());
    Eigen::VectorXd mv(sz), a(sz);
    Eigen::Index q = 0;
    for (Eigen::Index k = 0; k < K; ++k)
      for (int c : g) {
        mv(q) = wmean(k, c);
        a(q) = nk(k) / m.variances(c);
        ++q;
      }
    const Eigen::VectorXd mu = prox_weighted_linf(mv, a, m.lambda);
    q = 0;
    for (Eigen::Index k = 0; k < K; ++k)
      for (int c : g) m.means(k, c) = mu(q++);
  }
  for (Eigen::Index c = 0; c < d; ++c) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) s += (resp.col(k).array() * (xc.col(c).array() - m.means(k, c)).square()).sum();
    m.variances(c) = s / static_cast<double>(n);
    if (!(m.variances(c) >= 1e-12)) throw Error("fit_em: degenerate covariance (variance < 1e-12) in column " + std::to_string(c));
  }
  // Components with identical means are the same component.
  for (Eigen::Index k = 0; k < m.means.rows(); ++k) {
    for (Eigen::Index l = m.means.rows() - 1; l > k; --l) {
      if ((m.means.row(k).array() == m.means.row(l).array()).all()) {
        m.weights(k) += m.weights(l);
        resp.col(k) += resp.col(l);
        const Eigen::Index last = m.means.rows() - 1;
        if (l != last) {
          m.means.row(l) = m.means.row(last);
          m.weights(l) = m.weights(last);
          resp.col(l) = resp.col(last);
        }
        m.means.conservativeResize(last, Eigen::NoChange);
        m.weights.conservativeResize(last);
        resp.conservativeResize(Eigen::NoChange, last);
        pruned = true;
      }
    }
  }
  return pruned;
}

std::vector<int> argmax_labels(const Eigen::MatrixXd& resp) {
  std::vector<int> lab(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index k = 0;
    resp.row(i).maxCoeff(&k);
    lab[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return lab;
}

Eigen::MatrixXd kmeans_init(const Eigen::MatrixXd& z, int K, Rng& rng) {
  const Eigen::Index n = z.rows();
  std::vector<Eigen::Index> seeds{static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)))};
  Eigen::VectorXd d2 = (z.rowwise() - z.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < K) {
    const double tot = d2.sum();
    Eigen::Index pick = 0;
    if (tot <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    } else {
      double u = rng.uniform() * tot;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2(pick);
        if (u <= 0.0) break;
      }
    }
    seeds.push_back(pick);
    d2 = d2.cwiseMin((z.rowwise() - z.row(pick)).rowwise().squaredNorm());
  }
  Eigen::MatrixXd centers(K, z.cols());
  for (int k = 0; k < K; ++k) centers.row(k) = z.row(seeds[static_cast<std::size_t>(k)]);
  std::vector<int> lab(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < 50; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centers.rowwise() - z.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (lab[static_cast<std::size_t>(i)] != best) changed = true;
      lab[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    if (!changed) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(K, z.cols());
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(lab[static_cast<std::size_t>(i)]) += z.row(i);
      cnt(lab[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int k = 0; k < K; ++k)
      if (cnt(k) > 0.0) centers.row(k) = sum.row(k) / cnt(k);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, K);
  for (Eigen::Index i = 0; i < n; ++i) resp(i, lab[static_cast<std::size_t>(i)]) = 1.0;
  return resp;
}

EmResult fit_once(const Eigen::MatrixXd& xc, const Eigen::VectorXd& center, int K, double lambda,
                  const std::vector<std::vector<int>>& groups, RngSpec spec, const EmOptions& opts,
                  const Eigen::MatrixXd* init) {
  Eigen::MatrixXd resp;
  if (init) {
    resp = *init;
  } else {
    Rng rng(spec);
    resp = kmeans_init(xc, K, rng);
  }

  PenalizedGmm m;
  m.K_max = K;
  m.lambda = lambda;
  m.groups = groups;
  m.center = center;
  m_step(m, xc, resp);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    m.loglik = normalize(log_joint(m, xc), resp);
    m.penalized = m.loglik - m.penalty();
    m.trace.push_back(m.penalized);
    m.iterations = it + 1;
    if (std::abs(m.penalized - prev) <= opts.tol * (1.0 + std::abs(m.penalized))) {
      m.converged = true;
      break;
    }
    prev = m.penalized;
    if (m_step(m, xc, resp)) m.pruned_at.push_back(it + 1);
  }
  m.refresh_active();
  EmResult r;
  r.labels = argmax_labels(resp);
  r.resp = std::move(resp);
  r.model = std::move(m);
  return r;
}

int count_df(const PenalizedGmm& m) {
  int df = m.K() - 1 + m.dim();
  for (Eigen::Index k = 0; k < m.means.rows(); ++k)
    for (Eigen::Index c = 0; c < m.means.cols(); ++c) df += m.means(k, c) != 0.0 ? 1 : 0;
  return df;
}

}  // namespace

double PenalizedGmm::penalty() const {
  double s = 0.0;
  for (const auto& g : groups) {
    double mx = 0.0;
    for (Eigen::Index k = 0; k < means.rows(); ++k)
      for (int c : g) mx = std::max(mx, std::abs(means(k, c)));
    s += mx;
  }
  return lambda * s;
}

void PenalizedGmm::refresh_active(double tol) {
  active_vars.clear();
  for (std::size_t j = 0; j < groups.size(); ++j) {
    double mx = 0.0;
    for (Eigen::Index k = 0; k < means.rows(); ++k)
      for (int c : groups[j]) mx = std::max(mx, std::abs(means(k, c)));
    if (mx > tol) active_vars.push_back(static_cast<int>(j));
  }
}

std::vector<std::vector<int>> singleton_groups(int d) {
  std::vector<std::vector<int>> g(static_cast<std::size_t>(d));
  for (int c = 0; c < d; ++c) g[static_cast<std::size_t>(c)] = {c};
  return g;
}

double mixture_loglik(const PenalizedGmm& model, const Eigen::MatrixXd& scores) {
  require(scores.cols() == model.dim(), "mixture_loglik: score dimension mismatch");
  const Eigen::MatrixXd xc = scores.rowwise() - model.center.transpose();
  Eigen::MatrixXd resp;
  return normalize(log_joint(model, xc), resp);
}

double penalized_loglik(const PenalizedGmm& model, const Eigen::MatrixXd& scores) {
  return mixture_loglik(model, scores) - model.penalty();
}

Eigen::MatrixXd responsibilities(const PenalizedGmm& model, const Eigen::MatrixXd& scores) {
  require(scores.cols() == model.dim(), "responsibilities: score dimension mismatch");
  const Eigen::MatrixXd xc = scores.rowwise() - model.center.transpose();
  Eigen::MatrixXd resp;
  normalize(log_joint(model, xc), resp);
  return resp;
}

Eigen::VectorXd prox_weighted_linf(const Eigen::VectorXd& m, const Eigen::VectorXd& a, double lam) {
  require(m.size() == a.size(), "prox_weighted_linf: size mismatch");
  if (lam <= 0.0) return m;
  if ((a.array() * m.array().abs()).sum() <= lam) return Eigen::VectorXd::Zero(m.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.size()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return std::abs(m(x)) > std::abs(m(y)); });
  double sa = 0.0, sau = 0.0, t = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Eigen::Index i = order[r];
    sa += a(i);
    sau += a(i) * std::abs(m(i));
    if (sa <= 0.0) continue;
    t = (sau - lam) / sa;
    const double next = r + 1 < order.size() ? std::abs(m(order[r + 1])) : 0.0;
    if (t >= next) break;
  }
  t = std::max(t, 0.0);
  Eigen::VectorXd out(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) out(i) = std::copysign(std::min(std::abs(m(i)), t), m(i));
  return out;
}

EmResult fit_em(const Eigen::MatrixXd& scores, int K, double lambda, const RngSpec& rng, const EmOptions& opts,
                const Eigen::MatrixXd* init) {
  require(K >= 1, "fit_em: K must be >= 1");
  require(scores.rows() > K, "fit_em: need more rows than clusters");
  require(lambda >= 0.0, "fit_em: lambda must be >= 0");
  require(scores.allFinite(), "fit_em: non-finite scores");
  const int d = static_cast<int>(scores.cols());
  auto groups = opts.groups.empty() ? singleton_groups(d) : opts.groups;
  for (const auto& g : groups)
    for (int c : g) require(c >= 0 && c < d, "fit_em: group column out of range");
  const Eigen::VectorXd center = scores.colwise().mean().transpose();
  const Eigen::MatrixXd xc = scores.rowwise() - center.transpose();
  const int restarts = std::max(1, opts.restarts);
  const bool warm = init && init->rows() == scores.rows() && init->cols() >= 1;
  std::vector<EmResult> runs(static_cast<std::size_t>(restarts) + (warm ? 1 : 0));
  std::vector<std::string> errors(runs.size());
  num::parallel_for(
      runs.size(),
      [&](std::size_t r) {
        try {
          const bool use_init = warm && r == static_cast<std::size_t>(restarts);
          runs[r] = fit_once(xc, center, K, lambda, groups, rng.child(tag::kRestart, r), opts,
                             use_init ? init : nullptr);
        } catch (const Error& e) {
          errors[r] = e.what();
        }
      },
      opts.threads);
  std::size_t best = runs.size();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (!errors[r].empty()) continue;
    if (best == runs.size() || runs[r].model.penalized > runs[best].model.penalized) best = r;
  }
  if (best == runs.size()) throw Error(errors.front());
  return std::move(runs[best]);
}

std::vector<double> default_lambda_grid(const Eigen::MatrixXd& scores, int K, const RngSpec& rng,
                                        const EmOptions& opts) {
  const EmResult base = fit_em(scores, K, 0.0, rng, opts);
  const auto& m = base.model;
  const Eigen::MatrixXd xc = scores.rowwise() - m.center.transpose();
  const Eigen::VectorXd nk = base.resp.colwise().sum().transpose();
  const Eigen::MatrixXd wmean = (base.resp.transpose() * xc).array().colwise() / nk.array();
  double lmax = 0.0;
  for (const auto& g : m.groups) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < wmean.rows(); ++k)
      for (int c : g) s += nk(k) / m.variances(c) * std::abs(wmean(k, c));
    lmax = std::max(lmax, s);
  }
  std::vector<double> grid;
  for (int i = 0; i < 8; ++i) grid.push_back(lmax * std::pow(10.0, -3.0 + 3.0 * i / 7.0));
  return grid;
}

Selection select_model(const Eigen::MatrixXd& scores, int K, std::vector<double> lambdas, const RngSpec& rng,
                       const EmOptions& opts) {
  require(K >= 1, "select_model: K must be >= 1");
  if (lambdas.empty()) lambdas = default_lambda_grid(scores, K, rng.child(tag::kMisc, 0), opts);
  Selection sel;
  const double logn = std::log(static_cast<double>(scores.rows()));
  double best_bic = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return lambdas[a] < lambdas[b]; });
  for (int k = 1; k <= K; ++k) {
    if (scores.rows() <= k) break;
    std::vector<SelectionRow> rows(lambdas.size());
    std::vector<EmResult> fits(lambdas.size());
    const Eigen::MatrixXd* warm = nullptr;
    for (std::size_t l : order) {
      fits[l] = fit_em(scores, k, lambdas[l], rng.child(tag::kSplit, static_cast<std::uint64_t>(k)), opts, warm);
      warm = &fits[l].resp;
    }
    for (std::size_t l = 0; l < lambdas.size(); ++l) {
      SelectionRow row;
      row.K = k;
      row.lambda = lambdas[l];
      row.clusters = fits[l].model.K();
      row.df = count_df(fits[l].model);
      row.loglik = fits[l].model.loglik;
      row.bic = -2.0 * row.loglik + row.df * logn;
      sel.table.push_back(row);
      if (row.bic < best_bic) {
        best_bic = row.bic;
        sel.best = sel.table.size() - 1;
        sel.fit = std::move(fits[l]);
      }
    }
  }
  require(!sel.table.empty(), "select_model: no feasible fit");
  return sel;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size(), "adjusted_rand_index: label vectors differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> nij;
  std::map<int, double> ai, bj;
  for (std::size_t i = 0; i < a.size(); ++i) {
    nij[{a[i], b[i]}] += 1.0;
    ai[a[i]] += 1.0;
    bj[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sij = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : nij) sij += c2(v);
  for (const auto& [k, v] : ai) sa += c2(v);
  for (const auto& [k, v] : bj) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double maxidx = 0.5 * (sa + sb);
  if (maxidx == expected) return 1.0;
  return (sij - expected) / (maxidx - expected);
}

SignalClustering cluster_signals(const std::vector<fda::FunctionalSample>& channels, double var_threshold, int K,
                                 std::optional<double> lambda, const RngSpec& rng, const EmOptions& opts) {
  require(!channels.empty(), "cluster_signals: no channels");
  SignalClustering out;
  // Canonical unit order.
  std::vector<std::string> ids = channels.front().unit_ids;
  if (ids.empty())
    for (std::size_t i = 0; i < channels.front().n(); ++i) ids.push_back("u" + std::to_string(i + 1));
  std::vector<std::string> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "cluster_signals: duplicate unit ids");
  out.unit_ids = sorted;
  std::vector<Eigen::MatrixXd> blocks;
  for (const auto& ch : channels) {
    ch.validate();
    std::vector<std::string> cid = ch.unit_ids.empty() ? ids : ch.unit_ids;
    require(cid.size() == sorted.size(), "cluster_signals: channel '" + ch.channel + "' has a different unit count");
    std::map<std::string, Eigen::Index> pos;
    for (std::size_t i = 0; i < cid.size(); ++i) pos[cid[i]] = static_cast<Eigen::Index>(i);
    fda::FunctionalSample s = ch;
    s.unit_ids = sorted;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      auto it = pos.find(sorted[i]);
      require(it != pos.end(), "cluster_signals: unit '" + sorted[i] + "' missing from channel '" + ch.channel + "'");
      s.curves.row(static_cast<Eigen::Index>(i)) = ch.curves.row(it->second);
    }
    out.bases.push_back(fda::fpca(s, var_threshold));
    out.channels.push_back(ch.channel);
    blocks.push_back(out.bases.back().truncated_scores());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(sorted.size());
  Eigen::Index d = 0;
  for (const auto& b : blocks) d += b.cols();
  Eigen::MatrixXd all(n, d);
  Eigen::Index col = 0;
  for (const auto& b : blocks) {
    all.middleCols(col, b.cols()) = b;
    col += b.cols();
  }
  // Columns without variation carry no clustering information.
  const Eigen::VectorXd var = (all.rowwise() - all.colwise().mean()).colwise().squaredNorm() / static_cast<double>(n);
  const double scale = std::max(var.maxCoeff(), 0.0);
  std::vector<Eigen::Index> keep;
  col = 0;
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    std::vector<int> g;
    for (Eigen::Index c = 0; c < blocks[j].cols(); ++c, ++col) {
      if (var(col) > 1e-12 * scale && var(col) > 1e-300) {
        g.push_back(static_cast<int>(keep.size()));
        keep.push_back(col);
      }
    }
    out.groups.push_back(g);
  }
  out.scores.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) out.scores.col(static_cast<Eigen::Index>(c)) = all.col(keep[c]);

  if (keep.empty()) {
    out.labels.assign(static_cast<std::size_t>(n), 0);
    out.model.weights = Eigen::VectorXd::Ones(1);
    out.model.means.resize(1, 0);
    out.model.lambda = lambda.value_or(0.0);
    out.model.groups = out.groups;
    return out;
  }
  EmOptions o = opts;
  o.groups = out.groups;
  EmResult fit;
  if (lambda) {
    fit = fit_em(out.scores, K, *lambda, rng, o);
  } else {
    out.selection = select_model(out.scores, K, {}, rng, o);
    fit = out.selection->fit;
  }
  out.model = fit.model;
  std::map<int, int> relabel;
  for (int l : fit.labels) relabel.emplace(l, static_cast<int>(relabel.size()));
  for (int l : fit.labels) out.labels.push_back(relabel[l]);
  return out;
}

}  // namespace degkit::cluster
