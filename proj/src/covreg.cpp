#include "degkit/covreg.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace degkit::covreg {

namespace {

struct Nodes {
  std::vector<double> w;
  std::vector<double> logc;
};

Nodes re_nodes(double sigma_w, int order) {
  Nodes nd;
  if (!(sigma_w > 0.0)) {
    nd.w = {0.0};
    nd.logc = {0.0};
    return nd;
  }
  const auto q = num::gauss_hermite(order);
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    nd.w.push_back(std::sqrt(2.0) * sigma_w * q.nodes[k]);
    nd.logc.push_back(std::log(q.weights[k]) - 0.5 * std::log(num::kPi));
  }
  return nd;
}

double soft(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

}  // namespace

std::vector<int> EnLifetimeModel::selected() const {
  std::vector<int> s;
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    if (beta(j) != 0.0) s.push_back(static_cast<int>(j));
  return s;
}

double EnLifetimeModel::eta(const Eigen::VectorXd& x) const {
  require(x.size() == beta.size(), "predict: covariate count does not match the model");
  double e = beta0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double c = x_center.size() == beta.size() ? x_center(j) : 0.0;
    const double s = x_scale.size() == beta.size() ? x_scale(j) : 1.0;
    e += beta(j) * (x(j) - c) / s;
  }
  return e;
}

LifetimeData make_lifetime_data(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x) {
  require(times.size() == delta.size() && times.size() == x.rows(), "fit_en_lifetime: row counts differ");
  require(times.size() >= 2, "fit_en_lifetime: need at least 2 units");
  LifetimeData d;
  d.log_times.resize(times.size());
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    require(times(i) > 0.0 && std::isfinite(times(i)), "fit_en_lifetime: times must be positive");
    require(delta(i) == 0 || delta(i) == 1, "fit_en_lifetime: delta must be 0 or 1");
    d.log_times(i) = std::log(times(i));
  }
  require(delta.sum() > 0, "fit_en_lifetime: all observations are censored");
  require(x.allFinite(), "fit_en_lifetime: non-finite covariates");
  d.delta = delta;
  d.x = x;
  return d;
}

double en_negloglik(const LifetimeData& data, double beta0, const Eigen::VectorXd& beta, double log_sigma,
                    double sigma_w, int quad_order, Eigen::VectorXd* grad) {
  const Nodes nd = re_nodes(sigma_w, quad_order);
  const double sigma = std::exp(log_sigma);
  const Eigen::Index n = data.log_times.size();
  const Eigen::VectorXd eta = data.x.cols() > 0 ? Eigen::VectorXd((data.x * beta).array() + beta0)
                                                : Eigen::VectorXd::Constant(n, beta0);
  const std::size_t nq = nd.w.size();
  std::vector<double> a(nq), de(nq), ds(nq);
  Eigen::VectorXd ge(n);
  double gs = 0.0, nll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = data.log_times(i);
    for (std::size_t q = 0; q < nq; ++q) {
      const double z = (y - eta(i) - nd.w[q]) / sigma;
      double ll;
      if (data.delta(i) == 1) {
        ll = -y - log_sigma - num::kLogSqrt2Pi - 0.5 * z * z;
        de[q] = z / sigma;
        ds[q] = z * z - 1.0;
      } else {
        ll = num::normal_logsf(z);
        const double h = std::exp(-0.5 * z * z - num::kLogSqrt2Pi - ll);
        de[q] = h / sigma;
        ds[q] = h * z;
      }
      a[q] = nd.logc[q] + ll;
    }
    const double lse = num::log_sum_exp(a);
    nll -= lse;
    double e = 0.0, s = 0.0;
    for (std::size_t q = 0; q < nq; ++q) {
      const double p = std::exp(a[q] - lse);
      e += p * de[q];
      s += p * ds[q];
    }
    ge(i) = e;
    gs += s;
  }
  if (grad) {
    grad->resize(beta.size() + 2);
    (*grad)(0) = -ge.sum();
    if (beta.size() > 0) grad->segment(1, beta.size()) = -(data.x.transpose() * ge);
    (*grad)(beta.size() + 1) = -gs;
  }
  return nll;
}

double en_objective(const LifetimeData& data, const EnLifetimeModel& m) {
  return en_negloglik(data, m.beta0, m.beta, std::log(m.sigma), m.sigma_w, m.quad_order) +
         m.alpha1 * m.beta.lpNorm<1>() + m.alpha2 * m.beta.squaredNorm();
}

namespace {

// Monotone FISTA on theta = (beta0, beta, log sigma); beta frozen at zero when !free_beta.
EnLifetimeModel fit_en_impl(const LifetimeData& data, double alpha1, double alpha2, const EnOptions& opts,
                            const EnLifetimeModel* warm, bool free_beta) {
  const Eigen::Index p = data.x.cols(), dim = p + 2;
  const double nn = static_cast<double>(data.log_times.size());
  Eigen::VectorXd x(dim);
  if (warm && warm->beta.size() == p) {
    x(0) = warm->beta0;
    x.segment(1, p) = warm->beta;
    x(dim - 1) = std::log(warm->sigma);
  } else {
    x.setZero();
    const double mu = data.log_times.mean();
    x(0) = mu;
    const double var = (data.log_times.array() - mu).square().mean();
    x(dim - 1) = 0.5 * std::log(std::max(var, 1e-8));
  }
  if (!free_beta) x.segment(1, p).setZero();

  auto smooth = [&](const Eigen::VectorXd& th, Eigen::VectorXd* g) {
    double f = en_negloglik(data, th(0), th.segment(1, p), th(dim - 1), opts.sigma_w, opts.quad_order, g);
    f += alpha2 * th.segment(1, p).squaredNorm();
    if (g) {
      g->segment(1, p) += 2.0 * alpha2 * th.segment(1, p);
      if (!free_beta) g->segment(1, p).setZero();
    }
    return f;
  };
  auto full = [&](const Eigen::VectorXd& th, double f_smooth) { return f_smooth + alpha1 * th.segment(1, p).lpNorm<1>(); };
  auto prox = [&](const Eigen::VectorXd& v, double step) {
    Eigen::VectorXd out = v;
    for (Eigen::Index j = 1; j <= p; ++j) out(j) = free_beta ? soft(v(j), step * alpha1) : 0.0;
    return out;
  };

  EnLifetimeModel m;
  m.alpha1 = alpha1;
  m.alpha2 = alpha2;
  m.sigma_w = opts.sigma_w;
  m.quad_order = opts.quad_order;
  double fx = full(x, smooth(x, nullptr));
  m.objective_trace.push_back(fx);
  Eigen::VectorXd y = x, x_prev = x;
  double t = 1.0, lip = 1.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    Eigen::VectorXd g;
    const double fy = smooth(y, &g);
    Eigen::VectorXd z;
    double fz_s = 0.0;
    for (int bt = 0; bt < 200; ++bt) {
      z = prox(y - g / lip, 1.0 / lip);
      fz_s = smooth(z, nullptr);
      const Eigen::VectorXd d = z - y;
      if (std::isfinite(fz_s) && fz_s <= fy + g.dot(d) + 0.5 * lip * d.squaredNorm() + 1e-12 * std::abs(fy)) break;
      lip *= 2.0;
    }
    const double fz = full(z, fz_s);
    const double gm = ((y - z) * lip).lpNorm<Eigen::Infinity>();
    const bool from_x = y == x;
    x_prev = x;
    const bool improved = fz < fx;
    if (improved) {
      x = z;
      fx = fz;
    }
    m.objective_trace.push_back(fx);
    m.iterations = it + 1;
    // A plain proximal step that cannot lower the objective means we are at rounding level.
    if (gm <= 1e-9 * nn || (!improved && from_x) ||
        (improved && it > 0 && (x - x_prev).lpNorm<Eigen::Infinity>() <= opts.tol)) {
      m.converged = true;
      break;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (!improved) {
      // Momentum restart.
      y = x;
      t = 1.0;
      continue;
    }
    y = x + ((t - 1.0) / t_next) * (x - x_prev);
    t = t_next;
    lip *= 0.9;
  }
  m.beta0 = x(0);
  m.beta = x.segment(1, p);
  m.sigma = std::exp(x(dim - 1));
  m.x_center = Eigen::VectorXd::Zero(p);
  m.x_scale = Eigen::VectorXd::Ones(p);
  return m;
}

}  // namespace

EnLifetimeModel fit_en_lifetime(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                                double alpha1, double alpha2, const EnOptions& opts, const EnLifetimeModel* warm_start) {
  require(alpha1 >= 0.0 && alpha2 >= 0.0, "fit_en_lifetime: alphas must be >= 0");
  require(opts.sigma_w >= 0.0, "fit_en_lifetime: sigma_w must be >= 0");
  require(opts.quad_order >= 1, "fit_en_lifetime: quadrature order must be >= 1");
  const LifetimeData data = make_lifetime_data(times, delta, x);
  return fit_en_impl(data, alpha1, alpha2, opts, warm_start, true);
}

double en_alpha1_max(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                     const EnOptions& opts) {
  const LifetimeData data = make_lifetime_data(times, delta, x);
  const EnLifetimeModel null = fit_en_impl(data, 0.0, 0.0, opts, nullptr, false);
  Eigen::VectorXd g;
  en_negloglik(data, null.beta0, null.beta, std::log(null.sigma), opts.sigma_w, opts.quad_order, &g);
  return g.segment(1, x.cols()).lpNorm<Eigen::Infinity>();
}

namespace {

// Unpenalized negative log-likelihood on the support of m.
double support_refit_negloglik(const LifetimeData& data, const EnLifetimeModel& m, const EnOptions& opts) {
  const std::vector<int> sel = m.selected();
  LifetimeData sub;
  sub.log_times = data.log_times;
  sub.delta = data.delta;
  sub.x.resize(data.x.rows(), static_cast<Eigen::Index>(sel.size()));
  EnLifetimeModel start;
  start.beta0 = m.beta0;
  start.sigma = m.sigma;
  start.beta.resize(static_cast<Eigen::Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k) {
    sub.x.col(static_cast<Eigen::Index>(k)) = data.x.col(sel[k]);
    start.beta(static_cast<Eigen::Index>(k)) = m.beta(sel[k]);
  }
  const EnLifetimeModel r = fit_en_impl(sub, 0.0, 0.0, opts, &start, true);
  return en_negloglik(sub, r.beta0, r.beta, std::log(r.sigma), opts.sigma_w, opts.quad_order);
}

}  // namespace

EnSelection select_en(const Eigen::VectorXd& times, const Eigen::VectorXi& delta, const Eigen::MatrixXd& x,
                      const std::vector<double>& alpha2s, const EnOptions& opts) {
  require(!alpha2s.empty(), "select_en: empty alpha2 grid");
  const LifetimeData data = make_lifetime_data(times, delta, x);
  const double amax = en_alpha1_max(times, delta, x, opts);
  const double logn = std::log(static_cast<double>(times.size()));
  EnSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (double a2 : alpha2s) {
    EnLifetimeModel prev;
    bool have_prev = false;
    for (int k = 0; k < 25; ++k) {
      const double a1 = amax * std::pow(10.0, -2.0 * k / 24.0);
      EnLifetimeModel m = fit_en_impl(data, a1, a2, opts, have_prev ? &prev : nullptr, true);
      EnGridRow row;
      row.alpha1 = a1;
      row.alpha2 = a2;
      row.df = static_cast<int>(m.selected().size()) + 2;
      row.negloglik = en_negloglik(data, m.beta0, m.beta, std::log(m.sigma), opts.sigma_w, opts.quad_order);
      row.refit_negloglik = support_refit_negloglik(data, m, opts);
      row.bic = 2.0 * row.refit_negloglik + row.df * logn;
      row.converged = m.converged;
      sel.table.push_back(row);
      if (row.bic < best) {
        best = row.bic;
        sel.best = sel.table.size() - 1;
        sel.model = m;
      }
      prev = std::move(m);
      have_prev = true;
    }
  }
  return sel;
}

void standardize(const Eigen::MatrixXd& x, Eigen::VectorXd& center, Eigen::VectorXd& scale) {
  const double n = static_cast<double>(x.rows());
  center = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double sd = std::sqrt((x.col(j).array() - center(j)).square().sum() / std::max(n - 1.0, 1.0));
    scale(j) = sd > 0.0 ? sd : 1.0;
  }
}

LifetimePrediction predict_lifetime(const EnLifetimeModel& model, const Eigen::VectorXd& x,
                                    const std::vector<double>& probs) {
  const double eta = model.eta(x);
  const Nodes nd = re_nodes(model.sigma_w, model.quad_order);
  auto cdf = [&](double logt) {
    double s = 0.0;
    for (std::size_t q = 0; q < nd.w.size(); ++q)
      s += std::exp(nd.logc[q]) * num::normal_cdf((logt - eta - nd.w[q]) / model.sigma);
    return s;
  };
  auto quantile = [&](double p) {
    require(p > 0.0 && p < 1.0, "predict_lifetime: probabilities must be in (0, 1)");
    const double span = 40.0 * (model.sigma + model.sigma_w);
    double lo = eta - span, hi = eta + span;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(eta)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
  };
  LifetimePrediction out;
  out.median = model.sigma_w > 0.0 ? quantile(0.5) : std::exp(eta);
  out.probs = probs;
  for (double p : probs) out.quantiles.push_back(p == 0.5 ? out.median : quantile(p));
  return out;
}

// ---------------------------------------------------------------------------

double FuncRegModel::psi(double lambda) const { return basis.eval(lambda).dot(psi_coef); }

Eigen::VectorXd FuncRegModel::psi_curve(const std::vector<double>& grid) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t g = 0; g < grid.size(); ++g) out(static_cast<Eigen::Index>(g)) = psi(grid[g]);
  return out;
}

FuncRegModel fit_funcreg(const Eigen::VectorXd& y, const Eigen::MatrixXd& design, const BSplineBasis& basis,
                         double smooth, const Eigen::MatrixXd& scalar) {
  const Eigen::Index n = y.size(), m = design.cols(), q = scalar.cols();
  require(design.rows() == n, "fit_funcreg: design rows != observations");
  require(q == 0 || scalar.rows() == n, "fit_funcreg: scalar covariate rows != observations");
  require(m == basis.dimension(), "fit_funcreg: design columns != basis dimension");
  require(m >= 1, "fit_funcreg: spline dimension must be >= 1");
  require(smooth >= 0.0, "fit_funcreg: smooth weight must be >= 0");
  require(y.allFinite() && design.allFinite(), "fit_funcreg: non-finite input");
  const Eigen::Index k = 1 + m + q;
  Eigen::MatrixXd a(n, k);
  a.col(0).setOnes();
  a.middleCols(1, m) = design;
  if (q > 0) a.rightCols(q) = scalar;
  Eigen::MatrixXd pen = Eigen::MatrixXd::Zero(k, k);
  pen.block(1, 1, m, m) = smooth * second_difference_penalty(static_cast<int>(m));
  const Eigen::MatrixXd lhs = a.transpose() * a + pen;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(lhs);
  qr.setThreshold(1e-12);
  if (qr.rank() < k) {
    if (smooth == 0.0)
      throw Error("fit_funcreg: design is rank-deficient; use a positive smooth weight");
    throw Error("fit_funcreg: design is rank-deficient even with the smoothness penalty");
  }
  const Eigen::VectorXd coef = qr.solve(a.transpose() * y);
  FuncRegModel mdl;
  mdl.basis = basis;
  mdl.smooth = smooth;
  mdl.beta0 = coef(0);
  mdl.psi_coef = coef.segment(1, m);
  mdl.beta = coef.tail(q);
  const Eigen::VectorXd r = y - a * coef;
  mdl.sigma = std::sqrt(r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n - k, 1)));
  return mdl;
}

Eigen::VectorXd predict_funcreg(const FuncRegModel& model, const Eigen::MatrixXd& design, const Eigen::MatrixXd& scalar) {
  require(design.cols() == model.psi_coef.size(), "predict_funcreg: design columns do not match the model");
  require(scalar.cols() == model.beta.size(), "predict_funcreg: scalar covariates do not match the model");
  Eigen::VectorXd out = (design * model.psi_coef).array() + model.beta0;
  if (model.beta.size() > 0) out += scalar * model.beta;
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Link link) { return link == Link::kLog ? "log" : "identity"; }

Link link_from_string(const std::string& s) {
  if (s == "identity") return Link::kIdentity;
  if (s == "log") return Link::kLog;
  throw InputError("unknown link '" + s + "' (expected identity or log)");
}

Eigen::MatrixXd TensorRegModel::B() const {
  if (U.cols() == 0) return Eigen::MatrixXd::Zero(U.rows(), V.rows());
  return U * V.transpose();
}

double TensorRegModel::linear(const Eigen::MatrixXd& x) const {
  require(x.rows() == U.rows() && x.cols() == V.rows(), "tensor predict: image shape does not match the model");
  double s = alpha0;
  for (Eigen::Index r = 0; r < U.cols(); ++r) s += U.col(r).dot(x * V.col(r));
  return s;
}

double TensorRegModel::predict(const Eigen::MatrixXd& x) const {
  const double e = linear(x);
  return link == Link::kLog ? std::exp(e) : e;
}

double tensor_objective(const TensorRegModel& model, const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs) {
  double f = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = model.linear(xs[i]);
    const double yi = y(static_cast<Eigen::Index>(i));
    if (model.link == Link::kIdentity) {
      f += (yi - e) * (yi - e);
    } else {
      const double mu = std::exp(e);
      f += 2.0 * ((yi > 0.0 ? yi * std::log(yi / mu) : 0.0) - (yi - mu));
    }
  }
  return f;
}

namespace {

void normalize_factors(TensorRegModel& m) {
  const Eigen::Index R = m.U.cols();
  for (Eigen::Index r = 0; r < R; ++r) {
    const double nu = m.U.col(r).norm(), nv = m.V.col(r).norm();
    if (nu > 0.0 && nv > 0.0) {
      const double s = std::sqrt(nv / nu);
      m.U.col(r) *= s;
      m.V.col(r) /= s;
    }
    Eigen::Index first = 0;
    while (first < m.U.rows() && m.U(first, r) == 0.0) ++first;
    if (first < m.U.rows() && m.U(first, r) < 0.0) {
      m.U.col(r) = -m.U.col(r);
      m.V.col(r) = -m.V.col(r);
    }
  }
  // Strongest component first.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(R));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return m.U.col(a).squaredNorm() > m.U.col(b).squaredNorm();
  });
  const Eigen::MatrixXd u = m.U, v = m.V;
  for (Eigen::Index r = 0; r < R; ++r) {
    m.U.col(r) = u.col(order[static_cast<std::size_t>(r)]);
    m.V.col(r) = v.col(order[static_cast<std::size_t>(r)]);
  }
}

// Rows: [1, vec(X_i F)] where F is the fixed factor.
Eigen::MatrixXd block_design(const std::vector<Eigen::MatrixXd>& xs, const Eigen::MatrixXd& fixed, bool transpose) {
  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index rows = transpose ? xs.front().cols() : xs.front().rows();
  const Eigen::Index R = fixed.cols();
  Eigen::MatrixXd a(n, 1 + rows * R);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& x = xs[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd xf = transpose ? Eigen::MatrixXd(x.transpose() * fixed) : Eigen::MatrixXd(x * fixed);
    a(i, 0) = 1.0;
    a.row(i).tail(rows * R) = Eigen::Map<const Eigen::RowVectorXd>(xf.data(), rows * R);
  }
  return a;
}

Eigen::VectorXd ls_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd* w) {
  if (!w) return a.completeOrthogonalDecomposition().solve(b);
  const Eigen::VectorXd sw = w->array().sqrt();
  const Eigen::MatrixXd aw = sw.asDiagonal() * a;
  return aw.completeOrthogonalDecomposition().solve(sw.cwiseProduct(b));
}

}  // namespace

TensorRegModel fit_tensorreg(const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs, int rank, Link link,
                             const TensorOptions& opts) {
  require(!xs.empty() && y.size() == static_cast<Eigen::Index>(xs.size()), "fit_tensorreg: y and images differ in count");
  require(rank >= 0, "fit_tensorreg: rank must be >= 0");
  const Eigen::Index rr = xs.front().rows(), cc = xs.front().cols();
  for (const auto& x : xs) {
    require(x.rows() == rr && x.cols() == cc, "fit_tensorreg: images differ in shape");
    require(x.allFinite(), "fit_tensorreg: non-finite image values");
  }
  require(y.allFinite(), "fit_tensorreg: non-finite responses");
  if (link == Link::kLog) require((y.array() >= 0.0).all(), "fit_tensorreg: log link needs nonnegative responses");
  const Eigen::Index n = y.size();
  require(n > static_cast<Eigen::Index>(rank) * (rr + cc), "fit_tensorreg: need n > R * (rows + cols)");

  TensorRegModel m;
  m.link = link;
  m.U = Eigen::MatrixXd::Zero(rr, rank);
  m.V = Eigen::MatrixXd::Zero(cc, rank);
  const double ybar = y.mean();
  m.alpha0 = link == Link::kLog ? std::log(std::max(ybar, 1e-300)) : ybar;
  if (rank == 0) {
    m.objective_trace.push_back(tensor_objective(m, y, xs));
    m.converged = true;
    const Eigen::VectorXd r = y.array() - (link == Link::kLog ? std::exp(m.alpha0) : m.alpha0);
    m.noise_sd = std::sqrt(r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
    return m;
  }

  // Initial factors from the response-weighted image sum.
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i)
    target(i) = link == Link::kLog ? std::log(y(i) + 0.5) : y(i);
  target.array() -= target.mean();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(rr, cc);
  for (Eigen::Index i = 0; i < n; ++i) s += target(i) * xs[static_cast<std::size_t>(i)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index k = std::min<Eigen::Index>(rank, svd.singularValues().size());
  for (Eigen::Index r = 0; r < k; ++r) {
    const double sv = std::sqrt(svd.singularValues()(r));
    m.U.col(r) = svd.matrixU().col(r) * sv;
    m.V.col(r) = svd.matrixV().col(r) * sv;
  }
  {
    Eigen::VectorXd lin(n);
    for (Eigen::Index i = 0; i < n; ++i) lin(i) = m.linear(xs[static_cast<std::size_t>(i)]) - m.alpha0;
    const double ll = lin.squaredNorm();
    if (ll > 0.0) {
      const double c = target.dot(lin) / ll;
      const double sc = std::sqrt(std::abs(c));
      m.U *= c < 0.0 ? -sc : sc;
      m.V *= sc;
    }
  }

  auto linear_all = [&](const TensorRegModel& mm) {
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) e(i) = mm.linear(xs[static_cast<std::size_t>(i)]);
    return e;
  };
  double f = tensor_objective(m, y, xs);
  m.objective_trace.push_back(f);
  const double scale = std::max(y.squaredNorm(), 1e-300);
  for (int it = 0; it < opts.max_iters; ++it) {
    const double f_start = f;
    for (int side = 0; side < 2; ++side) {
      const bool v_side = side == 1;
      const Eigen::MatrixXd a = block_design(xs, v_side ? m.U : m.V, v_side);
      Eigen::VectorXd sol;
      if (link == Link::kIdentity) {
        sol = ls_solve(a, y, nullptr);
      } else {
        const Eigen::VectorXd e = linear_all(m);
        const Eigen::VectorXd mu = e.array().exp();
        const Eigen::VectorXd z = e.array() + (y - mu).array() / mu.array();
        sol = ls_solve(a, z, &mu);
      }
      TensorRegModel cand = m;
      Eigen::MatrixXd& fac = v_side ? cand.V : cand.U;
      const Eigen::MatrixXd old = fac;
      const double old_alpha = m.alpha0;
      const Eigen::MatrixXd fresh = Eigen::Map<const Eigen::MatrixXd>(sol.data() + 1, fac.rows(), fac.cols());
      double tau = 1.0;
      for (int h = 0; h < 40; ++h, tau *= 0.5) {
        cand.alpha0 = old_alpha + tau * (sol(0) - old_alpha);
        fac = old + tau * (fresh - old);
        const double fc = tensor_objective(cand, y, xs);
        if (std::isfinite(fc) && fc <= f) {
          m = cand;
          f = fc;
          break;
        }
      }
    }
    normalize_factors(m);
    f = tensor_objective(m, y, xs);
    m.objective_trace.push_back(f);
    m.iterations = it + 1;
    if (f_start - f <= opts.tol * f_start || f <= 1e-28 * scale) {
      m.converged = true;
      break;
    }
  }
  const Eigen::VectorXd fitted = linear_all(m);
  const Eigen::VectorXd r =
      link == Link::kLog ? Eigen::VectorXd(y - Eigen::VectorXd(fitted.array().exp())) : Eigen::VectorXd(y - fitted);
  const Eigen::Index df = 1 + static_cast<Eigen::Index>(rank) * (rr + cc - 1);
  m.noise_sd = std::sqrt(r.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(n - df, 1)));
  return m;
}

RankSelection select_tensor_rank(const Eigen::VectorXd& y, const std::vector<Eigen::MatrixXd>& xs,
                                 const std::vector<int>& ranks, Link link, const RngSpec& rng,
                                 const TensorOptions& opts) {
  require(!ranks.empty(), "select_tensor_rank: empty rank list");
  require(y.size() == static_cast<Eigen::Index>(xs.size()), "select_tensor_rank: y and images differ in count");
  const std::size_t n = xs.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng r(rng);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[r.index(i)]);
  const std::size_t n_val = std::max<std::size_t>(1, n / 5);
  std::vector<Eigen::MatrixXd> xt, xv;
  std::vector<double> yt, yv;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = idx[k];
    if (k < n_val) {
      xv.push_back(xs[i]);
      yv.push_back(y(static_cast<Eigen::Index>(i)));
    } else {
      xt.push_back(xs[i]);
      yt.push_back(y(static_cast<Eigen::Index>(i)));
    }
  }
  const Eigen::VectorXd ytv = Eigen::Map<const Eigen::VectorXd>(yt.data(), static_cast<Eigen::Index>(yt.size()));
  double yvar = 0.0;
  {
    const double m = std::accumulate(yv.begin(), yv.end(), 0.0) / static_cast<double>(yv.size());
    for (double v : yv) yvar += (v - m) * (v - m) / static_cast<double>(yv.size());
  }
  // Smaller ranks win ties within rounding of the response variance.
  RankSelection sel;
  double best = std::numeric_limits<double>::infinity();
  const Eigen::Index shape = xs.front().rows() + xs.front().cols();
  for (int rank : ranks) {
    if (static_cast<Eigen::Index>(yt.size()) <= rank * shape) continue;
    const TensorRegModel m = fit_tensorreg(ytv, xt, rank, link, opts);
    double err = 0.0;
    for (std::size_t k = 0; k < xv.size(); ++k) {
      const double d = yv[k] - m.predict(xv[k]);
      err += d * d / static_cast<double>(xv.size());
    }
    sel.ranks.push_back(rank);
    sel.validation_error.push_back(err);
    if (err < best - 1e-9 * (best + yvar)) {
      best = err;
      sel.best = rank;
    }
  }
  require(!sel.ranks.empty(), "select_tensor_rank: too few rows for every candidate rank");
  sel.model = fit_tensorreg(y, xs, sel.best, link, opts);
  return sel;
}

}  // namespace degkit::covreg
