#include "degkit/numerics.hpp"

#include "degkit/error.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace degkit::num {

double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_logcdf(double z) {
  if (z > -20.0) return std::log(normal_cdf(z));
  // Asymptotic Mills-ratio expansion for the far lower tail.
  const double z2 = z * z;
  const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
  return -0.5 * z2 - kLogSqrt2Pi - std::log(-z) + std::log(series);
}

double normal_logsf(double z) { return normal_logcdf(-z); }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Quadrature gauss_hermite(int order) {
  require(order >= 1, "gauss_hermite: order must be >= 1");
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  Quadrature q;
  q.nodes.resize(order);
  q.weights.resize(order);
  const double mu0 = std::sqrt(kPi);
  for (int i = 0; i < order; ++i) {
    q.nodes[i] = eig.eigenvalues()(i);
    const double v0 = eig.eigenvectors()(0, i);
    q.weights[i] = mu0 * v0 * v0;
  }
  return q;
}

Eigen::VectorXd trapezoid_weights(std::span<const double> grid) {
  const std::size_t n = grid.size();
  require(n >= 1, "trapezoid_weights: empty grid");
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (n == 1) {
    w(0) = 1.0;
    return w;
  }
  for (std::size_t k = 1; k < n; ++k) {
    const double h = grid[k] - grid[k - 1];
    require(h > 0.0, "trapezoid_weights: grid must be strictly increasing");
    w(k - 1) += 0.5 * h;
    w(k) += 0.5 * h;
  }
  return w;
}

std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> w) {
  const std::size_t n = y.size();
  std::vector<double> level, weight;
  std::vector<std::size_t> count;
  for (std::size_t i = 0; i < n; ++i) {
    level.push_back(y[i]);
    weight.push_back(w.empty() ? 1.0 : w[i]);
    count.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t b = level.size() - 1;
      const double wt = weight[b - 1] + weight[b];
      level[b - 1] = (weight[b - 1] * level[b - 1] + weight[b] * level[b]) / wt;
      weight[b - 1] = wt;
      count[b - 1] += count[b];
      level.pop_back();
      weight.pop_back();
      count.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < level.size(); ++b) out.insert(out.end(), count[b], level[b]);
  return out;
}

MinimizeResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& start, double step, double tol, int max_evals, double xtol) {
  const Eigen::Index d = start.size();
  std::vector<Eigen::VectorXd> pts(d + 1, start);
  std::vector<double> vals(d + 1);
  for (Eigen::Index i = 0; i < d; ++i) pts[i + 1](i) += step;
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  for (Eigen::Index i = 0; i <= d; ++i) vals[i] = eval(pts[i]);
  std::vector<std::size_t> order(d + 1);
  bool converged = false;
  while (evals < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[d - 1];
    if (std::abs(vals[worst] - vals[best]) <= tol * (std::abs(vals[best]) + tol)) {
      double spread = 0.0;
      for (auto& p : pts) spread = std::max(spread, (p - pts[best]).cwiseAbs().maxCoeff());
      if (spread < xtol) {
        converged = true;
        break;
      }
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);
    const Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
    const double fr = eval(refl);
    if (fr < vals[best]) {
      const Eigen::VectorXd exp = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(exp);
      if (fe < fr) {
        pts[worst] = exp;
        vals[worst] = fe;
      } else {
        pts[worst] = refl;
        vals[worst] = fr;
      }
    } else if (fr < vals[second]) {
      pts[worst] = refl;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      const Eigen::VectorXd con =
          outside ? Eigen::VectorXd(centroid + 0.5 * (refl - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = eval(con);
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = con;
        vals[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= static_cast<std::size_t>(d); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          vals[i] = eval(pts[i]);
        }
      }
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  return MinimizeResult{pts[it - vals.begin()], *it, evals, converged};
}

std::pair<double, double> brent_minimize(const std::function<double(double)>& f, double lo,
                                         double hi, int bits) {
  auto r = boost::math::tools::brent_find_minima(f, lo, hi, bits);
  return {r.first, r.second};
}

double kolmogorov_sf(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return KsResult{d, kolmogorov_sf((ne + 0.12 + 0.11 / ne) * d)};
}

namespace {

// Counts inversions of v (in place merge sort).
std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                               std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = (lo + hi) / 2;
  std::uint64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

std::uint64_t tied_pairs(const std::vector<double>& sorted) {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const std::uint64_t m = j - i;
    t += m * (m - 1) / 2;
    i = j;
  }
  return t;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "kendall_tau: need two equal-length samples");
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[idx[i]];
    ys[i] = y[idx[i]];
  }
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t n1 = tied_pairs(xs);
  std::uint64_t n3 = 0;  // joint ties
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && xs[j] == xs[i] && ys[j] == ys[i]) ++j;
    const std::uint64_t m = j - i;
    n3 += m * (m - 1) / 2;
    i = j;
  }
  std::vector<double> buf(n);
  const std::uint64_t swaps = count_inversions(ys, buf, 0, n);
  const std::uint64_t n2 = tied_pairs(ys);
  const double num = static_cast<double>(n0) - n1 - n2 + n3 - 2.0 * static_cast<double>(swaps);
  const double den = std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
  return den > 0.0 ? num / den : 0.0;
}

double mean(std::span<const double> x) {
  require(!x.empty(), "mean: empty input");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  require(x.size() >= 2, "variance: need at least two values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

namespace {
std::atomic<int> g_default_threads{1};
}

void set_default_threads(int threads) { g_default_threads = std::max(1, threads); }
int default_threads() { return g_default_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int threads) {
  if (threads <= 0) threads = default_threads();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace degkit::num
