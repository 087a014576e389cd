#include "degkit/copula.hpp"

#include "degkit/error.hpp"
#include "degkit/numerics.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>

namespace degkit {

std::string to_string(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::kIndependence: return "independence";
    case CopulaFamily::kGaussian: return "gaussian";
    case CopulaFamily::kClayton: return "clayton";
    case CopulaFamily::kGumbel: return "gumbel";
    case CopulaFamily::kFrank: return "frank";
  }
  return "?";
}

CopulaFamily copula_family_from_string(const std::string& s) {
  if (s == "independence") return CopulaFamily::kIndependence;
  if (s == "gaussian") return CopulaFamily::kGaussian;
  if (s == "clayton") return CopulaFamily::kClayton;
  if (s == "gumbel") return CopulaFamily::kGumbel;
  if (s == "frank") return CopulaFamily::kFrank;
  throw InputError("unknown copula family '" + s + "'");
}

CopulaSpec CopulaSpec::gaussian2(double rho) {
  Eigen::MatrixXd r(2, 2);
  r << 1.0, rho, rho, 1.0;
  return gaussian(r);
}

void CopulaSpec::validate(std::size_t p) const {
  switch (family) {
    case CopulaFamily::kIndependence: break;
    case CopulaFamily::kGaussian: {
      require(correlation.rows() == static_cast<Eigen::Index>(p) && correlation.cols() == correlation.rows(),
              "gaussian copula: correlation must be p x p");
      for (Eigen::Index i = 0; i < correlation.rows(); ++i)
        require(std::abs(correlation(i, i) - 1.0) < 1e-12, "gaussian copula: unit diagonal required");
      require((correlation - correlation.transpose()).cwiseAbs().maxCoeff() < 1e-12,
              "gaussian copula: correlation must be symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(correlation);
      require(llt.info() == Eigen::Success, "gaussian copula: correlation must be positive definite");
      break;
    }
    case CopulaFamily::kClayton: require(theta > 0.0, "clayton copula: theta must be > 0"); break;
    case CopulaFamily::kGumbel: require(theta >= 1.0, "gumbel copula: theta must be >= 1"); break;
    case CopulaFamily::kFrank:
      require(theta != 0.0, "frank copula: theta must be nonzero");
      require(theta > 0.0 || p == 2, "frank copula: negative theta requires p = 2");
      break;
  }
}

namespace {

// Positive stable variate with Laplace transform exp(-s^alpha) (Kanter).
double positive_stable(double alpha, Rng& rng) {
  if (alpha >= 1.0) return 1.0;
  const double u = num::kPi * rng.uniform();
  const double e = rng.exponential(1.0);
  const double a = std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha);
  const double b = std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
  return a * b;
}

// Logarithmic series variate with parameter p in (0,1) (Kemp's LK).
double logarithmic_series(double p, Rng& rng) {
  const double h = std::log1p(-p);
  const double v = rng.uniform();
  if (v >= p) return 1.0;
  const double u = rng.uniform();
  const double q = -std::expm1(h * u);
  if (v > q) return 1.0;
  if (v > q * q) return 2.0;
  return std::floor(1.0 + std::log(v) / std::log(q));
}

double clamp_unit(double u) { return std::clamp(u, 1e-300, 1.0 - 1e-16); }

}  // namespace

Eigen::VectorXd sample_copula(const CopulaSpec& c, std::size_t p, Rng& rng) {
  const auto d = static_cast<Eigen::Index>(p);
  Eigen::VectorXd u(d);
  switch (c.family) {
    case CopulaFamily::kIndependence:
      for (Eigen::Index j = 0; j < d; ++j) u(j) = rng.uniform();
      break;
    case CopulaFamily::kGaussian: {
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = rng.normal();
      const Eigen::MatrixXd l = c.correlation.llt().matrixL();
      const Eigen::VectorXd x = l * z;
      for (Eigen::Index j = 0; j < d; ++j) u(j) = clamp_unit(num::normal_cdf(x(j)));
      break;
    }
    case CopulaFamily::kClayton: {
      const double v = rng.gamma(1.0 / c.theta, 1.0);
      for (Eigen::Index j = 0; j < d; ++j)
        u(j) = clamp_unit(std::pow(1.0 + rng.exponential(1.0) / v, -1.0 / c.theta));
      break;
    }
    case CopulaFamily::kGumbel: {
      const double alpha = 1.0 / c.theta;
      const double v = positive_stable(alpha, rng);
      for (Eigen::Index j = 0; j < d; ++j)
        u(j) = clamp_unit(std::exp(-std::pow(rng.exponential(1.0) / v, alpha)));
      break;
    }
    case CopulaFamily::kFrank: {
      const double th = c.theta;
      if (d == 2) {
        const double u1 = rng.uniform();
        const double w = rng.uniform();
        const double num = w * std::expm1(-th);
        const double den = w + (1.0 - w) * std::exp(-th * u1);
        u(0) = u1;
        u(1) = clamp_unit(-std::log1p(num / den) / th);
      } else {
        const double v = logarithmic_series(-std::expm1(-th), rng);
        for (Eigen::Index j = 0; j < d; ++j) {
          const double s = rng.exponential(1.0) / v;
          u(j) = clamp_unit(-std::log1p(std::expm1(-th) * std::exp(-s)) / th);
        }
      }
      break;
    }
  }
  return u;
}

double copula_logpdf(const CopulaSpec& c, const Eigen::VectorXd& uin) {
  const Eigen::Index d = uin.size();
  Eigen::VectorXd u = uin.unaryExpr([](double x) { return std::clamp(x, 1e-15, 1.0 - 1e-15); });
  switch (c.family) {
    case CopulaFamily::kIndependence: return 0.0;
    case CopulaFamily::kGaussian: {
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = num::normal_quantile(u(j));
      Eigen::LLT<Eigen::MatrixXd> llt(c.correlation);
      const Eigen::MatrixXd l = llt.matrixL();
      double logdet = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) logdet += 2.0 * std::log(l(j, j));
      const Eigen::VectorXd y = llt.matrixL().solve(z);
      return -0.5 * logdet - 0.5 * (y.squaredNorm() - z.squaredNorm());
    }
    case CopulaFamily::kClayton: {
      const double th = c.theta;
      double s = 0.0, slog = 0.0, lead = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        s += std::pow(u(j), -th);
        slog += std::log(u(j));
        lead += std::log1p(j * th);
      }
      return lead - (1.0 + th) * slog - (static_cast<double>(d) + 1.0 / th) * std::log(s - d + 1.0);
    }
    case CopulaFamily::kGumbel: {
      require(d == 2, "gumbel copula density implemented for p = 2");
      const double th = c.theta;
      const double x = -std::log(u(0)), y = -std::log(u(1));
      const double s = std::pow(x, th) + std::pow(y, th);
      const double a = std::pow(s, 1.0 / th);
      return -a - std::log(u(0)) - std::log(u(1)) + (th - 1.0) * (std::log(x) + std::log(y)) -
             (2.0 - 1.0 / th) * std::log(s) + std::log(a + th - 1.0);
    }
    case CopulaFamily::kFrank: {
      require(d == 2, "frank copula density implemented for p = 2");
      const double th = c.theta;
      const double em = -std::expm1(-th);  // 1 - e^{-theta}
      const double den = em - (-std::expm1(-th * u(0))) * (-std::expm1(-th * u(1)));
      return std::log(std::abs(th * em)) - th * (u(0) + u(1)) - 2.0 * std::log(std::abs(den));
    }
  }
  return 0.0;
}

namespace {
// Debye function D1(x) = (1/x) int_0^x t/(e^t - 1) dt, by Simpson's rule.
double debye1(double x) {
  if (x == 0.0) return 1.0;
  const int n = 2000;
  const double h = x / n;
  auto f = [](double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); };
  double s = f(0.0) + f(x);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0 / x;
}
}  // namespace

double kendall_tau_of(const CopulaSpec& c) {
  switch (c.family) {
    case CopulaFamily::kIndependence: return 0.0;
    case CopulaFamily::kGaussian: return 2.0 / num::kPi * std::asin(c.correlation(0, 1));
    case CopulaFamily::kClayton: return c.theta / (c.theta + 2.0);
    case CopulaFamily::kGumbel: return 1.0 - 1.0 / c.theta;
    case CopulaFamily::kFrank: return 1.0 - 4.0 / c.theta * (1.0 - debye1(c.theta));
  }
  return 0.0;
}

std::string to_string(MarginalKind k) {
  switch (k) {
    case MarginalKind::kLognormal: return "lognormal";
    case MarginalKind::kWeibull: return "weibull";
    case MarginalKind::kGamma: return "gamma";
    case MarginalKind::kDegenerate: return "degenerate";
  }
  return "?";
}

MarginalKind marginal_kind_from_string(const std::string& s) {
  if (s == "lognormal") return MarginalKind::kLognormal;
  if (s == "weibull") return MarginalKind::kWeibull;
  if (s == "gamma") return MarginalKind::kGamma;
  if (s == "degenerate") return MarginalKind::kDegenerate;
  throw InputError("unknown marginal '" + s + "'");
}

void Marginal::validate() const {
  switch (kind) {
    case MarginalKind::kLognormal: require(b > 0.0, "lognormal marginal: sd must be > 0"); break;
    case MarginalKind::kWeibull:
    case MarginalKind::kGamma: require(a > 0.0 && b > 0.0, to_string(kind) + " marginal: parameters must be > 0"); break;
    case MarginalKind::kDegenerate: break;
  }
}

double Marginal::cdf(double x) const {
  switch (kind) {
    case MarginalKind::kLognormal: return x <= 0.0 ? 0.0 : num::normal_cdf((std::log(x) - a) / b);
    case MarginalKind::kWeibull: return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / b, a));
    case MarginalKind::kGamma: return x <= 0.0 ? 0.0 : boost::math::gamma_p(a, x / b);
    case MarginalKind::kDegenerate: return x < a ? 0.0 : 1.0;
  }
  return 0.0;
}

double Marginal::quantile(double u) const {
  switch (kind) {
    case MarginalKind::kLognormal: return std::exp(a + b * num::normal_quantile(u));
    case MarginalKind::kWeibull: return b * std::pow(-std::log1p(-u), 1.0 / a);
    case MarginalKind::kGamma: return b * boost::math::gamma_p_inv(a, u);
    case MarginalKind::kDegenerate: return a;
  }
  return 0.0;
}

double Marginal::logpdf(double x) const {
  switch (kind) {
    case MarginalKind::kLognormal: {
      if (x <= 0.0) return -INFINITY;
      const double z = (std::log(x) - a) / b;
      return -0.5 * z * z - num::kLogSqrt2Pi - std::log(b) - std::log(x);
    }
    case MarginalKind::kWeibull:
      if (x <= 0.0) return -INFINITY;
      return std::log(a / b) + (a - 1.0) * std::log(x / b) - std::pow(x / b, a);
    case MarginalKind::kGamma:
      if (x <= 0.0) return -INFINITY;
      return (a - 1.0) * std::log(x) - x / b - std::lgamma(a) - a * std::log(b);
    case MarginalKind::kDegenerate: return x == a ? 0.0 : -INFINITY;
  }
  return 0.0;
}

double Marginal::mean() const {
  switch (kind) {
    case MarginalKind::kLognormal: return std::exp(a + 0.5 * b * b);
    case MarginalKind::kWeibull: return b * std::tgamma(1.0 + 1.0 / a);
    case MarginalKind::kGamma: return a * b;
    case MarginalKind::kDegenerate: return a;
  }
  return 0.0;
}

}  // namespace degkit
