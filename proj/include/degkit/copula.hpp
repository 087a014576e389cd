#pragma once

#include "degkit/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace degkit {

enum class CopulaFamily { kIndependence, kGaussian, kClayton, kGumbel, kFrank };

std::string to_string(CopulaFamily f);
CopulaFamily copula_family_from_string(const std::string& s);

/// Copula family and parameters. Gaussian uses `correlation`; the
/// Archimedean families use the scalar `theta`.
struct CopulaSpec {
  CopulaFamily family = CopulaFamily::kIndependence;
  Eigen::MatrixXd correlation;  // p x p, gaussian only
  double theta = 0.0;

  void validate(std::size_t p) const;

  static CopulaSpec independence() { return {}; }
  static CopulaSpec gaussian(Eigen::MatrixXd r) { return {CopulaFamily::kGaussian, std::move(r), 0.0}; }
  /// Two-dimensional Gaussian copula with correlation rho.
  static CopulaSpec gaussian2(double rho);
  static CopulaSpec archimedean(CopulaFamily f, double theta) { return {f, {}, theta}; }
};

/// One draw u in (0,1)^p. Archimedean families use the Marshall-Olkin
/// frailty construction; Frank with theta < 0 is only defined for p = 2
/// and is sampled by conditional inversion.
Eigen::VectorXd sample_copula(const CopulaSpec& c, std::size_t p, Rng& rng);

/// log copula density at u. Gaussian and Clayton support any p; Gumbel and
/// Frank are implemented for p = 2.
double copula_logpdf(const CopulaSpec& c, const Eigen::VectorXd& u);

/// Population Kendall's tau for a bivariate member of the family.
double kendall_tau_of(const CopulaSpec& c);

enum class MarginalKind { kLognormal, kWeibull, kGamma, kDegenerate };

std::string to_string(MarginalKind k);
MarginalKind marginal_kind_from_string(const std::string& s);

/// Distribution of one random-effect component. Parameters:
/// lognormal (a = log-mean, b = log-sd), weibull (a = shape, b = scale),
/// gamma (a = shape, b = scale), degenerate (a = the point value).
struct Marginal {
  MarginalKind kind = MarginalKind::kLognormal;
  double a = 0.0;
  double b = 1.0;

  void validate() const;
  double cdf(double x) const;
  double quantile(double u) const;
  double logpdf(double x) const;
  double mean() const;
};

}  // namespace degkit
