#pragma once

#include <cstdint>
#include <optional>
#include <vector>

namespace wderiv::gev {

// Shape values with |xi| below this are evaluated on the Gumbel branch.
// Avoids catastrophic cancellation in (1 + xi*a)^(-1/xi) near xi = 0.
inline constexpr double kGumbelSwitch = 1e-8;

struct GevParams {
  double mu = 0.0;     // location, units of the underlying variable
  double sigma = 1.0;  // scale, > 0, same units
  double xi = 0.0;     // shape, dimensionless

  // Throws std::domain_error unless finite with sigma > 0.
  void validate() const;
  // Finite support endpoint mu - sigma/xi: an upper bound for xi < 0, a
  // lower bound for xi > 0. Unset on the Gumbel branch.
  std::optional<double> support_bound() const;
  bool in_support(double y) const;
};

struct TrendSpec {
  bool enabled = false;
};

// Annual block maximum with its calendar year (the trend covariate).
struct YearValue {
  double year = 0.0;
  double value = 0.0;
};

// Maximum-likelihood fit of a GEV, optionally with a linear trend on the
// location: mu(t) = mu1 + mu2 * (year - year_center). The centering constant
// is the mean observation year of the fitting sample and is stored so
// prediction years are coded consistently.
struct FittedGev {
  double mu1 = 0.0;
  double mu2 = 0.0;  // per-year slope; 0 when the trend is disabled
  double sigma = 1.0;
  double xi = 0.0;

  double se_mu1 = 0.0;
  double se_mu2 = 0.0;
  double se_sigma = 0.0;
  double se_xi = 0.0;

  double log_likelihood = 0.0;
  std::size_t sample_size = 0;
  bool trend = false;
  double year_center = 0.0;
  bool converged = false;
  int iterations = 0;

  // Marginal parameters for a given calendar year (identity when no trend).
  GevParams params_at(double year) const;
  // Parameters at the centering year; the natural choice for untrended fits.
  GevParams params() const { return {mu1, sigma, xi}; }
};

struct FitOptions {
  std::size_t min_sample = 20;
  int max_iterations = 5000;
};

double gev_cdf(double m, const GevParams& p);
double gev_pdf(double m, const GevParams& p);
double gev_quantile(double prob, const GevParams& p);

// Inverse-CDF sampling from a seeded uniform stream; deterministic per seed.
std::vector<double> gev_sample(const GevParams& p, std::size_t n,
                               std::uint64_t seed);

// Fits by derivative-free simplex search on the negative log-likelihood in
// (mu1[, mu2], log sigma, xi). Standard errors come from the inverse
// finite-difference Hessian at the optimum, in the natural parameters.
FittedGev fit_gev(const std::vector<YearValue>& maxima, const TrendSpec& trend,
                  const FitOptions& options = {});

// U = (1 + xi (y - mu)/sigma)^(1/xi), unit-Frechet distributed when Y ~ GEV.
double to_unit_frechet(double y, const GevParams& p);
// Exact inverse: y = mu + sigma (u^xi - 1)/xi.
double from_unit_frechet(double u, const GevParams& p);

// Level exceeded once per `period_years` on average: quantile(1 - 1/T).
double return_level(const GevParams& p, double period_years);

}  // namespace wderiv::gev
