#include "wderiv/gev.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "wderiv/errors.hpp"
#include "wderiv/rng.hpp"
#include "wderiv/simplex.hpp"

namespace wderiv::gev {

namespace {

constexpr double kEulerMascheroni = 0.5772156649015329;
constexpr double kRejected = 1e300;  // NLL sentinel for out-of-support points

}  // namespace

void GevParams::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(xi) ||
      sigma <= 0.0)
    throw std::domain_error("GevParams: require finite parameters, sigma > 0");
}

std::optional<double> GevParams::support_bound() const {
  if (std::abs(xi) < kGumbelSwitch) return std::nullopt;
  return mu - sigma / xi;
}

bool GevParams::in_support(double y) const {
  if (std::abs(xi) < kGumbelSwitch) return true;
  return 1.0 + xi * (y - mu) / sigma > 0.0;
}

GevParams FittedGev::params_at(double year) const {
  const double mu =
      trend ? mu1 + mu2 * (year - year_center) : mu1;
  return {mu, sigma, xi};
}

double gev_cdf(double m, const GevParams& p) {
  p.validate();
  if (!std::isfinite(m)) throw std::domain_error("gev_cdf: non-finite input");
  const double a = (m - p.mu) / p.sigma;
  if (std::abs(p.xi) < kGumbelSwitch) return std::exp(-std::exp(-a));
  const double w = 1.0 + p.xi * a;
  if (w <= 0.0) return p.xi > 0.0 ? 0.0 : 1.0;
  // w^(-1/xi) = exp(-log1p(xi*a)/xi)
  return std::exp(-std::exp(-std::log1p(p.xi * a) / p.xi));
}

double gev_pdf(double m, const GevParams& p) {
  p.validate();
  if (!std::isfinite(m)) throw std::domain_error("gev_pdf: non-finite input");
  const double a = (m - p.mu) / p.sigma;
  if (std::abs(p.xi) < kGumbelSwitch) {
    const double e = std::exp(-a);
    return e * std::exp(-e) / p.sigma;
  }
  const double w = 1.0 + p.xi * a;
  if (w <= 0.0) return 0.0;
  const double t = std::exp(-std::log1p(p.xi * a) / p.xi);  // w^(-1/xi)
  return t / w * std::exp(-t) / p.sigma;
}

double gev_quantile(double prob, const GevParams& p) {
  p.validate();
  if (!(prob > 0.0 && prob < 1.0))
    throw std::domain_error("gev_quantile: probability must be in (0, 1)");
  const double w = std::log(-std::log(prob));
  if (std::abs(p.xi) < kGumbelSwitch) return p.mu - p.sigma * w;
  // ((-log p)^(-xi) - 1)/xi, written with expm1 for small xi.
  return p.mu + p.sigma * std::expm1(-p.xi * w) / p.xi;
}

std::vector<double> gev_sample(const GevParams& p, std::size_t n,
                               std::uint64_t seed) {
  p.validate();
  if (n == 0) throw std::invalid_argument("gev_sample: need n >= 1");
  Rng rng(seed);
  std::vector<double> out(n);
  for (double& v : out) v = gev_quantile(rng.uniform(), p);
  return out;
}

double to_unit_frechet(double y, const GevParams& p) {
  p.validate();
  const double a = (y - p.mu) / p.sigma;
  if (std::abs(p.xi) < kGumbelSwitch) return std::exp(a);
  const double w = 1.0 + p.xi * a;
  if (w <= 0.0)
    throw std::domain_error("to_unit_frechet: value outside support");
  return std::exp(std::log1p(p.xi * a) / p.xi);  // w^(1/xi)
}

double from_unit_frechet(double u, const GevParams& p) {
  p.validate();
  if (!(u > 0.0)) throw std::domain_error("from_unit_frechet: require u > 0");
  const double lu = std::log(u);
  if (std::abs(p.xi) < kGumbelSwitch) return p.mu + p.sigma * lu;
  return p.mu + p.sigma * std::expm1(p.xi * lu) / p.xi;
}

double return_level(const GevParams& p, double period_years) {
  if (!(period_years > 1.0))
    throw std::domain_error("return_level: period must exceed 1 year");
  return gev_quantile(1.0 - 1.0 / period_years, p);
}

namespace {

// Negative log-likelihood in natural parameters (mu1[, mu2], sigma, xi).
// Observations outside the candidate support reject the whole point.
double negative_log_likelihood(const std::vector<YearValue>& maxima,
                               double year_center, bool trend, double mu1,
                               double mu2, double sigma, double xi) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) return kRejected;
  double nll = 0.0;
  const double log_sigma = std::log(sigma);
  for (const auto& [year, value] : maxima) {
    const double mu = trend ? mu1 + mu2 * (year - year_center) : mu1;
    const double a = (value - mu) / sigma;
    if (std::abs(xi) < kGumbelSwitch) {
      nll += log_sigma + a + std::exp(-a);
      continue;
    }
    const double w = 1.0 + xi * a;
    if (w <= 0.0) return kRejected;
    const double log_w = std::log1p(xi * a);
    nll += log_sigma + (1.0 + 1.0 / xi) * log_w + std::exp(-log_w / xi);
  }
  return std::isfinite(nll) ? nll : kRejected;
}

// Inverse of a symmetric matrix via Gauss-Jordan with partial pivoting.
// Small fixed sizes (3 or 4) only.
bool invert_in_place(std::vector<std::vector<double>>& m) {
  const std::size_t n = m.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    if (std::abs(m[pivot][col]) < 1e-300) return false;
    std::swap(m[pivot], m[col]);
    std::swap(inv[pivot], inv[col]);
    const double d = m[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      m[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = m[r][col];
      if (factor == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m[r][j] -= factor * m[col][j];
        inv[r][j] -= factor * inv[col][j];
      }
    }
  }
  m = std::move(inv);
  return true;
}

}  // namespace

FittedGev fit_gev(const std::vector<YearValue>& maxima, const TrendSpec& trend,
                  const FitOptions& options) {
  if (maxima.size() < options.min_sample)
    throw FitError("fit_gev: need at least " +
                   std::to_string(options.min_sample) + " block maxima, got " +
                   std::to_string(maxima.size()));
  const double first = maxima.front().value;
  const bool constant = std::all_of(
      maxima.begin(), maxima.end(),
      [&](const YearValue& yv) { return yv.value == first; });
  if (constant) throw FitError("fit_gev: all block maxima are equal");

  const std::size_t n = maxima.size();
  double year_sum = 0.0, value_sum = 0.0;
  for (const auto& yv : maxima) {
    year_sum += yv.year;
    value_sum += yv.value;
  }
  const double year_center = year_sum / static_cast<double>(n);
  const double mean = value_sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& yv : maxima) ss += (yv.value - mean) * (yv.value - mean);
  const double variance = ss / static_cast<double>(n);

  // Moment-matching start from the Gumbel relations.
  const double sigma0 = std::sqrt(6.0 * variance) / 3.14159265358979323846;
  const double mu0 = mean - kEulerMascheroni * sigma0;

  // Optimize in (mu1[, mu2], log sigma, xi); log scale keeps sigma positive.
  const bool with_trend = trend.enabled;
  std::vector<double> x0 =
      with_trend ? std::vector<double>{mu0, 0.0, std::log(sigma0), 0.1}
                 : std::vector<double>{mu0, std::log(sigma0), 0.1};
  auto unpack = [with_trend](const std::vector<double>& x) {
    struct {
      double mu1, mu2, sigma, xi;
    } t{};
    t.mu1 = x[0];
    t.mu2 = with_trend ? x[1] : 0.0;
    t.sigma = std::exp(x[with_trend ? 2 : 1]);
    t.xi = x[with_trend ? 3 : 2];
    return t;
  };
  auto objective = [&](const std::vector<double>& x) {
    const auto t = unpack(x);
    return negative_log_likelihood(maxima, year_center, with_trend, t.mu1,
                                   t.mu2, t.sigma, t.xi);
  };

  SimplexOptions so;
  so.max_iterations = options.max_iterations;
  const SimplexResult sr = nelder_mead(objective, x0, so);
  if (sr.value >= kRejected || !std::isfinite(sr.value))
    throw FitError("fit_gev: optimizer found no finite log-likelihood", sr.x,
                   sr.value);

  const auto t = unpack(sr.x);
  FittedGev fit;
  fit.mu1 = t.mu1;
  fit.mu2 = t.mu2;
  fit.sigma = t.sigma;
  fit.xi = t.xi;
  fit.log_likelihood = -sr.value;
  fit.sample_size = n;
  fit.trend = with_trend;
  fit.year_center = year_center;
  fit.converged = sr.converged;
  fit.iterations = sr.iterations;

  // Standard errors: inverse central-difference Hessian of the NLL in the
  // natural parameters, step 1e-4 * max(1, |theta_i|).
  const std::size_t dim = with_trend ? 4 : 3;
  std::vector<double> theta =
      with_trend ? std::vector<double>{t.mu1, t.mu2, t.sigma, t.xi}
                 : std::vector<double>{t.mu1, t.sigma, t.xi};
  auto nll_at = [&](const std::vector<double>& th) {
    const double mu2 = with_trend ? th[1] : 0.0;
    const double sigma = th[with_trend ? 2 : 1];
    const double xi = th[with_trend ? 3 : 2];
    return negative_log_likelihood(maxima, year_center, with_trend, th[0],
                                   mu2, sigma, xi);
  };
  std::vector<double> h(dim);
  for (std::size_t i = 0; i < dim; ++i)
    h[i] = 1e-4 * std::max(1.0, std::abs(theta[i]));
  std::vector<std::vector<double>> hess(dim, std::vector<double>(dim, 0.0));
  const double f0 = nll_at(theta);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i; j < dim; ++j) {
      double v;
      std::vector<double> th = theta;
      if (i == j) {
        th[i] = theta[i] + h[i];
        const double fp = nll_at(th);
        th[i] = theta[i] - h[i];
        const double fm = nll_at(th);
        v = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
      } else {
        th[i] = theta[i] + h[i];
        th[j] = theta[j] + h[j];
        const double fpp = nll_at(th);
        th[j] = theta[j] - h[j];
        const double fpm = nll_at(th);
        th[i] = theta[i] - h[i];
        th[j] = theta[j] + h[j];
        const double fmp = nll_at(th);
        th[j] = theta[j] - h[j];
        const double fmm = nll_at(th);
        v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
      }
      hess[i][j] = hess[j][i] = v;
    }
  }
  std::vector<std::vector<double>> cov = hess;
  if (!invert_in_place(cov))
    throw NumericalError("fit_gev: singular Hessian, no standard errors");
  std::vector<double> se(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (cov[i][i] < 0.0)
      throw NumericalError(
          "fit_gev: Hessian not positive definite at the optimum");
    se[i] = std::sqrt(cov[i][i]);
  }
  fit.se_mu1 = se[0];
  fit.se_mu2 = with_trend ? se[1] : 0.0;
  fit.se_sigma = se[with_trend ? 2 : 1];
  fit.se_xi = se[with_trend ? 3 : 2];
  return fit;
}

}  // namespace wderiv::gev
