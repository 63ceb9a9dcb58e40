#include "wderiv/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include <Eigen/Cholesky>

#include "wderiv/errors.hpp"

namespace wderiv::spatial {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// E max(0, Y) for standard normal Y; normalizes the spectral representation.
const double kDelta = 1.0 / std::sqrt(2.0 * std::numbers::pi);

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

std::string family_name(CorrelationFamily family) {
  switch (family) {
    case CorrelationFamily::whittle_matern:
      return "whittle_matern";
    case CorrelationFamily::cauchy:
      return "cauchy";
    case CorrelationFamily::powered_exponential:
      return "powered_exponential";
  }
  throw ConfigError("unknown correlation family");
}

CorrelationFamily family_from_name(const std::string& name) {
  if (name == "whittle_matern") return CorrelationFamily::whittle_matern;
  if (name == "cauchy") return CorrelationFamily::cauchy;
  if (name == "powered_exponential")
    return CorrelationFamily::powered_exponential;
  throw ConfigError("unknown correlation family: " + name);
}

void CorrelationModel::validate() const {
  if (!(c2 > 0.0) || !std::isfinite(c2))
    throw ConfigError("correlation range must be positive");
  if (!(nu > 0.0) || !std::isfinite(nu))
    throw ConfigError("correlation smoothness must be positive");
  if (family == CorrelationFamily::powered_exponential && nu > 2.0)
    throw ConfigError("powered-exponential smoothness must be in (0, 2]");
}

double correlation(const CorrelationModel& model, double h) {
  if (h < 0.0 || !std::isfinite(h))
    throw ConfigError("distance must be finite and nonnegative");
  const double x = h / model.c2;
  switch (model.family) {
    case CorrelationFamily::whittle_matern: {
      // x^nu K_nu(x) is 0 * inf at the origin; the limit is 1.
      if (x < 1e-10) return 1.0;
      const double k = std::cyl_bessel_k(model.nu, x);
      if (k == 0.0) return 0.0;
      return std::pow(2.0, 1.0 - model.nu) / std::tgamma(model.nu) *
             std::pow(x, model.nu) * k;
    }
    case CorrelationFamily::cauchy:
      return std::pow(1.0 + x * x, -model.nu);
    case CorrelationFamily::powered_exponential:
      return std::exp(-std::pow(x, model.nu));
  }
  throw ConfigError("unknown correlation family");
}

double extremal_coefficient(const CorrelationModel& model, double h) {
  const double rho = correlation(model, h);
  return 1.0 + std::sqrt(0.5 * (1.0 - rho));
}

double SiteSet::distance(std::size_t i, std::size_t j) const {
  const double dx = sites[i].x - sites[j].x;
  const double dy = sites[i].y - sites[j].y;
  return std::hypot(dx, dy);
}

void SiteSet::validate() const {
  if (sites.empty()) throw ConfigError("site set is empty");
  for (const Site& s : sites) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y))
      throw ConfigError("site coordinates must be finite");
  }
}

void write_csv(const EventMatrix& events, std::ostream& os) {
  std::string line;
  for (std::size_t k = 0; k < events.n_sites; ++k) {
    if (k > 0) line += ',';
    line += k < events.site_labels.size() ? events.site_labels[k]
                                          : "site" + std::to_string(k + 1);
  }
  line += '\n';
  os << line;
  for (std::size_t i = 0; i < events.n_events; ++i) {
    line.clear();
    for (std::size_t k = 0; k < events.n_sites; ++k) {
      if (k > 0) line += ',';
      append_number(line, events.at(i, k));
    }
    line += '\n';
    os << line;
  }
}

namespace {

struct PairTerms {
  double V;
  double V1;
  double V2;
  double V12;
};

// V(z1, z2) = (1/2)(1/z1 + 1/z2)(1 + r) with
// r = sqrt(1 - 2(rho + 1) z1 z2 / (z1 + z2)^2), plus its partials.
PairTerms exponent_terms(double z1, double z2, double rho) {
  const double s = z1 + z2;
  const double p = z1 * z2;
  const double c = 2.0 * (rho + 1.0);
  const double r2 = std::max(0.0, 1.0 - c * p / (s * s));
  const double r = std::sqrt(r2);

  const double A = 0.5 * (1.0 / z1 + 1.0 / z2);
  const double A1 = -0.5 / (z1 * z1);
  const double A2 = -0.5 / (z2 * z2);

  const double s3 = s * s * s;
  const double Q1 = -c * z2 * (z2 - z1) / s3;
  const double Q2 = -c * z1 * (z1 - z2) / s3;
  const double Q12 = c * (z1 * z1 + z2 * z2 - 4.0 * p) / (s3 * s);

  const double r1 = Q1 / (2.0 * r);
  const double rr2 = Q2 / (2.0 * r);
  const double r12 = Q12 / (2.0 * r) - Q1 * Q2 / (4.0 * r2 * r);

  PairTerms t;
  t.V = A * (1.0 + r);
  t.V1 = A1 * (1.0 + r) + A * r1;
  t.V2 = A2 * (1.0 + r) + A * rr2;
  t.V12 = A1 * rr2 + A2 * r1 + A * r12;
  return t;
}

void check_rho(double rho) {
  if (!(rho >= -1.0 && rho <= 1.0))
    throw ConfigError("correlation must lie in [-1, 1]");
}

}  // namespace

double schlather_bivariate_cdf(double z1, double z2, double rho) {
  check_rho(rho);
  if (!(z1 > 0.0) || !(z2 > 0.0)) return 0.0;
  const double s = z1 + z2;
  const double r2 =
      std::max(0.0, 1.0 - 2.0 * (rho + 1.0) * z1 * z2 / (s * s));
  const double V = 0.5 * (1.0 / z1 + 1.0 / z2) * (1.0 + std::sqrt(r2));
  return std::exp(-V);
}

double schlather_bivariate_logpdf(double z1, double z2, double rho) {
  check_rho(rho);
  if (!(z1 > 0.0) || !(z2 > 0.0)) return kNegInf;
  if (rho >= 1.0) return kNegInf;
  const PairTerms t = exponent_terms(z1, z2, rho);
  const double q = t.V1 * t.V2 - t.V12;
  if (!(q > 0.0) || !std::isfinite(q) || !std::isfinite(t.V)) return kNegInf;
  return -t.V + std::log(q);
}

double schlather_bivariate_pdf(double z1, double z2, double rho) {
  const double lp = schlather_bivariate_logpdf(z1, z2, rho);
  return std::isfinite(lp) ? std::exp(lp) : 0.0;
}

GaussianFieldSampler::GaussianFieldSampler(const SiteSet& sites,
                                           const CorrelationModel& model) {
  sites.validate();
  model.validate();
  const std::size_t n = sites.size();

  // Coincident sites would make the covariance exactly singular; give them
  // one factor dimension so they always receive identical draws.
  std::vector<std::size_t> unique_index;
  site_of_unique_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t u = unique_index.size();
    for (std::size_t k = 0; k < unique_index.size(); ++k) {
      const Site& a = sites.sites[unique_index[k]];
      if (a.x == sites.sites[i].x && a.y == sites.sites[i].y) {
        u = k;
        break;
      }
    }
    if (u == unique_index.size()) unique_index.push_back(i);
    site_of_unique_[i] = u;
  }

  const std::size_t m = unique_index.size();
  Eigen::MatrixXd cov(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    cov(i, i) = 1.0;
    for (std::size_t j = i + 1; j < m; ++j) {
      const double rho =
          correlation(model, sites.distance(unique_index[i], unique_index[j]));
      cov(i, j) = rho;
      cov(j, i) = rho;
    }
  }

  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd work = cov;
    if (jitter > 0.0)
      work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      break;
    }
    if (jitter == 0.0) {
      jitter = 1e-10;
    } else if (jitter < 1e-6) {
      jitter *= 10.0;
    } else {
      throw NumericalError(
          "correlation matrix is not positive definite even with jitter");
    }
  }
  scratch_.resize(m);
}

void GaussianFieldSampler::draw(Rng& rng, std::vector<double>& out) const {
  const std::size_t m = static_cast<std::size_t>(factor_.rows());
  for (std::size_t i = 0; i < m; ++i) scratch_[i] = rng.normal();
  out.resize(site_of_unique_.size());
  for (std::size_t i = 0; i < site_of_unique_.size(); ++i) out[i] = 0.0;
  for (std::size_t i = 0; i < site_of_unique_.size(); ++i) {
    const std::size_t u = site_of_unique_[i];
    double acc = 0.0;
    for (std::size_t j = 0; j <= u; ++j) acc += factor_(u, j) * scratch_[j];
    out[i] = acc;
  }
}

std::vector<double> gaussian_field_sample(const SiteSet& sites,
                                          const CorrelationModel& model,
                                          std::uint64_t seed) {
  GaussianFieldSampler sampler(sites, model);
  Rng rng(seed);
  std::vector<double> out;
  sampler.draw(rng, out);
  return out;
}

EventMatrix simulate_schlather(const SiteSet& sites,
                               const CorrelationModel& model,
                               std::size_t n_events, std::uint64_t seed,
                               const SimulateOptions& options) {
  if (n_events == 0) throw ConfigError("event count must be positive");
  GaussianFieldSampler sampler(sites, model);
  const std::size_t n_sites = sites.size();

  EventMatrix out;
  out.n_events = n_events;
  out.n_sites = n_sites;
  out.scale = Scale::unit_frechet;
  out.seed = seed;
  out.values.assign(n_events * n_sites, 0.0);
  out.site_labels.reserve(n_sites);
  for (std::size_t k = 0; k < n_sites; ++k) {
    out.site_labels.push_back(sites.sites[k].label.empty()
                                  ? "site" + std::to_string(k + 1)
                                  : sites.sites[k].label);
  }

  std::vector<double> field;
  for (std::size_t i = 0; i < n_events; ++i) {
    Rng rng(child_seed(seed, i));
    double* z = &out.values[i * n_sites];
    double gamma = 0.0;
    for (std::size_t j = 0; j < options.max_spectral_points; ++j) {
      gamma += rng.exponential();
      const double w = 1.0 / (kDelta * gamma);
      sampler.draw(rng, field);
      double zmin = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n_sites; ++k) {
        z[k] = std::max(z[k], w * std::max(0.0, field[k]));
        zmin = std::min(zmin, z[k]);
      }
      // Later points have smaller w; once w * truncation cannot beat the
      // running maximum anywhere the realization is final.
      if (w * options.truncation < zmin) break;
    }
  }
  return out;
}

EventMatrix to_native_scale(const EventMatrix& events,
                            const std::vector<gev::FittedGev>& margins,
                            std::optional<double> prediction_year) {
  if (events.scale != Scale::unit_frechet)
    throw ConfigError("events are already on the native scale");
  if (margins.size() != events.n_sites)
    throw ConfigError("need one fitted margin per site");

  std::vector<gev::GevParams> params(margins.size());
  for (std::size_t k = 0; k < margins.size(); ++k) {
    if (margins[k].trend) {
      if (!prediction_year)
        throw ConfigError(
            "trended margins need a prediction year to fix the location");
      params[k] = margins[k].params_at(*prediction_year);
    } else {
      params[k] = margins[k].params();
    }
  }

  EventMatrix out = events;
  out.scale = Scale::native;
  for (std::size_t i = 0; i < events.n_events; ++i)
    for (std::size_t k = 0; k < events.n_sites; ++k)
      out.at(i, k) = gev::from_unit_frechet(events.at(i, k), params[k]);
  return out;
}

}  // namespace wderiv::spatial
