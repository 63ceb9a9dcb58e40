#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wderiv/gev.hpp"
#include "wderiv/rng.hpp"

namespace wderiv::spatial {

enum class CorrelationFamily { whittle_matern, cauchy, powered_exponential };

std::string family_name(CorrelationFamily family);
CorrelationFamily family_from_name(const std::string& name);

// Isotropic correlation of the underlying Gaussian process. The nugget is
// fixed at 1, so rho(0) = 1 for every family.
struct CorrelationModel {
  CorrelationFamily family = CorrelationFamily::whittle_matern;
  double c2 = 1.0;  // range, > 0, in the distance unit of the site coordinates
  double nu = 1.0;  // smooth, > 0; powered-exponential requires nu <= 2

  void validate() const;
};

double correlation(const CorrelationModel& model, double h);

// Pairwise dependence summary in [1, 2]: 1 is complete dependence at
// separation h, 2 is independence.
double extremal_coefficient(const CorrelationModel& model, double h);

struct Site {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

// Planar coordinates in a common distance unit; distances are Euclidean.
// Longitude/latitude are not projected here, callers supply consistent
// coordinates.
struct SiteSet {
  std::vector<Site> sites;

  std::size_t size() const { return sites.size(); }
  double distance(std::size_t i, std::size_t j) const;
  void validate() const;
};

enum class Scale { unit_frechet, native };

// I simulated events by K sites.
struct EventMatrix {
  std::size_t n_events = 0;
  std::size_t n_sites = 0;
  std::vector<double> values;  // row-major, n_events * n_sites
  Scale scale = Scale::unit_frechet;
  std::vector<std::string> site_labels;
  std::uint64_t seed = 0;

  double at(std::size_t event, std::size_t site) const {
    return values[event * n_sites + site];
  }
  double& at(std::size_t event, std::size_t site) {
    return values[event * n_sites + site];
  }
};

// Header line of site labels, one row per event.
void write_csv(const EventMatrix& events, std::ostream& os);

// Bivariate distribution function of the Schlather process on the
// unit-Frechet scale, at correlation rho of the underlying Gaussian pair.
double schlather_bivariate_cdf(double z1, double z2, double rho);

// d2F/dz1 dz2 in closed form. log variant returns a large negative sentinel
// where the density underflows; the composite likelihood consumes it.
double schlather_bivariate_pdf(double z1, double z2, double rho);
double schlather_bivariate_logpdf(double z1, double z2, double rho);

// Zero-mean unit-variance Gaussian vector with covariance rho(|xi - xj|).
// The covariance factorization is done once at construction: exact duplicate
// sites share a factor dimension, and near-singular matrices get escalating
// diagonal jitter (1e-10 up to 1e-6) before failing.
class GaussianFieldSampler {
 public:
  GaussianFieldSampler(const SiteSet& sites, const CorrelationModel& model);

  void draw(Rng& rng, std::vector<double>& out) const;
  std::size_t size() const { return site_of_unique_.size(); }

 private:
  Eigen::MatrixXd factor_;               // lower-triangular, unique sites
  std::vector<std::size_t> site_of_unique_;  // site index -> unique index
  mutable std::vector<double> scratch_;
};

std::vector<double> gaussian_field_sample(const SiteSet& sites,
                                          const CorrelationModel& model,
                                          std::uint64_t seed);

struct SimulateOptions {
  // Assumed bound on max(0, Y) in the stopping rule; the Gaussian field is
  // unbounded, so the simulator is approximate.
  double truncation = 3.5;
  std::size_t max_spectral_points = 10000;
};

// Approximate realizations of the Schlather max-stable process with
// unit-Frechet margins: Z(x) = max_i w_i max(0, Y_i(x)) over spectral points
// w_i = 1/(delta * Gamma_i), Gamma_i a unit-exponential running sum, each
// paired with an independent Gaussian field. Event i draws from a child seed
// of (seed, i), so results do not depend on evaluation order.
EventMatrix simulate_schlather(const SiteSet& sites,
                               const CorrelationModel& model,
                               std::size_t n_events, std::uint64_t seed,
                               const SimulateOptions& options = {});

// Columnwise from_unit_frechet using each site's fitted margin, with the
// location evaluated at prediction_year for trended margins.
EventMatrix to_native_scale(const EventMatrix& events,
                            const std::vector<gev::FittedGev>& margins,
                            std::optional<double> prediction_year = {});

}  // namespace wderiv::spatial
