#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "wderiv/errors.hpp"
#include "wderiv/gev.hpp"
#include "wderiv/rng.hpp"
#include "wderiv/spatial.hpp"

using namespace wderiv;
using namespace wderiv::spatial;
using testutil::mixed_fd;

TEST_CASE("correlation families agree on their shared special case") {
  // Matern with smoothness 1/2 collapses to exp(-h/c2), which is the
  // powered-exponential family at exponent 1.
  const CorrelationModel matern{CorrelationFamily::whittle_matern, 3.0, 0.5};
  const CorrelationModel powexp{CorrelationFamily::powered_exponential, 3.0,
                                1.0};
  for (double h : {0.1, 0.5, 1.0, 3.0, 9.0}) {
    const double expected = std::exp(-h / 3.0);
    CHECK(correlation(matern, h) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(correlation(powexp, h) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("cauchy family closed form") {
  const CorrelationModel m{CorrelationFamily::cauchy, 2.0, 1.5};
  for (double h : {0.0, 0.5, 2.0, 7.0})
    CHECK(correlation(m, h) ==
          doctest::Approx(std::pow(1.0 + (h / 2.0) * (h / 2.0), -1.5))
              .epsilon(1e-14));
}

TEST_CASE("correlations start at one and decay monotonically") {
  const CorrelationModel models[] = {
      {CorrelationFamily::whittle_matern, 2.0, 1.0},
      {CorrelationFamily::cauchy, 2.0, 1.0},
      {CorrelationFamily::powered_exponential, 2.0, 1.5}};
  for (const CorrelationModel& m : models) {
    CHECK(correlation(m, 0.0) == 1.0);
    double prev = 1.0;
    for (double h = 0.25; h < 20.0; h += 0.25) {
      const double r = correlation(m, h);
      CHECK(r > 0.0);
      CHECK(r < prev);
      prev = r;
    }
  }
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(
      CorrelationModel({CorrelationFamily::whittle_matern, 0.0, 1.0})
          .validate(),
      ConfigError);
  CHECK_THROWS_AS(
      CorrelationModel({CorrelationFamily::whittle_matern, 1.0, -1.0})
          .validate(),
      ConfigError);
  CHECK_THROWS_AS(
      CorrelationModel({CorrelationFamily::powered_exponential, 1.0, 2.5})
          .validate(),
      ConfigError);
  CHECK_NOTHROW(
      CorrelationModel({CorrelationFamily::powered_exponential, 1.0, 2.0})
          .validate());
}

TEST_CASE("extremal coefficient tracks the correlation") {
  const CorrelationModel m{CorrelationFamily::whittle_matern, 2.0, 1.0};
  CHECK(extremal_coefficient(m, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  double prev = 1.0;
  for (double h : {0.5, 1.0, 2.0, 5.0, 15.0}) {
    const double theta = extremal_coefficient(m, h);
    const double rho = correlation(m, h);
    CHECK(theta ==
          doctest::Approx(1.0 + std::sqrt((1.0 - rho) / 2.0)).epsilon(1e-12));
    CHECK(theta > prev);
    CHECK(theta < 2.0);
    prev = theta;
  }
}

TEST_CASE("bivariate cdf limits") {
  for (double z1 : {0.4, 1.0, 2.5}) {
    for (double z2 : {0.7, 1.0, 3.0}) {
      // Perfect correlation: comonotone margins.
      CHECK(schlather_bivariate_cdf(z1, z2, 1.0) ==
            doctest::Approx(std::exp(-1.0 / std::min(z1, z2)))
                .epsilon(1e-12));
      // Full negative correlation: the exponent measure factorizes.
      CHECK(schlather_bivariate_cdf(z1, z2, -1.0) ==
            doctest::Approx(std::exp(-1.0 / z1 - 1.0 / z2)).epsilon(1e-12));
    }
  }
  CHECK(schlather_bivariate_cdf(0.0, 1.0, 0.5) == 0.0);
  CHECK(schlather_bivariate_cdf(-1.0, 1.0, 0.5) == 0.0);
}

TEST_CASE("bivariate cdf is max-stable and symmetric") {
  for (double rho : {-0.8, 0.0, 0.6}) {
    for (double t : {2.0, 5.0}) {
      const double f1 = schlather_bivariate_cdf(1.3, 0.8, rho);
      const double ft = schlather_bivariate_cdf(t * 1.3, t * 0.8, rho);
      CHECK(ft == doctest::Approx(std::pow(f1, 1.0 / t)).epsilon(1e-12));
    }
    CHECK(schlather_bivariate_cdf(0.6, 2.1, rho) ==
          doctest::Approx(schlather_bivariate_cdf(2.1, 0.6, rho))
              .epsilon(1e-14));
  }
}

TEST_CASE("diagonal cdf matches the extremal coefficient") {
  const CorrelationModel m{CorrelationFamily::whittle_matern, 2.0, 1.0};
  for (double h : {0.5, 2.0, 6.0}) {
    const double rho = correlation(m, h);
    const double theta = extremal_coefficient(m, h);
    for (double z : {0.5, 1.0, 4.0})
      CHECK(schlather_bivariate_cdf(z, z, rho) ==
            doctest::Approx(std::exp(-theta / z)).epsilon(1e-12));
  }
}

TEST_CASE("bivariate pdf matches finite differences of the cdf") {
  for (double rho : {-0.9, -0.3, 0.0, 0.5, 0.9}) {
    for (double z1 : {0.3, 0.9, 2.0, 4.5}) {
      for (double z2 : {0.5, 1.4, 3.2}) {
        const double f = schlather_bivariate_pdf(z1, z2, rho);
        const double fd = mixed_fd(
            [&](double a, double b) {
              return schlather_bivariate_cdf(a, b, rho);
            },
            z1, z2, 1e-3 * z1, 1e-3 * z2);
        CHECK(f == doctest::Approx(fd).epsilon(2e-6));
        CHECK(std::log(f) ==
              doctest::Approx(schlather_bivariate_logpdf(z1, z2, rho))
                  .epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pdf handles the boundary arguments") {
  CHECK(schlather_bivariate_pdf(0.0, 1.0, 0.2) == 0.0);
  CHECK(schlather_bivariate_logpdf(0.0, 1.0, 0.2) ==
        -std::numeric_limits<double>::infinity());
  CHECK(schlather_bivariate_logpdf(1.0, 1.0, 1.0) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("gaussian field sampler reproduces the correlation") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}, {4.0, 3.0, "c"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 2.0, 1.0};
  GaussianFieldSampler sampler(sites, model);
  Rng rng(31);

  const std::size_t n = 40000;
  std::vector<double> field(3);
  double s11 = 0, s22 = 0, s33 = 0, s12 = 0, s13 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sampler.draw(rng, field);
    s11 += field[0] * field[0];
    s22 += field[1] * field[1];
    s33 += field[2] * field[2];
    s12 += field[0] * field[1];
    s13 += field[0] * field[2];
  }
  CHECK(s11 / n == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s22 / n == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s33 / n == doctest::Approx(1.0).epsilon(0.03));
  CHECK(s12 / n ==
        doctest::Approx(correlation(model, sites.distance(0, 1))).epsilon(0.05));
  CHECK(std::abs(s13 / n - correlation(model, sites.distance(0, 2))) < 0.03);
}

TEST_CASE("coincident sites share one field value exactly") {
  SiteSet sites;
  sites.sites = {{1.0, 2.0, "a"}, {5.0, 5.0, "b"}, {1.0, 2.0, "a2"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 2.0, 1.0};
  GaussianFieldSampler sampler(sites, model);
  Rng rng(5);
  std::vector<double> field(3);
  for (int i = 0; i < 100; ++i) {
    sampler.draw(rng, field);
    CHECK(field[0] == field[2]);
  }

  const EventMatrix em = simulate_schlather(sites, model, 50, 123);
  for (std::size_t i = 0; i < em.n_events; ++i)
    CHECK(em.at(i, 0) == em.at(i, 2));
}

TEST_CASE("simulator output shape, determinism, and labels") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, ""}, {1.0, 1.0, ""}};
  const CorrelationModel model{CorrelationFamily::cauchy, 1.5, 1.0};
  const EventMatrix a = simulate_schlather(sites, model, 20, 9);
  const EventMatrix b = simulate_schlather(sites, model, 20, 9);
  const EventMatrix c = simulate_schlather(sites, model, 20, 10);
  CHECK(a.n_events == 20);
  CHECK(a.n_sites == 2);
  CHECK(a.scale == Scale::unit_frechet);
  CHECK(a.seed == 9);
  CHECK(a.site_labels == std::vector<std::string>{"site1", "site2"});
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (double v : a.values) CHECK(v > 0.0);
}

TEST_CASE("simulated events are insensitive to event-order truncation") {
  // Each event owns an independent child stream, so prefixes agree.
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {2.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix big = simulate_schlather(sites, model, 30, 77);
  const EventMatrix small = simulate_schlather(sites, model, 10, 77);
  for (std::size_t i = 0; i < small.n_events; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(small.at(i, k) == big.at(i, k));
}

TEST_CASE("native rescaling applies the margins pointwise") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {3.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix unit = simulate_schlather(sites, model, 25, 3);

  std::vector<gev::FittedGev> margins(2);
  margins[0].mu1 = 110.0;
  margins[0].sigma = 2.0;
  margins[0].xi = -0.1;
  margins[1].mu1 = 105.0;
  margins[1].sigma = 1.5;
  margins[1].xi = 0.05;

  const EventMatrix native = to_native_scale(unit, margins);
  CHECK(native.scale == Scale::native);
  for (std::size_t i = 0; i < unit.n_events; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(native.at(i, k) ==
            doctest::Approx(gev::from_unit_frechet(unit.at(i, k),
                                                   margins[k].params()))
                .epsilon(1e-14));

  CHECK_THROWS_AS(to_native_scale(native, margins), ConfigError);
  margins.pop_back();
  CHECK_THROWS_AS(to_native_scale(unit, margins), ConfigError);
}

TEST_CASE("trended margins need a prediction year") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix unit = simulate_schlather(sites, model, 5, 3);

  std::vector<gev::FittedGev> margins(1);
  margins[0].mu1 = 110.0;
  margins[0].mu2 = 0.05;
  margins[0].sigma = 2.0;
  margins[0].xi = -0.1;
  margins[0].trend = true;
  margins[0].year_center = 1980.0;

  CHECK_THROWS_AS(to_native_scale(unit, margins), ConfigError);
  const EventMatrix native = to_native_scale(unit, margins, 2011.0);
  const gev::GevParams at = margins[0].params_at(2011.0);
  CHECK(at.mu == doctest::Approx(110.0 + 0.05 * 31.0).epsilon(1e-12));
  for (std::size_t i = 0; i < unit.n_events; ++i)
    CHECK(native.at(i, 0) ==
          doctest::Approx(gev::from_unit_frechet(unit.at(i, 0), at))
              .epsilon(1e-14));
}

TEST_CASE("event csv is exact and round-trips") {
  EventMatrix em;
  em.n_events = 2;
  em.n_sites = 2;
  em.scale = Scale::unit_frechet;
  em.values = {0.1234567890123456789, 2.0, 1.0 / 3.0, 5e-12};
  em.site_labels = {"a", "b"};
  std::ostringstream os;
  write_csv(em, os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "a,b");
  std::size_t idx = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    CHECK(std::stod(line.substr(0, comma)) == em.values[2 * idx]);
    CHECK(std::stod(line.substr(comma + 1)) == em.values[2 * idx + 1]);
    ++idx;
  }
  CHECK(idx == 2);
}

TEST_CASE("family names round-trip") {
  for (CorrelationFamily f :
       {CorrelationFamily::whittle_matern, CorrelationFamily::cauchy,
        CorrelationFamily::powered_exponential})
    CHECK(family_from_name(family_name(f)) == f);
  CHECK_THROWS_AS(family_from_name("gaussian"), ConfigError);
}
