#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "wderiv/cle.hpp"
#include "wderiv/errors.hpp"
#include "wderiv/rng.hpp"
#include "wderiv/spatial.hpp"

using namespace wderiv;
using namespace wderiv::cle;
using namespace wderiv::spatial;

namespace {

SiteSet grid_sites(std::size_t nx, std::size_t ny, double spacing) {
  SiteSet sites;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix)
      sites.sites.push_back({spacing * static_cast<double>(ix),
                             spacing * static_cast<double>(iy),
                             "s" + std::to_string(sites.sites.size() + 1)});
  return sites;
}

}  // namespace

TEST_CASE("pairwise loglik equals the direct double sum") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}, {0.0, 2.0, "c"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 1.5, 1.0};
  const EventMatrix em = simulate_schlather(sites, model, 12, 17);

  double direct = 0.0;
  for (std::size_t n = 0; n < em.n_events; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = i + 1; j < 3; ++j)
        direct += schlather_bivariate_logpdf(
            em.at(n, i), em.at(n, j),
            correlation(model, sites.distance(i, j)));

  CHECK(pairwise_loglik(em, sites, model) ==
        doctest::Approx(direct).epsilon(1e-12));

  const PairwiseStats stats = pairwise_loglik_stats(em, sites, model);
  CHECK(stats.value == doctest::Approx(direct).epsilon(1e-12));
  CHECK(stats.terms == em.n_events * 3);
  CHECK(stats.degenerate_terms == 0);
}

TEST_CASE("underflowing terms hit the sentinel instead of minus infinity") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 1.5, 1.0};
  EventMatrix em = simulate_schlather(sites, model, 4, 2);
  em.at(0, 0) = 1e-300;

  const PairwiseStats stats = pairwise_loglik_stats(em, sites, model);
  CHECK(stats.degenerate_terms == 1);
  CHECK(std::isfinite(stats.value));
  CHECK(stats.value <= -1e300 + 1e10);
}

TEST_CASE("fit rejects designs with too few pair terms") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 1.5, 1.0};
  const EventMatrix em = simulate_schlather(sites, model, 3, 2);
  CHECK_THROWS_AS(
      fit_maxstable(em, sites, CorrelationFamily::whittle_matern),
      ConfigError);
}

TEST_CASE("composite fit recovers the dependence model") {
  const SiteSet sites = grid_sites(3, 3, 1.5);
  const CorrelationModel truth{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix em = simulate_schlather(sites, truth, 150, 42);

  const CompositeFit fit =
      fit_maxstable(em, sites, CorrelationFamily::whittle_matern);

  CHECK(fit.c2_hat > 0.0);
  CHECK(fit.nu_hat > 0.0);
  CHECK(fit.pair_count == 36);
  CHECK(fit.replicate_count == 150);

  // The optimizer's point must beat the true parameters on its own
  // objective.
  CHECK(fit.loglik >= pairwise_loglik(em, sites, truth) - 1e-6);

  // Loose sanity bounds; a 9-site, 150-replicate design has wide sampling
  // spread but not orders of magnitude.
  CHECK(fit.c2_hat > 0.3);
  CHECK(fit.c2_hat < 15.0);
  CHECK(fit.nu_hat > 0.2);
  CHECK(fit.nu_hat < 6.0);

  CHECK(fit.se_c2 > 0.0);
  CHECK(std::isfinite(fit.se_c2));
  CHECK(fit.se_nu > 0.0);
  CHECK(std::isfinite(fit.se_nu));

  CHECK(fit.H_hat.isApprox(fit.H_hat.transpose(), 1e-8));
  CHECK(fit.J_hat.isApprox(fit.J_hat.transpose(), 1e-8));
  CHECK(fit.covariance(0, 0) >= 0.0);
  CHECK(fit.covariance(1, 1) >= 0.0);
  CHECK(fit.covariance(0, 1) ==
        doctest::Approx(fit.covariance(1, 0)).epsilon(1e-8));

  // Sandwich assembly: covariance must equal Hinv * J * Hinv.
  const Eigen::Matrix2d hinv = fit.H_hat.inverse();
  const Eigen::Matrix2d expected = hinv * fit.J_hat * hinv;
  CHECK(fit.covariance.isApprox(expected, 1e-8));
}

TEST_CASE("powered exponential stays inside its exponent bound") {
  const SiteSet sites = grid_sites(3, 3, 1.0);
  const CorrelationModel truth{CorrelationFamily::powered_exponential, 2.0,
                               1.8};
  const EventMatrix em = simulate_schlather(sites, truth, 120, 8);
  const CompositeFit fit =
      fit_maxstable(em, sites, CorrelationFamily::powered_exponential);
  CHECK(fit.nu_hat > 0.0);
  CHECK(fit.nu_hat < 2.0);
  CHECK(fit.loglik >= pairwise_loglik(em, sites, truth) - 1e-6);
}

TEST_CASE("clic matches its definition") {
  const SiteSet sites = grid_sites(3, 2, 1.5);
  const CorrelationModel truth{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix em = simulate_schlather(sites, truth, 80, 4);
  const CompositeFit fit =
      fit_maxstable(em, sites, CorrelationFamily::whittle_matern);

  const ClicScore score = clic(fit);
  const double penalty =
      (fit.J_hat * fit.H_hat.inverse()).trace();
  CHECK(score.penalty == doctest::Approx(penalty).epsilon(1e-10));
  CHECK(score.value ==
        doctest::Approx(-2.0 * fit.loglik - penalty).epsilon(1e-10));
}

TEST_CASE("model selection ranks families and is deterministic") {
  const SiteSet sites = grid_sites(3, 3, 1.5);
  const CorrelationModel truth{CorrelationFamily::whittle_matern, 2.0, 1.0};
  const EventMatrix em = simulate_schlather(sites, truth, 150, 42);

  const std::vector<CorrelationFamily> families = {
      CorrelationFamily::whittle_matern, CorrelationFamily::cauchy,
      CorrelationFamily::powered_exponential};
  const ModelSelection sel = model_select(em, sites, families);
  CHECK(sel.rows.size() == 3);
  CHECK(sel.best_index < sel.rows.size());
  CHECK(sel.rows[sel.best_index].ok);
  for (const ModelScoreRow& row : sel.rows) {
    if (!row.ok) continue;
    CHECK(row.score.value >= sel.rows[sel.best_index].score.value);
  }

  const ModelSelection again = model_select(em, sites, families);
  CHECK(again.best_index == sel.best_index);
  for (std::size_t i = 0; i < 3; ++i) {
    if (!sel.rows[i].ok) continue;
    CHECK(again.rows[i].score.value == sel.rows[i].score.value);
    CHECK(again.rows[i].score.fit.c2_hat == sel.rows[i].score.fit.c2_hat);
  }

  CHECK_THROWS_AS(model_select(em, sites, {}), ConfigError);
}

TEST_CASE("model selection surfaces total failure") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 1.5, 1.0};
  const EventMatrix em = simulate_schlather(sites, model, 3, 2);
  CHECK_THROWS_AS(model_select(em, sites,
                               {CorrelationFamily::whittle_matern,
                                CorrelationFamily::cauchy}),
                  NumericalError);
}

TEST_CASE("fit reports scale mismatches") {
  SiteSet sites;
  sites.sites = {{0.0, 0.0, "a"}, {1.0, 0.0, "b"}};
  const CorrelationModel model{CorrelationFamily::whittle_matern, 1.5, 1.0};
  EventMatrix em = simulate_schlather(sites, model, 30, 2);
  em.scale = Scale::native;
  CHECK_THROWS_AS(pairwise_loglik(em, sites, model), ConfigError);
  em.scale = Scale::unit_frechet;
  SiteSet wrong = sites;
  wrong.sites.push_back({9.0, 9.0, "c"});
  CHECK_THROWS_AS(pairwise_loglik(em, wrong, model), ConfigError);
}
