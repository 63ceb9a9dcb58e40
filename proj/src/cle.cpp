#include "wderiv/cle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wderiv/errors.hpp"
#include "wderiv/simplex.hpp"

namespace wderiv::cle {

namespace {

constexpr double kSentinel = -1e300;

struct PairIndex {
  std::size_t i;
  std::size_t j;
  double distance;
};

std::vector<PairIndex> site_pairs(const spatial::SiteSet& sites) {
  const std::size_t k = sites.size();
  std::vector<PairIndex> pairs;
  pairs.reserve(k * (k - 1) / 2);
  for (std::size_t i = 0; i + 1 < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      pairs.push_back({i, j, sites.distance(i, j)});
  return pairs;
}

void check_inputs(const spatial::EventMatrix& data,
                  const spatial::SiteSet& sites) {
  if (data.scale != spatial::Scale::unit_frechet)
    throw ConfigError("composite likelihood needs unit-Frechet scale data");
  if (data.n_sites != sites.size())
    throw ConfigError("event matrix and site set disagree on site count");
  if (data.n_events < 1 || data.n_sites < 2)
    throw ConfigError("need at least one replicate over at least two sites");
}

double term_logpdf(double z1, double z2, double rho) {
  const double lp = spatial::schlather_bivariate_logpdf(z1, z2, rho);
  return std::isfinite(lp) ? lp : kSentinel;
}

// Per-term log densities in pair-major order, sentinel-clamped.
void eval_terms(const spatial::EventMatrix& data,
                const std::vector<PairIndex>& pairs,
                const spatial::CorrelationModel& model,
                std::vector<double>& out) {
  const std::size_t n = data.n_events;
  out.resize(pairs.size() * n);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double rho = spatial::correlation(model, pairs[p].distance);
    for (std::size_t t = 0; t < n; ++t)
      out[p * n + t] =
          term_logpdf(data.at(t, pairs[p].i), data.at(t, pairs[p].j), rho);
  }
}

double total_loglik(const spatial::EventMatrix& data,
                    const std::vector<PairIndex>& pairs,
                    const spatial::CorrelationModel& model) {
  const std::size_t n = data.n_events;
  double sum = 0.0;
  for (const PairIndex& p : pairs) {
    const double rho = spatial::correlation(model, p.distance);
    for (std::size_t t = 0; t < n; ++t)
      sum += term_logpdf(data.at(t, p.i), data.at(t, p.j), rho);
  }
  return sum;
}

// Optimization coordinates: x0 = log c2 for every family; x1 = log nu,
// except powered-exponential where nu = 2 / (1 + exp(-x1)) keeps nu < 2.
spatial::CorrelationModel model_from_internal(
    spatial::CorrelationFamily family, const std::vector<double>& x) {
  spatial::CorrelationModel m;
  m.family = family;
  m.c2 = std::exp(x[0]);
  if (family == spatial::CorrelationFamily::powered_exponential)
    m.nu = 2.0 / (1.0 + std::exp(-x[1]));
  else
    m.nu = std::exp(x[1]);
  return m;
}

std::vector<double> internal_from_natural(spatial::CorrelationFamily family,
                                          double c2, double nu) {
  if (!(c2 > 0.0) || !(nu > 0.0))
    throw ConfigError("dependence parameters must be positive");
  std::vector<double> x(2);
  x[0] = std::log(c2);
  if (family == spatial::CorrelationFamily::powered_exponential) {
    const double clamped = std::clamp(nu, 1e-6, 2.0 - 1e-6);
    x[1] = std::log(clamped / (2.0 - clamped));
  } else {
    x[1] = std::log(nu);
  }
  return x;
}

double median_pair_distance(const std::vector<PairIndex>& pairs) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const PairIndex& p : pairs) d.push_back(p.distance);
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  return d[mid];
}

// Steps shrink near the parameter-space boundary so perturbed models stay
// valid.
double clamp_step(double h, const CompositeFit& fit, int coord) {
  if (coord == 0) return std::min(h, fit.c2_hat / 4.0);
  double bound = fit.nu_hat / 4.0;
  if (fit.family == spatial::CorrelationFamily::powered_exponential)
    bound = std::min(bound, (2.0 - fit.nu_hat) / 4.0);
  return std::min(h, bound);
}

Eigen::Matrix2d invert_2x2(const Eigen::Matrix2d& m, const char* label) {
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  const double scale = m.cwiseAbs().maxCoeff();
  if (!std::isfinite(det) || det == 0.0 ||
      std::abs(det) < 1e-14 * scale * scale) {
    std::ostringstream msg;
    msg << label << " is numerically singular (det " << det
        << ", condition estimate "
        << (det == 0.0 ? std::numeric_limits<double>::infinity()
                       : scale * scale / std::abs(det))
        << ")";
    throw NumericalError(msg.str());
  }
  Eigen::Matrix2d inv;
  inv << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
  return inv;
}

}  // namespace

double pairwise_loglik(const spatial::EventMatrix& data,
                       const spatial::SiteSet& sites,
                       const spatial::CorrelationModel& model) {
  check_inputs(data, sites);
  model.validate();
  return total_loglik(data, site_pairs(sites), model);
}

PairwiseStats pairwise_loglik_stats(const spatial::EventMatrix& data,
                                    const spatial::SiteSet& sites,
                                    const spatial::CorrelationModel& model) {
  check_inputs(data, sites);
  model.validate();
  const std::vector<PairIndex> pairs = site_pairs(sites);
  PairwiseStats stats;
  for (const PairIndex& p : pairs) {
    const double rho = spatial::correlation(model, p.distance);
    for (std::size_t t = 0; t < data.n_events; ++t) {
      const double lp = term_logpdf(data.at(t, p.i), data.at(t, p.j), rho);
      stats.value += lp;
      ++stats.terms;
      if (lp == kSentinel) ++stats.degenerate_terms;
    }
  }
  return stats;
}

CompositeFit fit_maxstable(const spatial::EventMatrix& data,
                           const spatial::SiteSet& sites,
                           spatial::CorrelationFamily family,
                           std::optional<std::pair<double, double>> init) {
  check_inputs(data, sites);
  const std::vector<PairIndex> pairs = site_pairs(sites);
  if (data.n_events * pairs.size() < 10)
    throw ConfigError("too few pair-terms for composite likelihood fitting");

  double c2_0;
  double nu_0;
  if (init) {
    c2_0 = init->first;
    nu_0 = init->second;
  } else {
    c2_0 = median_pair_distance(pairs);
    nu_0 = 1.0;
  }
  if (!(c2_0 > 0.0))
    throw ConfigError("degenerate site geometry: median pair distance is 0");

  const auto objective = [&](const std::vector<double>& x) {
    return -total_loglik(data, pairs, model_from_internal(family, x));
  };
  const std::vector<double> x0 = internal_from_natural(family, c2_0, nu_0);
  const SimplexResult res = nelder_mead(objective, x0, SimplexOptions{});

  const spatial::CorrelationModel best = model_from_internal(family, res.x);
  if (!res.converged)
    throw FitError("composite likelihood fit did not converge",
                   {best.c2, best.nu}, -res.value);
  if (!std::isfinite(res.value) || res.value >= 1e299)
    throw FitError("composite likelihood is degenerate at the optimum",
                   {best.c2, best.nu}, -res.value);

  CompositeFit fit;
  fit.family = family;
  fit.c2_hat = best.c2;
  fit.nu_hat = best.nu;
  fit.loglik = -res.value;
  fit.pair_count = pairs.size();
  fit.replicate_count = data.n_events;
  fit.iterations = res.iterations;
  sandwich_variance(fit, data, sites);
  return fit;
}

void sandwich_variance(CompositeFit& fit, const spatial::EventMatrix& data,
                       const spatial::SiteSet& sites) {
  check_inputs(data, sites);
  const std::vector<PairIndex> pairs = site_pairs(sites);
  const double theta[2] = {fit.c2_hat, fit.nu_hat};

  const auto model_at = [&](double c2, double nu) {
    spatial::CorrelationModel m;
    m.family = fit.family;
    m.c2 = c2;
    m.nu = nu;
    return m;
  };

  // J: per-term central-difference scores, outer products summed.
  double hs[2];
  for (int k = 0; k < 2; ++k)
    hs[k] = clamp_step(1e-5 * std::max(1.0, std::abs(theta[k])), fit, k);

  std::vector<double> c2p, c2m, nup, num;
  eval_terms(data, pairs, model_at(theta[0] + hs[0], theta[1]), c2p);
  eval_terms(data, pairs, model_at(theta[0] - hs[0], theta[1]), c2m);
  eval_terms(data, pairs, model_at(theta[0], theta[1] + hs[1]), nup);
  eval_terms(data, pairs, model_at(theta[0], theta[1] - hs[1]), num);

  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  for (std::size_t t = 0; t < c2p.size(); ++t) {
    if (c2p[t] == kSentinel || c2m[t] == kSentinel || nup[t] == kSentinel ||
        num[t] == kSentinel)
      continue;
    const double s0 = (c2p[t] - c2m[t]) / (2.0 * hs[0]);
    const double s1 = (nup[t] - num[t]) / (2.0 * hs[1]);
    J(0, 0) += s0 * s0;
    J(0, 1) += s0 * s1;
    J(1, 1) += s1 * s1;
  }
  J(1, 0) = J(0, 1);

  // H: nested central differences of the summed log-likelihood; the sum of
  // per-term Hessians equals the Hessian of the sum.
  double hh[2];
  for (int k = 0; k < 2; ++k)
    hh[k] = clamp_step(1e-4 * std::max(1.0, std::abs(theta[k])), fit, k);

  const auto F = [&](double c2, double nu) {
    return total_loglik(data, pairs, model_at(c2, nu));
  };
  const double f0 = F(theta[0], theta[1]);
  Eigen::Matrix2d hess;
  hess(0, 0) = (F(theta[0] + 2.0 * hh[0], theta[1]) - 2.0 * f0 +
                F(theta[0] - 2.0 * hh[0], theta[1])) /
               (4.0 * hh[0] * hh[0]);
  hess(1, 1) = (F(theta[0], theta[1] + 2.0 * hh[1]) - 2.0 * f0 +
                F(theta[0], theta[1] - 2.0 * hh[1])) /
               (4.0 * hh[1] * hh[1]);
  hess(0, 1) = (F(theta[0] + hh[0], theta[1] + hh[1]) -
                F(theta[0] + hh[0], theta[1] - hh[1]) -
                F(theta[0] - hh[0], theta[1] + hh[1]) +
                F(theta[0] - hh[0], theta[1] - hh[1])) /
               (4.0 * hh[0] * hh[1]);
  hess(1, 0) = hess(0, 1);

  fit.H_hat = -hess;
  fit.J_hat = J;
  const Eigen::Matrix2d hinv = invert_2x2(fit.H_hat, "H_hat");
  fit.covariance = hinv * J * hinv;
  if (fit.covariance(0, 0) < 0.0 || fit.covariance(1, 1) < 0.0)
    throw NumericalError("sandwich covariance has a negative diagonal");
  fit.se_c2 = std::sqrt(fit.covariance(0, 0));
  fit.se_nu = std::sqrt(fit.covariance(1, 1));
}

ClicScore clic(const CompositeFit& fit) {
  const Eigen::Matrix2d hinv = invert_2x2(fit.H_hat, "H_hat");
  ClicScore score;
  score.penalty = (fit.J_hat * hinv).trace();
  score.value = -2.0 * fit.loglik - score.penalty;
  score.fit = fit;
  if (!std::isfinite(score.value))
    throw NumericalError("information criterion is not finite");
  return score;
}

ModelSelection model_select(
    const spatial::EventMatrix& data, const spatial::SiteSet& sites,
    const std::vector<spatial::CorrelationFamily>& families) {
  if (families.empty()) throw ConfigError("no correlation families requested");
  ModelSelection sel;
  sel.rows.reserve(families.size());
  for (spatial::CorrelationFamily family : families) {
    ModelScoreRow row;
    row.family = family;
    try {
      const CompositeFit fit = fit_maxstable(data, sites, family);
      row.score = clic(fit);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    sel.rows.push_back(std::move(row));
  }

  bool any = false;
  for (std::size_t i = 0; i < sel.rows.size(); ++i) {
    const ModelScoreRow& row = sel.rows[i];
    if (!row.ok) continue;
    if (!any) {
      sel.best_index = i;
      any = true;
      continue;
    }
    const ClicScore& best = sel.rows[sel.best_index].score;
    if (row.score.value < best.value ||
        (row.score.value == best.value &&
         row.score.fit.iterations < best.fit.iterations))
      sel.best_index = i;
  }
  if (!any) {
    std::string msg = "every correlation family failed to fit:";
    for (const ModelScoreRow& row : sel.rows)
      msg += "\n  " + spatial::family_name(row.family) + ": " + row.error;
    throw NumericalError(msg);
  }
  return sel;
}

}  // namespace wderiv::cle
