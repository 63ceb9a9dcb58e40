#include "wderiv/pricing.hpp"

#include <algorithm>
#include <cmath>

#include "wderiv/errors.hpp"

namespace wderiv::pricing {

namespace {

void check_shapes(const spatial::EventMatrix& events,
                  const std::vector<PayoffSpec>& specs) {
  if (events.n_events == 0) throw ConfigError("event matrix is empty");
  if (specs.size() != events.n_sites)
    throw ConfigError("need exactly one payoff spec per event column");
  if (events.scale != spatial::Scale::native)
    throw ConfigError("payoffs apply to native-scale events");
  for (const PayoffSpec& spec : specs) spec.validate();
}

// Payments as an I x K column-major matrix plus per-column plug-in means.
struct PaymentTable {
  Eigen::MatrixXd L;
  std::vector<double> means;
};

PaymentTable payments(const spatial::EventMatrix& events,
                      const std::vector<PayoffSpec>& specs) {
  const std::size_t n = events.n_events;
  const std::size_t k = events.n_sites;
  PaymentTable table;
  table.L.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  table.means.assign(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = payoff(specs[j], events.at(i, j));
      table.L(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      sum += v;
    }
    table.means[j] = sum / static_cast<double>(n);
  }
  return table;
}

Eigen::MatrixXd covariance_of(const PaymentTable& table) {
  const Eigen::Index n = table.L.rows();
  const Eigen::Index k = table.L.cols();
  Eigen::MatrixXd cov(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = a; b < k; ++b) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        acc += (table.L(i, a) - table.means[static_cast<std::size_t>(a)]) *
               (table.L(i, b) - table.means[static_cast<std::size_t>(b)]);
      cov(a, b) = acc / static_cast<double>(n);
      cov(b, a) = cov(a, b);
    }
  }
  return cov;
}

double row_sum_variance(const PaymentTable& table) {
  const Eigen::Index n = table.L.rows();
  Eigen::VectorXd s = table.L.rowwise().sum();
  const double mean = s.sum() / static_cast<double>(n);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = s(i) - mean;
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

std::vector<double> load_all(const Eigen::MatrixXd& cov,
                             const Eigen::MatrixXd& shares, double lambda,
                             LoadMethod method) {
  const Eigen::Index k = cov.rows();
  std::vector<double> loads(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index c = 0; c < k; ++c) {
    double alloc = cov(c, c);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == c) continue;
      alloc += 2.0 * shares(j, c) * cov(j, c);
    }
    loads[static_cast<std::size_t>(c)] =
        method == LoadMethod::variance
            ? lambda * alloc
            : lambda * std::sqrt(std::max(0.0, alloc));
  }
  return loads;
}

}  // namespace

void PayoffSpec::validate() const {
  if (!std::isfinite(strike)) throw ConfigError("strike must be finite");
  switch (kind) {
    case PayoffKind::flat:
      if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw ConfigError("flat payment must be nonnegative");
      return;
    case PayoffKind::proportional:
      if (!(beta >= 0.0) || !std::isfinite(beta))
        throw ConfigError("payment rate must be nonnegative");
      return;
    case PayoffKind::capped:
      if (!(beta >= 0.0) || !std::isfinite(beta))
        throw ConfigError("payment rate must be nonnegative");
      if (std::isnan(limit) || limit < strike)
        throw ConfigError("limit must be at least the strike");
      return;
  }
  throw ConfigError("unknown payoff kind");
}

PayoffSpec PayoffSpec::flat(double alpha, double strike) {
  PayoffSpec s;
  s.kind = PayoffKind::flat;
  s.alpha = alpha;
  s.strike = strike;
  return s;
}

PayoffSpec PayoffSpec::proportional(double beta, double strike) {
  PayoffSpec s;
  s.kind = PayoffKind::proportional;
  s.beta = beta;
  s.strike = strike;
  return s;
}

PayoffSpec PayoffSpec::capped(double beta, double strike, double limit) {
  PayoffSpec s;
  s.kind = PayoffKind::capped;
  s.beta = beta;
  s.strike = strike;
  s.limit = limit;
  return s;
}

double payoff(const PayoffSpec& spec, double m) {
  if (m < spec.strike) return 0.0;
  switch (spec.kind) {
    case PayoffKind::flat:
      return spec.alpha;
    case PayoffKind::proportional:
      return spec.beta * (m - spec.strike);
    case PayoffKind::capped:
      return spec.beta * std::min(m - spec.strike, spec.limit - spec.strike);
  }
  return 0.0;
}

FlatPremium pure_premium_flat(const gev::GevParams& params, double alpha,
                              double s) {
  params.validate();
  if (!(alpha >= 0.0)) throw ConfigError("flat payment must be nonnegative");
  const double exceed = 1.0 - gev::gev_cdf(s, params);
  return {alpha * exceed, alpha * alpha * exceed};
}

MomentEstimate mc_moments(const std::vector<double>& values,
                          const PayoffSpec& spec, const McOptions& opts) {
  if (values.empty()) throw ConfigError("no draws supplied");
  spec.validate();
  const std::size_t n = values.size();

  MomentEstimate est;
  est.draws = n;
  est.low_draw_warning = n < opts.min_draws;

  double s1 = 0.0;
  double s2 = 0.0;
  for (double m : values) {
    const double v = payoff(spec, m);
    s1 += v;
    s2 += v * v;
  }
  est.first = s1 / static_cast<double>(n);
  est.second = s2 / static_cast<double>(n);

  double c1 = 0.0;
  double c2 = 0.0;
  for (double m : values) {
    const double v = payoff(spec, m);
    const double d1 = v - est.first;
    const double d2 = v * v - est.second;
    c1 += d1 * d1;
    c2 += d2 * d2;
  }
  const double dn = static_cast<double>(n);
  est.se_first = std::sqrt(c1 / dn / dn);
  est.se_second = std::sqrt(c2 / dn / dn);
  return est;
}

double risk_loaded_premium(double mean, double variance, double lambda,
                           LoadMethod method) {
  if (!(variance >= 0.0)) throw ConfigError("variance must be nonnegative");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  return method == LoadMethod::variance
             ? mean + lambda * variance
             : mean + lambda * std::sqrt(variance);
}

Eigen::MatrixXd payment_covariance(const spatial::EventMatrix& events,
                                   const std::vector<PayoffSpec>& specs) {
  check_shapes(events, specs);
  return covariance_of(payments(events, specs));
}

double portfolio_variance(const spatial::EventMatrix& events,
                          const std::vector<PayoffSpec>& specs) {
  check_shapes(events, specs);
  return row_sum_variance(payments(events, specs));
}

MarginalVariance marginal_variance(const spatial::EventMatrix& events,
                                   const std::vector<PayoffSpec>& specs,
                                   std::size_t k) {
  check_shapes(events, specs);
  if (k >= specs.size()) throw ConfigError("contract index out of range");
  const PaymentTable table = payments(events, specs);
  const Eigen::Index n = table.L.rows();
  const Eigen::Index kk = static_cast<Eigen::Index>(k);

  Eigen::VectorXd full = table.L.rowwise().sum();
  Eigen::VectorXd rest = full - table.L.col(kk);
  const double mean_full = full.sum() / static_cast<double>(n);
  const double mean_rest = rest.sum() / static_cast<double>(n);
  double v_full = 0.0;
  double v_rest = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    v_full += (full(i) - mean_full) * (full(i) - mean_full);
    v_rest += (rest(i) - mean_rest) * (rest(i) - mean_rest);
  }
  v_full /= static_cast<double>(n);
  v_rest /= static_cast<double>(n);

  const Eigen::MatrixXd cov = covariance_of(table);
  double decomp = cov(kk, kk);
  for (Eigen::Index j = 0; j < cov.rows(); ++j)
    if (j != kk) decomp += 2.0 * cov(j, kk);

  return {v_full - v_rest, decomp};
}

CovarianceShares covariance_shares(const std::vector<double>& means) {
  if (means.empty()) throw ConfigError("no expected losses supplied");
  for (double m : means)
    if (!(m >= 0.0) || !std::isfinite(m))
      throw ConfigError("expected losses must be finite and nonnegative");

  const Eigen::Index k = static_cast<Eigen::Index>(means.size());
  CovarianceShares out;
  out.a = Eigen::MatrixXd::Constant(k, k, 0.5);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index c = j + 1; c < k; ++c) {
      const double denom = means[static_cast<std::size_t>(j)] +
                           means[static_cast<std::size_t>(c)];
      if (denom == 0.0) {
        out.degenerate_pair = true;
        continue;
      }
      const double a_jc = means[static_cast<std::size_t>(c)] / denom;
      out.a(j, c) = a_jc;
      out.a(c, j) = 1.0 - a_jc;
    }
  }
  return out;
}

double risk_load_from_components(double var_k,
                                 const std::vector<double>& cov_jk,
                                 const std::vector<double>& a_jk,
                                 double lambda) {
  if (cov_jk.size() != a_jk.size())
    throw ConfigError("covariance and share lists differ in length");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  double alloc = var_k;
  for (std::size_t j = 0; j < cov_jk.size(); ++j)
    alloc += 2.0 * a_jk[j] * cov_jk[j];
  return lambda * alloc;
}

double covariance_share_risk_load(const spatial::EventMatrix& events,
                                  const std::vector<PayoffSpec>& specs,
                                  double lambda, std::size_t k) {
  check_shapes(events, specs);
  if (k >= specs.size()) throw ConfigError("contract index out of range");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  const PaymentTable table = payments(events, specs);
  const Eigen::MatrixXd cov = covariance_of(table);
  const CovarianceShares shares = covariance_shares(table.means);
  return load_all(cov, shares.a, lambda, LoadMethod::variance)[k];
}

PortfolioReport price_portfolio(const spatial::EventMatrix& events,
                                const std::vector<PayoffSpec>& specs,
                                double lambda, LoadMethod method) {
  check_shapes(events, specs);
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  const PaymentTable table = payments(events, specs);
  const std::size_t k = specs.size();
  const double dn = static_cast<double>(events.n_events);

  PortfolioReport report;
  report.contract_labels = events.site_labels;
  report.contract_labels.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    if (report.contract_labels[j].empty())
      report.contract_labels[j] = "contract" + std::to_string(j + 1);

  report.means = table.means;
  report.covariance = covariance_of(table);
  report.variances.resize(k);
  report.se_means.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Eigen::Index jj = static_cast<Eigen::Index>(j);
    report.variances[j] = report.covariance(jj, jj);
    report.se_means[j] = std::sqrt(report.variances[j] / dn);
  }

  const CovarianceShares shares = covariance_shares(table.means);
  report.shares = shares.a;
  report.degenerate_shares = shares.degenerate_pair;
  report.risk_loads = load_all(report.covariance, shares.a, lambda, method);
  report.premiums.resize(k);
  for (std::size_t j = 0; j < k; ++j)
    report.premiums[j] = report.means[j] + report.risk_loads[j];

  report.total_variance = row_sum_variance(table);
  report.newest_marginal_variance =
      k == 1 ? report.variances[0]
             : marginal_variance(events, specs, k - 1).value;
  report.lambda = lambda;
  report.method = method;
  report.draws = events.n_events;
  return report;
}

}  // namespace wderiv::pricing
