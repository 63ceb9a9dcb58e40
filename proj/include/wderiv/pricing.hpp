#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wderiv/gev.hpp"
#include "wderiv/spatial.hpp"

namespace wderiv::pricing {

enum class PayoffKind { flat, proportional, capped };

// Payment as a function of the seasonal maximum m, in native units:
//   flat          alpha                  on {m >= s}
//   proportional  beta * (m - s)         on {m >= s}
//   capped        beta * min(m - s, t - s) on {m >= s}
// Strike and limit boundaries are inclusive. An infinite limit makes the
// capped contract identical to the proportional one.
struct PayoffSpec {
  PayoffKind kind = PayoffKind::flat;
  double alpha = 0.0;
  double beta = 0.0;
  double strike = 0.0;
  double limit = std::numeric_limits<double>::infinity();

  void validate() const;

  static PayoffSpec flat(double alpha, double strike);
  static PayoffSpec proportional(double beta, double strike);
  static PayoffSpec capped(double beta, double strike, double limit);
};

double payoff(const PayoffSpec& spec, double m);

enum class LoadMethod { variance, std_dev };

struct MomentEstimate {
  double first = 0.0;
  double second = 0.0;
  double se_first = 0.0;
  double se_second = 0.0;
  std::size_t draws = 0;
  bool low_draw_warning = false;

  double variance() const { return second - first * first; }
};

struct FlatPremium {
  double mean = 0.0;
  double second_moment = 0.0;
};

// Exact moments of the flat contract: alpha * (1 - G(s)) and
// alpha^2 * (1 - G(s)).
FlatPremium pure_premium_flat(const gev::GevParams& params, double alpha,
                              double s);

struct McOptions {
  std::size_t min_draws = 1000;
};

MomentEstimate mc_moments(const std::vector<double>& values,
                          const PayoffSpec& spec, const McOptions& opts = {});

// E + lambda * variance, or E + lambda * sqrt(variance) under std_dev.
double risk_loaded_premium(double mean, double variance, double lambda,
                           LoadMethod method = LoadMethod::variance);

// Plug-in (1/I denominator) covariance of payments across contracts; entry
// (j, k) pairs column j under specs[j] with column k under specs[k].
Eigen::MatrixXd payment_covariance(const spatial::EventMatrix& events,
                                   const std::vector<PayoffSpec>& specs);

// Plug-in variance of the per-event total payment.
double portfolio_variance(const spatial::EventMatrix& events,
                          const std::vector<PayoffSpec>& specs);

struct MarginalVariance {
  double value = 0.0;          // var(full book) - var(book without k)
  double decomposition = 0.0;  // var(L_k) + 2 sum_{j != k} cov(L_j, L_k)
};

MarginalVariance marginal_variance(const spatial::EventMatrix& events,
                                   const std::vector<PayoffSpec>& specs,
                                   std::size_t k);

struct CovarianceShares {
  // a(j, k) = mean_k / (mean_j + mean_k): the fraction of cov(L_j, L_k)
  // charged to contract k. a(j, k) + a(k, j) = 1 exactly; the diagonal is
  // unused and set to 0.5.
  Eigen::MatrixXd a;
  bool degenerate_pair = false;  // some pair had both means zero, split 0.5
};

CovarianceShares covariance_shares(const std::vector<double>& means);

// lambda * (var_k + 2 sum_j a_jk * cov_jk), the renewal-additive risk load.
double risk_load_from_components(double var_k,
                                 const std::vector<double>& cov_jk,
                                 const std::vector<double>& a_jk,
                                 double lambda);

double covariance_share_risk_load(const spatial::EventMatrix& events,
                                  const std::vector<PayoffSpec>& specs,
                                  double lambda, std::size_t k);

struct PortfolioReport {
  std::vector<std::string> contract_labels;
  std::vector<double> means;
  std::vector<double> se_means;
  std::vector<double> variances;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd shares;
  std::vector<double> risk_loads;
  std::vector<double> premiums;  // mean + risk load
  double total_variance = 0.0;
  double newest_marginal_variance = 0.0;  // contract K-1 as the newest
  double lambda = 0.0;
  LoadMethod method = LoadMethod::variance;
  std::size_t draws = 0;
  bool degenerate_shares = false;
};

PortfolioReport price_portfolio(const spatial::EventMatrix& events,
                                const std::vector<PayoffSpec>& specs,
                                double lambda,
                                LoadMethod method = LoadMethod::variance);

}  // namespace wderiv::pricing
