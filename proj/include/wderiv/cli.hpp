#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wderiv/cle.hpp"
#include "wderiv/gev.hpp"
#include "wderiv/pricing.hpp"
#include "wderiv/spatial.hpp"

#include "json.hpp"

namespace wderiv::cli {

// Parsed command line. Config files are JSON; --seed overrides the config's
// master seed.
struct Invocation {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

// Exit codes: 0 success, 2 bad config, 3 bad data, 4 numerical or fit
// failure. Errors go to stderr.
int run(const Invocation& inv);
int main_entry(int argc, char** argv);

nlohmann::json load_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

nlohmann::json fitted_gev_to_json(const gev::FittedGev& fit);
gev::FittedGev fitted_gev_from_json(const nlohmann::json& j);
nlohmann::json composite_fit_to_json(const cle::CompositeFit& fit);
cle::CompositeFit composite_fit_from_json(const nlohmann::json& j);
nlohmann::json portfolio_report_to_json(const pricing::PortfolioReport& r);

// Subcommand bodies, exposed so tests can drive them without a process
// boundary. Each writes its primary outputs under `out`.
void cmd_fit_gev(const nlohmann::json& cfg, const std::filesystem::path& out);
void cmd_fit_spatial(const nlohmann::json& cfg,
                     const std::filesystem::path& out);
void cmd_simulate(const nlohmann::json& cfg,
                  const std::filesystem::path& out);
void cmd_price(const nlohmann::json& cfg, const std::filesystem::path& out);
void cmd_study(const nlohmann::json& cfg, const std::filesystem::path& out);

struct StudyScenario {
  std::string name;
  double c2 = 0.0;
};

struct StudyConfig {
  double grid_extent = 10.0;
  std::size_t n_sites = 25;
  std::size_t n_derivative_sites = 4;
  std::vector<StudyScenario> scenarios = {
      {"short", 0.5}, {"medium", 3.0}, {"long", 8.0}};
  spatial::CorrelationFamily family =
      spatial::CorrelationFamily::whittle_matern;
  double nu = 1.0;
  std::vector<std::size_t> years = {50, 100, 250};
  std::size_t replicates = 20;
  std::size_t oracle_draws = 100000;
  std::size_t estimate_draws = 100000;
  std::uint64_t seed = 1;

  // True margins: mu and sigma linear in the vertical coordinate, constant
  // shape; one flat contract per derivative site.
  double margin_mu_base = 110.0;
  double margin_mu_per_lat = -0.5;
  double margin_sigma_base = 1.5;
  double margin_sigma_per_lat = 0.2;
  double margin_xi = -0.1;
  double contract_alpha = 1.0;
  double contract_strike = 112.0;

  // Skip estimation and evaluate at the true parameters; isolates oracle
  // noise from estimation error.
  bool perfect_information = false;

  void validate() const;
};

StudyConfig study_config_from_json(const nlohmann::json& cfg);

struct StudyRow {
  std::string scenario;
  double c2 = 0.0;
  std::size_t years = 0;
  std::size_t replicate = 0;
  int method = 0;  // 1 spatial, 2 marginal-only
  double mv_hat = 0.0;
  double mv_true = 0.0;
  double pe = 0.0;
  bool ok = false;
  std::string error;
};

struct MapeRow {
  std::string scenario;
  double c2 = 0.0;
  std::size_t years = 0;
  int method = 0;
  double mape = 0.0;
  double median_pe = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
};

struct StudyResult {
  StudyConfig config;
  spatial::SiteSet sites;  // derivative sites first
  std::vector<double> true_mv;  // per scenario
  std::vector<StudyRow> rows;
  std::vector<MapeRow> mape;
};

// Marginal-variance estimation error study: simulate truth, fit margins and
// dependence, compare the spatial estimate (method 1) and the
// single-station variance (method 2) against the oracle value under the
// true parameters. Failed replicates are kept in `rows` with their error
// text and excluded from the MAPE aggregation.
StudyResult run_study(const StudyConfig& config);

}  // namespace wderiv::cli
