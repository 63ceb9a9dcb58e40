#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wderiv/gev.hpp"

namespace wderiv::data {

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  bool operator==(const Date&) const = default;
};

bool valid_date(const Date& d);

struct DailyRecord {
  std::string station;
  Date date;
  double value = 0.0;
  bool missing = false;
};

// Month-day window within a calendar year; the default covers the 92 days of
// June through August.
struct SeasonWindow {
  int start_month = 6;
  int start_day = 1;
  int end_month = 8;
  int end_day = 31;

  void validate() const;
  bool contains(const Date& d) const;
  int day_count(int year) const;
};

struct BlockMaxima {
  std::string station;
  std::vector<gev::YearValue> maxima;        // strictly increasing years
  std::vector<int> days_present;             // aligned with maxima
  SeasonWindow window;
  std::vector<std::string> notes;            // dropped-year notices
};

// Input format: header `station,date,value`, ISO dates, -9999 marks a
// missing observation.
std::vector<DailyRecord> parse_station_csv(const std::string& path);

// Per-station seasonal maxima over present days. Years whose present-day
// fraction falls below `completeness` are dropped with a note. Stations are
// returned in order of first appearance.
std::vector<BlockMaxima> block_maxima(const std::vector<DailyRecord>& records,
                                      const SeasonWindow& window = {},
                                      double completeness = 0.9);

struct TrendTest {
  double slope = 0.0;  // per year
  double intercept = 0.0;
  double p_value = 0.0;
  std::size_t n = 0;
};

// OLS of the maxima on year with a two-sided t-test on the slope.
TrendTest trend_test(const BlockMaxima& maxima);

struct Acf {
  std::vector<double> r;  // lags 0..max_lag
  double band = 0.0;      // +-1.96/sqrt(n) white-noise band
};

Acf acf(const std::vector<double>& series, std::size_t max_lag);

struct GofTables {
  // (i/(n+1), G(m_(i))) for the sorted maxima
  std::vector<std::pair<double, double>> pp;
  // (G^-1(i/(n+1)), m_(i))
  std::vector<std::pair<double, double>> qq;
  // (T, return level) on a log grid T in [1.1, 1000]
  std::vector<std::pair<double, double>> return_levels;
};

// For trended fits the probability transform uses each observation's own
// year; the quantile and return-level columns fix the location at the mean
// year of the sample.
GofTables gof_tables(const gev::FittedGev& fit, const BlockMaxima& maxima);

}  // namespace wderiv::data
