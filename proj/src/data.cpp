#include "wderiv/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "wderiv/errors.hpp"

namespace wderiv::data {

namespace {

bool leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int year, int month) {
  static constexpr int kDays[12] = {31, 28, 31, 30, 31, 30,
                                    31, 31, 30, 31, 30, 31};
  if (month == 2 && leap_year(year)) return 29;
  return kDays[month - 1];
}

int day_of_year(const Date& d) {
  int doy = d.day;
  for (int m = 1; m < d.month; ++m) doy += days_in_month(d.year, m);
  return doy;
}

bool parse_int(std::string_view s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_iso_date(std::string_view s, Date& out) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  return parse_int(s.substr(0, 4), out.year) &&
         parse_int(s.substr(5, 2), out.month) &&
         parse_int(s.substr(8, 2), out.day) && valid_date(out);
}

bool parse_value(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

[[noreturn]] void row_error(std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << "line " << line << ": " << what;
  throw DataError(msg.str());
}

}  // namespace

bool valid_date(const Date& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 &&
         d.day <= days_in_month(d.year, d.month);
}

void SeasonWindow::validate() const {
  const auto ok = [](int month, int day) {
    return month >= 1 && month <= 12 && day >= 1 &&
           day <= days_in_month(2000, month);
  };
  if (!ok(start_month, start_day) || !ok(end_month, end_day))
    throw ConfigError("season window has an invalid month-day");
  if (std::pair(start_month, start_day) > std::pair(end_month, end_day))
    throw ConfigError("season window must not wrap the year end");
}

bool SeasonWindow::contains(const Date& d) const {
  const std::pair md(d.month, d.day);
  return md >= std::pair(start_month, start_day) &&
         md <= std::pair(end_month, end_day);
}

int SeasonWindow::day_count(int year) const {
  const Date a{year, start_month, start_day};
  const Date b{year, end_month, end_day};
  return day_of_year(b) - day_of_year(a) + 1;
}

std::vector<DailyRecord> parse_station_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "station,date,value")
    throw DataError(path + ": expected header `station,date,value`, got `" +
                    line + "`");

  std::vector<DailyRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos
                               ? std::string::npos
                               : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      row_error(lineno, "expected 3 comma-separated fields");

    DailyRecord rec;
    rec.station = line.substr(0, c1);
    if (rec.station.empty()) row_error(lineno, "empty station id");
    if (!parse_iso_date(
            std::string_view(line).substr(c1 + 1, c2 - c1 - 1), rec.date))
      row_error(lineno, "bad ISO date `" +
                            line.substr(c1 + 1, c2 - c1 - 1) + "`");
    const std::string value_field = line.substr(c2 + 1);
    if (!parse_value(value_field, rec.value))
      row_error(lineno, "non-numeric value `" + value_field + "`");
    if (rec.value == -9999.0) {
      rec.missing = true;
      rec.value = 0.0;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<BlockMaxima> block_maxima(const std::vector<DailyRecord>& records,
                                      const SeasonWindow& window,
                                      double completeness) {
  window.validate();
  if (!(completeness >= 0.0 && completeness <= 1.0))
    throw ConfigError("completeness must lie in [0, 1]");

  std::vector<std::string> order;
  std::map<std::string, std::vector<const DailyRecord*>> by_station;
  for (const DailyRecord& rec : records) {
    auto [it, inserted] = by_station.try_emplace(rec.station);
    if (inserted) order.push_back(rec.station);
    if (window.contains(rec.date)) it->second.push_back(&rec);
  }

  std::vector<BlockMaxima> out;
  out.reserve(order.size());
  for (const std::string& station : order) {
    std::vector<const DailyRecord*>& recs = by_station[station];
    std::sort(recs.begin(), recs.end(),
              [](const DailyRecord* a, const DailyRecord* b) {
                return std::tuple(a->date.year, a->date.month, a->date.day) <
                       std::tuple(b->date.year, b->date.month, b->date.day);
              });
    for (std::size_t i = 1; i < recs.size(); ++i)
      if (recs[i]->date == recs[i - 1]->date) {
        std::ostringstream msg;
        msg << station << ": duplicate record for " << recs[i]->date.year
            << "-" << recs[i]->date.month << "-" << recs[i]->date.day;
        throw DataError(msg.str());
      }

    BlockMaxima bm;
    bm.station = station;
    bm.window = window;

    std::map<int, std::pair<double, int>> per_year;  // year -> (max, present)
    for (const DailyRecord* rec : recs) {
      if (rec->missing) continue;
      auto [it, inserted] =
          per_year.try_emplace(rec->date.year, rec->value, 0);
      it->second.first = std::max(it->second.first, rec->value);
      ++it->second.second;
    }
    for (const auto& [year, agg] : per_year) {
      const double frac =
          static_cast<double>(agg.second) / window.day_count(year);
      if (frac < completeness) {
        std::ostringstream note;
        note << station << ": dropped year " << year << " (" << agg.second
             << "/" << window.day_count(year) << " days present)";
        bm.notes.push_back(note.str());
        continue;
      }
      bm.maxima.push_back({static_cast<double>(year), agg.first});
      bm.days_present.push_back(agg.second);
    }
    if (bm.maxima.empty())
      throw DataError(station + ": no usable years after completeness filter");
    out.push_back(std::move(bm));
  }
  if (out.empty()) throw DataError("no station records supplied");
  return out;
}

TrendTest trend_test(const BlockMaxima& maxima) {
  const std::size_t n = maxima.maxima.size();
  if (n < 3) throw DataError("trend test needs at least 3 years");

  double sx = 0.0;
  double sy = 0.0;
  for (const gev::YearValue& yv : maxima.maxima) {
    sx += yv.year;
    sy += yv.value;
  }
  const double xbar = sx / static_cast<double>(n);
  const double ybar = sy / static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (const gev::YearValue& yv : maxima.maxima) {
    sxx += (yv.year - xbar) * (yv.year - xbar);
    sxy += (yv.year - xbar) * (yv.value - ybar);
  }
  if (sxx == 0.0) throw DataError("trend test needs distinct years");

  TrendTest result;
  result.n = n;
  result.slope = sxy / sxx;
  result.intercept = ybar - result.slope * xbar;

  double rss = 0.0;
  for (const gev::YearValue& yv : maxima.maxima) {
    const double r = yv.value - result.intercept - result.slope * yv.year;
    rss += r * r;
  }
  const double se =
      std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  if (se == 0.0) {
    result.p_value = result.slope == 0.0 ? 1.0 : 0.0;
    return result;
  }
  const boost::math::students_t dist(static_cast<double>(n - 2));
  const double t = result.slope / se;
  result.p_value = 2.0 * boost::math::cdf(boost::math::complement(
                             dist, std::abs(t)));
  return result;
}

Acf acf(const std::vector<double>& series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n < 2) throw DataError("autocorrelation needs at least 2 points");
  if (max_lag >= n)
    throw ConfigError("max lag must be smaller than the series length");

  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double denom = 0.0;
  for (double v : series) denom += (v - mean) * (v - mean);
  if (denom == 0.0) throw DataError("autocorrelation of a constant series");

  Acf out;
  out.band = 1.96 / std::sqrt(static_cast<double>(n));
  out.r.resize(max_lag + 1);
  for (std::size_t h = 0; h <= max_lag; ++h) {
    double acc = 0.0;
    for (std::size_t t = 0; t + h < n; ++t)
      acc += (series[t] - mean) * (series[t + h] - mean);
    out.r[h] = acc / denom;
  }
  return out;
}

GofTables gof_tables(const gev::FittedGev& fit, const BlockMaxima& maxima) {
  const std::size_t n = maxima.maxima.size();
  if (n == 0) throw DataError("no maxima for goodness-of-fit tables");

  std::vector<double> u(n);
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    const gev::YearValue& yv = maxima.maxima[i];
    u[i] = gev::gev_cdf(yv.value, fit.params_at(yv.year));
    m[i] = yv.value;
  }
  std::sort(u.begin(), u.end());
  std::sort(m.begin(), m.end());

  const gev::GevParams center = fit.params_at(fit.year_center);
  GofTables out;
  out.pp.reserve(n);
  out.qq.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double q = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    out.pp.emplace_back(q, u[i]);
    out.qq.emplace_back(gev::gev_quantile(q, center), m[i]);
  }

  constexpr int kPoints = 60;
  const double t0 = 1.1;
  const double t1 = 1000.0;
  for (int i = 0; i < kPoints; ++i) {
    const double t =
        t0 * std::pow(t1 / t0, static_cast<double>(i) / (kPoints - 1));
    out.return_levels.emplace_back(t, gev::return_level(center, t));
  }
  return out;
}

}  // namespace wderiv::data
