#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "wderiv/gev.hpp"
#include "wderiv/rng.hpp"
#include "wderiv/spatial.hpp"

namespace testutil {

// Composite Simpson rule; n is halved-interval count and must be even.
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int n = 2000) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

inline double mixed_fd(const std::function<double(double, double)>& F,
                       double x, double y, double hx, double hy) {
  return (F(x + hx, y + hy) - F(x + hx, y - hy) - F(x - hx, y + hy) +
          F(x - hx, y - hy)) /
         (4.0 * hx * hy);
}

inline double central_fd(const std::function<double(double)>& f, double x,
                         double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("wderiv_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Daily CSV whose summer block maxima follow dependent GEV margins: the
// joint annual maxima come from a Schlather field, every other summer day
// sits strictly below that year's maximum.
inline void write_station_days(std::ostream& os, const std::string& station,
                               int year, double annual_max, wderiv::Rng& rng) {
  static const int days_in[] = {30, 31, 31};
  for (int m = 0; m < 3; ++m) {
    for (int d = 1; d <= days_in[m]; ++d) {
      const bool peak = (m == 1 && d == 15);
      const double v = peak ? annual_max
                            : annual_max - 0.5 - 10.0 * rng.uniform();
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, m + 6, d);
      os << station << ',' << buf << ',' << v << '\n';
    }
  }
}

struct SyntheticPanel {
  wderiv::spatial::SiteSet sites;
  std::vector<wderiv::gev::GevParams> margins;
  std::filesystem::path daily_csv;
  std::filesystem::path sites_csv;
  int first_year = 1951;
  int n_years = 60;
};

inline SyntheticPanel make_panel(const std::filesystem::path& dir,
                                 std::uint64_t seed, int n_years = 60) {
  namespace sp = wderiv::spatial;
  SyntheticPanel p;
  p.n_years = n_years;
  p.sites.sites = {{0.0, 0.0, "alpha"}, {2.0, 0.0, "bravo"},
                   {0.0, 3.0, "charlie"}};
  p.margins = {{110.0, 2.0, -0.1}, {108.0, 1.8, -0.05}, {112.0, 2.2, -0.12}};

  const sp::CorrelationModel model{sp::CorrelationFamily::whittle_matern, 2.0,
                                   1.0};
  const sp::EventMatrix unit = sp::simulate_schlather(
      p.sites, model, static_cast<std::size_t>(n_years), seed);

  p.daily_csv = dir / "daily.csv";
  std::ofstream os(p.daily_csv);
  os << "station,date,value\n";
  wderiv::Rng filler(wderiv::child_seed(seed, 777));
  for (std::size_t k = 0; k < p.sites.size(); ++k) {
    for (int n = 0; n < n_years; ++n) {
      const double u = unit.at(static_cast<std::size_t>(n), k);
      const double m = wderiv::gev::from_unit_frechet(u, p.margins[k]);
      write_station_days(os, p.sites.sites[k].label, p.first_year + n, m,
                         filler);
    }
  }
  os.close();

  p.sites_csv = dir / "sites.csv";
  std::ofstream ss(p.sites_csv);
  ss << "station,x,y\n";
  for (const sp::Site& s : p.sites.sites)
    ss << s.label << ',' << s.x << ',' << s.y << '\n';
  return p;
}

}  // namespace testutil
