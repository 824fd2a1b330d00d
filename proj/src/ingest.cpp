#include "incast/ingest.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "incast/csv.hpp"
#include "incast/transform.hpp"

namespace incast {

namespace {

// Shortest decimal string that round-trips to the same double.
std::string format_number(double v) {
  char buf[40];
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

bool looks_like_year_pair(const std::string& label, int& first_year) {
  if (label.size() != 9 || label[4] != '/') return false;
  for (size_t i = 0; i < label.size(); ++i) {
    if (i == 4) continue;
    if (!std::isdigit(static_cast<unsigned char>(label[i]))) return false;
  }
  first_year = std::stoi(label.substr(0, 4));
  return true;
}

}  // namespace

int CovariateFrame::column(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

const std::vector<std::optional<double>>& CovariateFrame::at(
    const std::string& name) const {
  const int idx = column(name);
  if (idx < 0) throw std::runtime_error("no covariate column '" + name + "'");
  return columns[idx];
}

SeasonSeries load_incidence(const std::string& path, const std::string& locale,
                            const IncidenceColumns& cols) {
  const CsvTable table = read_csv(path);
  const int c_season = table.column(cols.season);
  const int c_week = table.column(cols.week);
  const int c_cases = table.column(cols.cases);
  if (c_season < 0 || c_week < 0 || c_cases < 0)
    throw std::runtime_error(path + ": missing required column(s) " +
                             cols.season + "/" + cols.week + "/" + cols.cases);

  SeasonSeries series;
  series.locale = locale;
  std::map<std::string, size_t> season_index;
  std::vector<std::map<int, double>> weeks;  // per season: week -> count

  for (size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path + ": row " + std::to_string(r + 2);
    const std::string& label = row[c_season];
    const auto week_v = parse_cell(row[c_week], where + " (" + cols.week + ")");
    const auto cases_v =
        parse_cell(row[c_cases], where + " (" + cols.cases + ")");
    if (!week_v || !cases_v)
      throw std::runtime_error(where + ": missing week or case count");
    const int week = static_cast<int>(*week_v);
    if (week != *week_v || week < 1 || week > 53)
      throw std::runtime_error(where + ": season week must be in 1..53");
    if (*cases_v < 0.0)
      throw std::runtime_error(where + ": negative case count");

    auto [it, inserted] = season_index.try_emplace(label, weeks.size());
    if (inserted) {
      series.season_labels.push_back(label);
      weeks.emplace_back();
    }
    auto& season = weeks[it->second];
    if (!season.emplace(week, *cases_v).second)
      throw std::runtime_error(where + ": duplicate week " +
                               std::to_string(week) + " in season " + label);
  }
  if (weeks.empty()) throw std::runtime_error(path + ": no data rows");

  // Chronology check when labels are year pairs like 1990/1991.
  int prev_year = 0;
  bool checking = true;
  for (size_t s = 0; s < series.season_labels.size() && checking; ++s) {
    int year = 0;
    if (!looks_like_year_pair(series.season_labels[s], year)) {
      checking = false;
      break;
    }
    if (s > 0 && year != prev_year + 1)
      throw std::runtime_error(path + ": seasons not contiguous at " +
                               series.season_labels[s]);
    prev_year = year;
  }

  for (size_t s = 0; s < weeks.size(); ++s) {
    std::vector<double> season(kSeasonWeeks, 0.0);
    for (int w = 1; w <= kSeasonWeeks; ++w) {
      auto it = weeks[s].find(w);
      if (it == weeks[s].end())
        throw std::runtime_error(path + ": season " + series.season_labels[s] +
                                 " is missing week " + std::to_string(w));
      season[w - 1] = it->second;
    }
    // Week 53, when present, folds into week 52; totals are conserved.
    if (auto it = weeks[s].find(53); it != weeks[s].end())
      season[kSeasonWeeks - 1] += it->second;

    std::vector<double> trans(kSeasonWeeks);
    for (int w = 0; w < kSeasonWeeks; ++w)
      trans[w] = forward_transform(season[w]);
    series.counts.push_back(std::move(season));
    series.transformed.push_back(std::move(trans));
  }
  return series;
}

CovariateFrame load_covariates(const std::string& path,
                               const std::vector<std::string>& interpolate) {
  const CsvTable table = read_csv(path);
  const size_t n = table.rows.size();
  if (n == 0) throw std::runtime_error(path + ": no data rows");

  CovariateFrame frame;
  for (size_t c = 0; c < table.header.size(); ++c) {
    const std::string& name = table.header[c];
    if (name == "week" || name == "week_index") {
      for (size_t r = 0; r < n; ++r) {
        const auto v = parse_cell(table.rows[r][c], path);
        if (!v || *v != static_cast<double>(r + 1))
          throw std::runtime_error(path + ": row " + std::to_string(r + 2) +
                                   ": week index misaligned (expected " +
                                   std::to_string(r + 1) + ")");
      }
      continue;
    }
    std::vector<std::optional<double>> col(n);
    for (size_t r = 0; r < n; ++r)
      col[r] = parse_cell(table.rows[r][c],
                          path + ": row " + std::to_string(r + 2) + " (" +
                              name + ")");
    frame.names.push_back(name);
    frame.columns.push_back(std::move(col));
  }

  for (const auto& name : interpolate) {
    const int idx = frame.column(name);
    if (idx < 0) continue;
    auto& col = frame.columns[idx];
    std::vector<size_t> anchors;
    for (size_t r = 0; r < n; ++r)
      if (col[r]) anchors.push_back(r);
    if (anchors.size() < 2) continue;
    for (size_t r = 0; r < n; ++r) {
      if (col[r]) continue;
      // Nearest anchor segment; ends extrapolate linearly.
      size_t hi = 0;
      while (hi + 1 < anchors.size() && anchors[hi + 1] < r) ++hi;
      if (anchors[hi] < r && hi + 1 < anchors.size()) ++hi;
      const size_t a = anchors[hi == 0 ? 0 : hi - 1];
      const size_t b = anchors[hi == 0 ? 1 : hi];
      const double va = *col[a], vb = *col[b];
      const double t = (static_cast<double>(r) - static_cast<double>(a)) /
                       (static_cast<double>(b) - static_cast<double>(a));
      col[r] = va + t * (vb - va);
    }
  }
  return frame;
}

CovariateFrame impute_missing(const CovariateFrame& frame,
                              const std::string& column,
                              double lengthscale_weeks) {
  const int idx = frame.column(column);
  if (idx < 0) throw std::runtime_error("no covariate column '" + column + "'");
  const auto& col = frame.columns[idx];

  std::vector<double> t_obs, y_obs;
  std::vector<size_t> t_miss;
  for (size_t r = 0; r < col.size(); ++r) {
    if (col[r]) {
      t_obs.push_back(static_cast<double>(r));
      y_obs.push_back(*col[r]);
    } else {
      t_miss.push_back(r);
    }
  }
  if (t_obs.empty())
    throw std::runtime_error("impute_missing: column '" + column +
                             "' has no observed values");
  if (t_miss.empty()) return frame;
  if (t_obs.size() < 10)
    throw std::runtime_error("impute_missing: need >= 10 observed values");

  const size_t m = t_obs.size();
  const double theta = lengthscale_weeks * lengthscale_weeks;
  const double mean =
      std::accumulate(y_obs.begin(), y_obs.end(), 0.0) / static_cast<double>(m);

  Eigen::MatrixXd K(m, m);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j <= i; ++j) {
      const double d = t_obs[i] - t_obs[j];
      K(i, j) = K(j, i) = std::exp(-d * d / theta);
    }
  K.diagonal().array() += 1e-6;
  Eigen::VectorXd resid(m);
  for (size_t i = 0; i < m; ++i) resid(i) = y_obs[i] - mean;
  const Eigen::VectorXd alpha = K.llt().solve(resid);

  CovariateFrame out = frame;
  for (size_t r : t_miss) {
    double pred = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const double d = static_cast<double>(r) - t_obs[i];
      pred += std::exp(-d * d / theta) * alpha(i);
    }
    out.columns[idx][r] = mean + pred;
  }
  return out;
}

void save_incidence(const SeasonSeries& series, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "season,season_week,total_cases\n";
  for (size_t s = 0; s < series.n_seasons(); ++s)
    for (int w = 0; w < kSeasonWeeks; ++w)
      out << series.season_labels[s] << ',' << (w + 1) << ','
          << format_number(series.counts[s][w]) << '\n';
}

void save_covariates(const CovariateFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  std::vector<size_t> order(frame.names.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return frame.names[a] < frame.names[b];
  });
  out << "week";
  for (size_t c : order) out << ',' << frame.names[c];
  out << '\n';
  for (size_t r = 0; r < frame.n_weeks(); ++r) {
    out << (r + 1);
    for (size_t c : order) {
      const auto& v = frame.columns[c][r];
      out << ',' << (v ? format_number(*v) : "NA");
    }
    out << '\n';
  }
}

}  // namespace incast
