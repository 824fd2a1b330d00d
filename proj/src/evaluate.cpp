#include "incast/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "incast/csv.hpp"
#include "incast/ingest.hpp"

namespace incast {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

TrueTargets true_targets(std::span<const double> season_counts) {
  TrueTargets t;
  double peak = -1.0;
  for (size_t w = 0; w < season_counts.size(); ++w) {
    t.total_incidence += season_counts[w];
    if (season_counts[w] > peak) {
      peak = season_counts[w];
      t.peak_week = static_cast<int>(w) + 1;
    }
  }
  t.peak_incidence = peak;
  return t;
}

double log_score(const TargetDistribution& dist, Target target, double truth,
                 double clamp_floor) {
  double p = 0.0;
  switch (target) {
    case Target::peak_week: {
      const int week = static_cast<int>(truth);
      if (week < 1 || week > kSeasonWeeks || week != truth)
        throw std::invalid_argument("log_score: peak week outside 1..52");
      p = dist.peak_week_prob(week - 1);
      break;
    }
    case Target::peak_incidence:
      if (truth < 0.0)
        throw std::invalid_argument("log_score: negative peak incidence");
      p = dist.peak_incidence.prob_of(truth);
      break;
    case Target::total_incidence:
      if (truth < 0.0)
        throw std::invalid_argument("log_score: negative total incidence");
      p = dist.total_incidence.prob_of(truth);
      break;
  }
  if (clamp_floor > 0.0) p = std::max(p, clamp_floor);
  return p > 0.0 ? std::log(p) : kNegInf;
}

std::vector<MethodSummary> mae_and_ranks(const ScoreTable& table) {
  // Group rows by (locale, target); within a group, grid = (season, week).
  struct Key {
    std::string locale, target;
    auto operator<=>(const Key&) const = default;
  };
  struct Cell {
    std::string method;
    double score;
    double abs_error;
  };
  std::map<Key, std::map<std::pair<std::string, int>, std::vector<Cell>>> grid;
  std::map<Key, std::set<std::string>> methods;
  for (const auto& r : table.rows) {
    grid[{r.locale, r.target}][{r.season, r.week}].push_back(
        {r.method, r.log_score, r.abs_error});
    methods[{r.locale, r.target}].insert(r.method);
  }

  std::vector<MethodSummary> out;
  for (const auto& [key, cells] : grid) {
    const auto& meths = methods[key];
    struct Acc {
      double score_sum = 0.0;
      double rank_sum = 0.0;
      double abs_sum = 0.0;
      long n = 0;
    };
    std::map<std::string, Acc> acc;

    for (const auto& [when, entries] : cells) {
      if (entries.size() != meths.size())
        throw std::invalid_argument(
            "mae_and_ranks: methods not scored on the same (season, week) "
            "grid at season " +
            when.first + " week " + std::to_string(when.second));
      // Competition ranks: ascending score order, ties share the mean rank.
      std::vector<size_t> order(entries.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return entries[a].score < entries[b].score;
      });
      std::vector<double> rank(entries.size());
      size_t i = 0;
      while (i < order.size()) {
        size_t k = i;
        while (k + 1 < order.size() &&
               !(entries[order[i]].score < entries[order[k + 1]].score))
          ++k;
        const double mean_rank = 0.5 * static_cast<double>(i + k) + 1.0;
        for (size_t q = i; q <= k; ++q) rank[order[q]] = mean_rank;
        i = k + 1;
      }
      for (size_t q = 0; q < entries.size(); ++q) {
        Acc& a = acc[entries[q].method];
        a.score_sum += entries[q].score;
        a.rank_sum += rank[q];
        a.abs_sum += entries[q].abs_error;
        a.n += 1;
      }
    }

    for (const auto& [method, a] : acc) {
      MethodSummary s;
      s.method = method;
      s.locale = key.locale;
      s.target = key.target;
      s.avg_score = a.score_sum / static_cast<double>(a.n);
      s.avg_rank = a.rank_sum / static_cast<double>(a.n);
      s.mae = a.abs_sum / static_cast<double>(a.n);
      s.n = a.n;
      out.push_back(std::move(s));
    }
  }
  return out;
}

double pit(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights,
           double truth) {
  if (samples.size() < 1)
    throw std::invalid_argument("pit: need at least one sample");
  double below = 0.0, total = 0.0;
  for (long i = 0; i < samples.size(); ++i) {
    total += weights(i);
    if (samples(i) <= truth) below += weights(i);
  }
  return below / total;
}

namespace {

std::string score_to_cell(double v) {
  if (v == kNegInf) return "-inf";
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

double cell_to_score(const std::string& s) {
  if (s == "-inf" || s == "-Inf") return kNegInf;
  return std::stod(s);
}

}  // namespace

void write_scores_csv(const ScoreTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "method,locale,target,season,week,log_score,abs_error\n";
  for (const auto& r : table.rows)
    out << r.method << ',' << r.locale << ',' << r.target << ',' << r.season
        << ',' << r.week << ',' << score_to_cell(r.log_score) << ','
        << score_to_cell(r.abs_error) << '\n';
}

ScoreTable read_scores_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int cm = t.column("method"), cl = t.column("locale"),
            ct = t.column("target"), cs = t.column("season"),
            cw = t.column("week"), cls = t.column("log_score"),
            ca = t.column("abs_error");
  if (cm < 0 || cl < 0 || ct < 0 || cs < 0 || cw < 0 || cls < 0 || ca < 0)
    throw std::runtime_error(path + ": not a scores csv");
  ScoreTable table;
  for (const auto& row : t.rows)
    table.rows.push_back({row[cm], row[cl], row[ct], row[cs],
                          std::stoi(row[cw]), cell_to_score(row[cls]),
                          cell_to_score(row[ca])});
  return table;
}

void write_pit_csv(const std::vector<PitRecord>& records,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "method,locale,target,season,week,pit\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.method << ',' << r.locale << ',' << r.target << ',' << r.season
        << ',' << r.week << ',' << r.u << '\n';
}

std::vector<PitRecord> read_pit_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int cm = t.column("method"), cl = t.column("locale"),
            ct = t.column("target"), cs = t.column("season"),
            cw = t.column("week"), cu = t.column("pit");
  if (cm < 0 || cl < 0 || ct < 0 || cs < 0 || cw < 0 || cu < 0)
    throw std::runtime_error(path + ": not a pit csv");
  std::vector<PitRecord> out;
  for (const auto& row : t.rows)
    out.push_back({row[cm], row[cl], row[ct], row[cs], std::stoi(row[cw]),
                   std::stod(row[cu])});
  return out;
}

}  // namespace incast
