#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "incast/targets.hpp"

namespace incast {

enum class Target { peak_week, peak_incidence, total_incidence };

inline const char* target_name(Target t) {
  switch (t) {
    case Target::peak_week: return "peak_week";
    case Target::peak_incidence: return "peak_incidence";
    case Target::total_incidence: return "total_incidence";
  }
  return "?";
}

/// Realized season targets.
struct TrueTargets {
  int peak_week = 1;  // earliest week on ties
  double peak_incidence = 0.0;
  double total_incidence = 0.0;
};

TrueTargets true_targets(std::span<const double> season_counts);

/**
 * Log of the probability mass in the bucket containing the truth;
 * -infinity on an empty bucket. `clamp_floor` > 0 substitutes a
 * probability floor for robustness analyses (off by default). Throws when
 * the truth lies outside the bucketed range (negative counts, week outside
 * 1..52).
 */
double log_score(const TargetDistribution& dist, Target target, double truth,
                 double clamp_floor = 0.0);

struct ScoreRow {
  std::string method;
  std::string locale;
  std::string target;
  std::string season;
  int week = 0;
  double log_score = 0.0;
  double abs_error = 0.0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
};

struct MethodSummary {
  std::string method;
  std::string locale;
  std::string target;
  double avg_score = 0.0;  // -infinity propagates
  double avg_rank = 0.0;   // competition ranks, higher score = higher rank
  double mae = 0.0;
  long n = 0;
};

/// Per-(method, locale, target) aggregation over a common (season, week)
/// grid: plain mean score, mean of per-(season, week) ranks with ties
/// sharing the mean rank, and mean absolute error. Throws if the methods
/// were not scored on the same grid.
std::vector<MethodSummary> mae_and_ranks(const ScoreTable& table);

/// Weighted empirical CDF of the Monte Carlo target samples at the truth.
double pit(const Eigen::VectorXd& samples, const Eigen::VectorXd& weights,
           double truth);

struct PitRecord {
  std::string method;
  std::string locale;
  std::string target;
  std::string season;
  int week = 0;
  double u = 0.0;
};

void write_scores_csv(const ScoreTable& table, const std::string& path);
ScoreTable read_scores_csv(const std::string& path);
void write_pit_csv(const std::vector<PitRecord>& records,
                   const std::string& path);
std::vector<PitRecord> read_pit_csv(const std::string& path);

}  // namespace incast
