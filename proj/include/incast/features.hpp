#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "incast/ingest.hpp"

namespace incast {

// Design-matrix column indices.
inline constexpr int kColWeek = 0;      // season-time, 1..52
inline constexpr int kColSine = 1;      // seasonal sine wave
inline constexpr int kColLevel = 2;     // starting level, transformed scale
inline constexpr int kColSeverity = 3;  // {-1, 0, +1}; latent when forecasting

/// Per-locale severity cut points on the raw count scale.
struct SeverityThresholds {
  double mild_max;    // a season with weekly max strictly below this is mild
  double severe_min;  // a season with weekly max strictly above this is severe
};

/**
 * Training design for the GP: week index, sine wave, previous-season final
 * level, and the severity label, with the transformed response alongside.
 */
struct FeatureMatrix {
  Eigen::MatrixXd X;  // n x 4
  Eigen::VectorXd y;  // transformed incidence
  std::vector<int> season_of;
  double sine_phase = 0.0;
};

/// Rows for an unfolding season: the observed prefix appended to training
/// plus prediction rows for all 52 season weeks.
struct ForecastDesign {
  Eigen::MatrixXd train_X;
  Eigen::VectorXd train_y;
  Eigen::MatrixXd predict_X;  // 52 x 4
};

double sine_wave(int week, double phase);

/// +1 above severe_min, -1 strictly below mild_max on every week, 0 between;
/// comparisons are strict so threshold ties land in the middle class.
int classify_severity(std::span<const double> season_counts,
                      const SeverityThresholds& thresholds);

/// One row per (season, week). The starting level of season s is the final
/// transformed value of season s-1; the first season uses its own first
/// value.
FeatureMatrix build_features(const SeasonSeries& series,
                             const SeverityThresholds& thresholds,
                             double sine_phase = 0.0);

/**
 * Design for forecasting an unfolding season. `new_observed` holds the
 * season's transformed values observed so far; they join the training rows.
 * Prediction rows always cover all 52 weeks so targets can be sampled
 * jointly, carrying x4 = latent_x4 and the new season's starting level.
 * Appended training rows carry `train_x4` when given (the regime label in
 * the heteroskedastic scheme), otherwise latent_x4.
 */
ForecastDesign extend_for_forecast(const FeatureMatrix& fm,
                                   std::span<const double> new_observed,
                                   double latent_x4,
                                   std::optional<double> train_x4 = {});

}  // namespace incast
