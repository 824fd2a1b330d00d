#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "incast/features.hpp"
#include "incast/gp.hpp"
#include "incast/targets.hpp"

namespace incast {

/// Regime slots are indexed 0..2 for labels -1, 0, +1.
inline constexpr std::array<int, 3> kRegimeLabels{-1, 0, 1};

/// Latent severity per regime plus the regime weight simplex, carried
/// across the forecasting season. Latents start at their noise pairings.
struct LatentState {
  std::array<double, 3> x4_hat{-1.0, 0.0, 1.0};
  std::array<double, 3> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  int week = 0;
};

struct RegimePrior {
  std::array<double, 3> p{1.0 / 3, 1.0 / 3, 1.0 / 3};
};

enum class PriorMode { uniform, x3_linear };

struct LatentConfig {
  double window = 0.25;      // latent search halfwidth per update
  int grid_points = 51;
  bool optimize = true;      // false = keep the noise-pairing values
  bool include_noise = true; // observation-scale trajectories
};

/**
 * Start-of-season regime prior. Uniform mode returns equal thirds. The
 * x3-linear mode regresses each historical season's transformed peak on its
 * starting level, classifies the fitted peak at the new season's level, and
 * gives that regime half the mass with the rest split evenly. Fewer than 3
 * seasons or a degenerate regression falls back to uniform with a warning.
 */
RegimePrior initial_prior(const SeasonSeries& series, double x3_new,
                          PriorMode mode, const SeverityThresholds& thresholds);

/// One latent update for `regime_label`: grid search of the predictive log
/// likelihood over the +-window around the previous value, refined by
/// golden section. `new_X_raw` rows are the observed new-season weeks; the
/// severity column is overwritten by each candidate. Ties break toward the
/// previous value; j = 0 rows returns the previous value unchanged.
double update_latent(const HetGPModel& model, const LatentState& state,
                     const Eigen::MatrixXd& new_X_raw,
                     const Eigen::VectorXd& new_y, int regime_label,
                     const LatentConfig& cfg = {});

/// Unit-information damping: weights proportional to
/// prior^(1/(j+1)) * exp(pll). Isolated so the damping schedule can be
/// swapped out. All-(-inf) plls fall back to uniform with a warning.
std::array<double, 3> damped_weights(const RegimePrior& prior,
                                     const std::array<double, 3>& pll_values,
                                     long observed_weeks);

/// PLL-based regime weights at the state's current latents.
std::array<double, 3> regime_weights(const HetGPModel& model,
                                     const LatentState& state,
                                     const RegimePrior& prior,
                                     const Eigen::MatrixXd& new_X_raw,
                                     const Eigen::VectorXd& new_y);

struct ForecastWeekResult {
  ForecastEnsemble ensemble;       // pooled, back-transformed counts
  LatentState state;               // after this week's updates
  std::array<double, 3> pll{};     // at the optimized latents
};

/**
 * One forecast week: per regime, optimize the latent severity, evaluate the
 * PLL, condition the week-0 model on the observed new-season rows (severity
 * forced to the regime's label), and draw ceil(m * weight) joint 52-week
 * trajectories at the optimized latent. Draws are pooled with per-row
 * weights weight/count and back-transformed. Deterministic given the seed.
 */
ForecastWeekResult forecast_week(const FeatureMatrix& history_fm,
                                 const HetGPModel& model,
                                 std::span<const double> new_observed,
                                 const RegimePrior& prior,
                                 const LatentState& state, int week,
                                 long m_draws, std::uint64_t seed,
                                 const LatentConfig& cfg = {});

}  // namespace incast
