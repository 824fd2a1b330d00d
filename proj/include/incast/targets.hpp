#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>

#include "json.hpp"

namespace incast {

/// Monte Carlo season trajectories on the original count scale, with
/// per-trajectory weights (uniform unless regimes or methods were pooled).
struct ForecastEnsemble {
  Eigen::MatrixXd trajectories;  // m x weeks, nonnegative
  Eigen::VectorXd weights;       // sums to 1
  std::string locale;
  std::string season_label;
  int forecast_week = 0;

  long draws() const { return trajectories.rows(); }
  long weeks() const { return trajectories.cols(); }
};

/// Equal-width bucketization for the incidence targets; peak week always
/// uses the 52 single-week buckets. `max_buckets` > 0 collapses everything
/// at or above the last lower bound into one open-ended top bucket.
struct BucketSpec {
  double peak_width = 50.0;
  double total_width = 1000.0;
  int peak_max_buckets = 0;
  int total_max_buckets = 0;
};

/// Bucketized empirical distribution over [0, inf).
struct Histogram {
  double width = 1.0;
  int max_buckets = 0;             // 0 = unbounded
  std::vector<double> prob;        // bucket i covers [i*width, (i+1)*width)

  int bucket_of(double v) const;
  double prob_of(double v) const;  // mass of the bucket containing v
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct TargetIntervals {
  Interval peak_week, peak_incidence, total_incidence;
};

/**
 * Discrete distributions over the three season targets, bucketized for
 * scoring, alongside point estimates (modal week; weighted medians for the
 * incidence targets) and the raw weighted target samples used for
 * quantiles and PIT.
 */
struct TargetDistribution {
  Eigen::VectorXd peak_week_prob;  // 52 entries
  Histogram peak_incidence;
  Histogram total_incidence;
  int point_peak_week = 1;
  double point_peak_incidence = 0.0;
  double point_total_incidence = 0.0;

  Eigen::VectorXd sample_peak_week;
  Eigen::VectorXd sample_peak_incidence;
  Eigen::VectorXd sample_total_incidence;
  Eigen::VectorXd sample_weights;
};

/// Pins the already-observed weeks: columns 1..observed.size() of every
/// trajectory are replaced by the observed counts, so realized history
/// carries no forecast uncertainty.
ForecastEnsemble substitute_observed(const ForecastEnsemble& ens,
                                     std::span<const double> observed);

/// Per-trajectory identification of peak week (earliest week on ties),
/// peak incidence and 52-week total, reduced to weighted distributions.
TargetDistribution extract_targets(const ForecastEnsemble& ens,
                                   const BucketSpec& buckets);

/// Pooling rule for the two-method hybrid: GP-only while the GLM is
/// unstable (fewer than `min_history_years` training seasons, or one of
/// the first `min_forecast_index` four-weekly forecasts), equal-weight
/// pooling of both ensembles afterwards.
ForecastEnsemble mix_hybrid(const ForecastEnsemble& gp,
                            const ForecastEnsemble& glm, int history_years,
                            int forecast_index, int min_history_years = 7,
                            int min_forecast_index = 3);

/// Central weighted-quantile interval per target. Note the true
/// uncertainty sets may be disconnected; the interval is a display/summary
/// convention, not the full distribution.
TargetIntervals interval(const TargetDistribution& dist, double level);

/// Weighted empirical quantile (smallest sample value whose cumulative
/// weight reaches q).
double weighted_quantile(const Eigen::VectorXd& values,
                         const Eigen::VectorXd& weights, double q);

/// JSON document: per target an array of [bucket lower bound, probability]
/// pairs plus point estimate and central interval.
nlohmann::ordered_json target_distribution_json(
    const TargetDistribution& dist, const ForecastEnsemble& ens,
    const std::string& method, const std::string& provenance,
    double interval_level);

}  // namespace incast
