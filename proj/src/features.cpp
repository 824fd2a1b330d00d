#include "incast/features.hpp"

#include <cmath>
#include <stdexcept>

namespace incast {

double sine_wave(int week, double phase) {
  return std::sin(2.0 * M_PI * (week - 1) / static_cast<double>(kSeasonWeeks) +
                  phase);
}

int classify_severity(std::span<const double> season_counts,
                      const SeverityThresholds& thresholds) {
  if (season_counts.size() != kSeasonWeeks)
    throw std::invalid_argument("classify_severity: want 52 weekly counts");
  double max = season_counts[0];
  for (double v : season_counts) max = std::max(max, v);
  if (max > thresholds.severe_min) return 1;
  if (max < thresholds.mild_max) return -1;
  return 0;
}

FeatureMatrix build_features(const SeasonSeries& series,
                             const SeverityThresholds& thresholds,
                             double sine_phase) {
  const size_t n_seasons = series.n_seasons();
  if (n_seasons == 0)
    throw std::invalid_argument("build_features: empty series");

  FeatureMatrix fm;
  fm.sine_phase = sine_phase;
  const long n = static_cast<long>(n_seasons) * kSeasonWeeks;
  fm.X.resize(n, 4);
  fm.y.resize(n);
  fm.season_of.resize(n);

  long row = 0;
  for (size_t s = 0; s < n_seasons; ++s) {
    const double level = s == 0 ? series.transformed[0][0]
                                : series.transformed[s - 1][kSeasonWeeks - 1];
    const int severity = classify_severity(series.counts[s], thresholds);
    for (int w = 1; w <= kSeasonWeeks; ++w, ++row) {
      fm.X(row, kColWeek) = w;
      fm.X(row, kColSine) = sine_wave(w, sine_phase);
      fm.X(row, kColLevel) = level;
      fm.X(row, kColSeverity) = severity;
      fm.y(row) = series.transformed[s][w - 1];
      fm.season_of[row] = static_cast<int>(s);
    }
  }
  return fm;
}

ForecastDesign extend_for_forecast(const FeatureMatrix& fm,
                                   std::span<const double> new_observed,
                                   double latent_x4,
                                   std::optional<double> train_x4) {
  if (!std::isfinite(latent_x4))
    throw std::invalid_argument("extend_for_forecast: latent_x4 not finite");
  const long n = fm.X.rows();
  if (n == 0) throw std::invalid_argument("extend_for_forecast: empty matrix");
  const long j = static_cast<long>(new_observed.size());
  if (j > kSeasonWeeks)
    throw std::invalid_argument("extend_for_forecast: > 52 observed weeks");

  // New season's starting level: final transformed value of the last
  // historical season, which is the last training response.
  const double level = fm.y(n - 1);
  const double appended_x4 = train_x4.value_or(latent_x4);

  ForecastDesign d;
  d.train_X.resize(n + j, 4);
  d.train_y.resize(n + j);
  d.train_X.topRows(n) = fm.X;
  d.train_y.head(n) = fm.y;
  for (long i = 0; i < j; ++i) {
    const int w = static_cast<int>(i) + 1;
    d.train_X(n + i, kColWeek) = w;
    d.train_X(n + i, kColSine) = sine_wave(w, fm.sine_phase);
    d.train_X(n + i, kColLevel) = level;
    d.train_X(n + i, kColSeverity) = appended_x4;
    d.train_y(n + i) = new_observed[i];
  }

  d.predict_X.resize(kSeasonWeeks, 4);
  for (int w = 1; w <= kSeasonWeeks; ++w) {
    d.predict_X(w - 1, kColWeek) = w;
    d.predict_X(w - 1, kColSine) = sine_wave(w, fm.sine_phase);
    d.predict_X(w - 1, kColLevel) = level;
    d.predict_X(w - 1, kColSeverity) = latent_x4;
  }
  return d;
}

}  // namespace incast
