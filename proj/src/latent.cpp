#include "incast/latent.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "incast/transform.hpp"

namespace incast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int regime_slot(int label) {
  if (label < -1 || label > 1)
    throw std::invalid_argument("severity label must be -1, 0 or +1");
  return label + 1;
}

}  // namespace

RegimePrior initial_prior(const SeasonSeries& series, double x3_new,
                          PriorMode mode,
                          const SeverityThresholds& thresholds) {
  RegimePrior prior;
  if (mode == PriorMode::uniform) return prior;

  const size_t n = series.n_seasons();
  if (n < 3) {
    std::cerr << "initial_prior: need >= 3 seasons for the x3-linear prior, "
                 "falling back to uniform\n";
    return prior;
  }
  // Transformed peak against starting level, one point per season.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t s = 0; s < n; ++s) {
    const double x3 = s == 0 ? series.transformed[0][0]
                             : series.transformed[s - 1][kSeasonWeeks - 1];
    const double peak =
        *std::max_element(series.transformed[s].begin(),
                          series.transformed[s].end());
    sx += x3;
    sy += peak;
    sxx += x3 * x3;
    sxy += x3 * peak;
  }
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  if (std::abs(denom) < 1e-12 * std::max(1.0, nn * sxx)) {
    std::cerr << "initial_prior: starting levels are degenerate, falling "
                 "back to uniform\n";
    return prior;
  }
  const double slope = (nn * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / nn;
  const double fitted_peak_counts =
      inverse_transform(intercept + slope * x3_new);

  int predicted = 0;
  if (fitted_peak_counts > thresholds.severe_min)
    predicted = 1;
  else if (fitted_peak_counts < thresholds.mild_max)
    predicted = -1;

  for (int r = 0; r < 3; ++r) prior.p[r] = 0.25;
  prior.p[regime_slot(predicted)] = 0.5;
  return prior;
}

double update_latent(const HetGPModel& model, const LatentState& state,
                     const Eigen::MatrixXd& new_X_raw,
                     const Eigen::VectorXd& new_y, int regime_label,
                     const LatentConfig& cfg) {
  const double prev = state.x4_hat[regime_slot(regime_label)];
  if (new_y.size() == 0 || !cfg.optimize || cfg.window <= 0.0) return prev;

  Eigen::MatrixXd X = new_X_raw;
  auto eval = [&](double candidate) {
    X.col(kColSeverity).setConstant(candidate);
    return pll(model, X, new_y, regime_label);
  };

  const double lo = prev - cfg.window, hi = prev + cfg.window;
  const int points = std::max(cfg.grid_points, 3);
  const double step = (hi - lo) / (points - 1);
  double best_x = prev, best_v = -kInf;
  for (int i = 0; i < points; ++i) {
    const double x = lo + i * step;
    const double v = eval(x);
    // Ties break toward the previous value.
    if (v > best_v ||
        (v == best_v && std::abs(x - prev) < std::abs(best_x - prev))) {
      best_v = v;
      best_x = x;
    }
  }

  // One golden-section refinement over the bracketing grid cells.
  constexpr double kGolden = 0.6180339887498949;
  double a = std::max(lo, best_x - step), b = std::min(hi, best_x + step);
  double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 25 && b - a > 1e-6; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = eval(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = eval(x1);
    }
  }
  const double refined = f1 > f2 ? x1 : x2;
  const double refined_v = std::max(f1, f2);
  return refined_v > best_v ? refined : best_x;
}

std::array<double, 3> damped_weights(const RegimePrior& prior,
                                     const std::array<double, 3>& pll_values,
                                     long observed_weeks) {
  const double exponent = 1.0 / static_cast<double>(observed_weeks + 1);
  std::array<double, 3> logw{};
  double max_logw = -kInf;
  for (int r = 0; r < 3; ++r) {
    logw[r] = (prior.p[r] > 0.0 ? exponent * std::log(prior.p[r]) : -kInf) +
              pll_values[r];
    max_logw = std::max(max_logw, logw[r]);
  }
  std::array<double, 3> w{};
  if (!std::isfinite(max_logw)) {
    std::cerr << "damped_weights: every regime has -inf weight, using "
                 "uniform\n";
    w.fill(1.0 / 3);
    return w;
  }
  double sum = 0.0;
  for (int r = 0; r < 3; ++r) {
    w[r] = std::isfinite(logw[r]) ? std::exp(logw[r] - max_logw) : 0.0;
    sum += w[r];
  }
  for (int r = 0; r < 3; ++r) w[r] /= sum;
  return w;
}

std::array<double, 3> regime_weights(const HetGPModel& model,
                                     const LatentState& state,
                                     const RegimePrior& prior,
                                     const Eigen::MatrixXd& new_X_raw,
                                     const Eigen::VectorXd& new_y) {
  const long j = new_y.size();
  std::array<double, 3> plls{0.0, 0.0, 0.0};
  if (j > 0) {
    Eigen::MatrixXd X = new_X_raw;
    for (int r = 0; r < 3; ++r) {
      X.col(kColSeverity).setConstant(state.x4_hat[r]);
      plls[r] = pll(model, X, new_y, kRegimeLabels[r]);
    }
  }
  return damped_weights(prior, plls, j);
}

ForecastWeekResult forecast_week(const FeatureMatrix& history_fm,
                                 const HetGPModel& model,
                                 std::span<const double> new_observed,
                                 const RegimePrior& prior,
                                 const LatentState& state, int week,
                                 long m_draws, std::uint64_t seed,
                                 const LatentConfig& cfg) {
  const long j = static_cast<long>(new_observed.size());
  ForecastWeekResult res;
  res.state = state;
  res.state.week = week;

  // Observed new-season rows as prediction rows (weeks 1..j); the severity
  // column is rewritten per candidate/regime.
  const ForecastDesign base =
      extend_for_forecast(history_fm, {}, 0.0);
  Eigen::MatrixXd obs_X = base.predict_X.topRows(j);
  Eigen::VectorXd obs_y(j);
  for (long i = 0; i < j; ++i) obs_y(i) = new_observed[i];

  std::array<double, 3> plls{0.0, 0.0, 0.0};
  if (j > 0) {
    Eigen::MatrixXd X = obs_X;
    for (int r = 0; r < 3; ++r) {
      res.state.x4_hat[r] =
          update_latent(model, res.state, obs_X, obs_y, kRegimeLabels[r], cfg);
      X.col(kColSeverity).setConstant(res.state.x4_hat[r]);
      plls[r] = pll(model, X, obs_y, kRegimeLabels[r]);
    }
  }
  res.pll = plls;
  res.state.weights = damped_weights(prior, plls, j);

  // Per regime: condition on the observed rows under that regime's label,
  // then draw joint trajectories over all 52 weeks at the optimized latent.
  std::array<Eigen::MatrixXd, 3> draws;
  std::array<long, 3> counts{};
  long total = 0;
  for (int r = 0; r < 3; ++r) {
    counts[r] = static_cast<long>(
        std::ceil(static_cast<double>(m_draws) * res.state.weights[r]));
    if (counts[r] == 0) continue;
    const HetGPModel conditioned =
        j > 0 ? augment_model(model, obs_X, obs_y, kRegimeLabels[r]) : model;
    Eigen::MatrixXd Xpred = base.predict_X;
    Xpred.col(kColSeverity).setConstant(res.state.x4_hat[r]);
    const PredictiveMVN p =
        predict(conditioned, Xpred, kRegimeLabels[r], cfg.include_noise);
    draws[r] = sample_joint(p, counts[r], derive_seed(seed, r + 1));
    total += counts[r];
  }

  ForecastEnsemble& ens = res.ensemble;
  ens.forecast_week = week;
  ens.trajectories.resize(total, kSeasonWeeks);
  ens.weights.resize(total);
  long row = 0;
  for (int r = 0; r < 3; ++r) {
    for (long i = 0; i < counts[r]; ++i, ++row) {
      for (int w = 0; w < kSeasonWeeks; ++w)
        ens.trajectories(row, w) =
            std::max(0.0, inverse_transform(draws[r](i, w)));
      ens.weights(row) =
          res.state.weights[r] / static_cast<double>(counts[r]);
    }
  }
  if (total > 0) ens.weights /= ens.weights.sum();
  return res;
}

}  // namespace incast
