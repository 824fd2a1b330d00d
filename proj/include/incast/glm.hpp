#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "incast/ingest.hpp"
#include "incast/targets.hpp"

namespace incast {

/// One-sided equal-weight filter over the preceding 10 weeks (inclusive);
/// the first 9 entries are undefined and returned as missing.
std::vector<std::optional<double>> smooth(std::span<const double> series);

/// Mosquito/pathogen vital rates at one temperature plus the human-side
/// constants entering the reproductive-rate formula.
struct MosquitoTraits {
  double a;    // bite rate, 1/day
  double bc;   // vector competence, probability
  double mu;   // adult mosquito mortality, 1/day
  double PDR;  // parasite development rate, 1/day
  double EFD;  // eggs per female per day
  double pEA;  // egg-to-adult survival, probability
  double MDR;  // mosquito development rate, 1/day
  double N;    // human density
  double r;    // human recovery rate, 1/day
};

/// Basic reproductive rate sqrt((M/(N r)) a^2 bc exp(-mu/PDR) / mu) with
/// mosquito density M = EFD pEA MDR / mu^2. Throws std::domain_error on
/// zero denominators.
double r0(const MosquitoTraits& traits);

/// Affine rescale of a weekly series to [0, 1]; a constant series maps to
/// all 0.5 by convention.
std::vector<double> r0_scaled(std::span<const double> weekly_r0);

/// Thermal trait curve: trait values tabulated against temperature, linear
/// interpolation between rows, clamped at the ends.
struct TraitCurve {
  std::vector<double> temperature;
  std::vector<MosquitoTraits> traits;  // N and r filled by the caller

  MosquitoTraits at(double temp) const;
};

TraitCurve load_trait_curve(const std::string& path, double human_density,
                            double recovery_rate);

/// Weekly scaled reproductive rate derived from a temperature series; weeks
/// where the interpolated rates cannot sustain transmission contribute 0.
std::vector<std::optional<double>> r0_predictor(
    std::span<const std::optional<double>> tavg, const TraitCurve& curve);

struct NegBinModel {
  std::vector<std::string> names;  // coefficient names, intercept first
  Eigen::VectorXd beta;
  double dispersion = 1.0;  // size: variance = mu + mu^2/size
  double loglik = 0.0;
  double bic = 0.0;
  std::vector<std::string> selected;  // universe columns in the model
};

/// Negative-binomial regression with log link: IRLS for the coefficients
/// alternating with golden-section profile maximization for the size.
/// `design` excludes the intercept, which is added internally.
NegBinModel fit_negbin(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                       const std::vector<std::string>& names = {});

double negbin_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                     double size);

enum class ColumnKind { deterministic, autoregressive, seasonal_mean, covariate };

enum class ColumnTransform { identity, square, log1p, sq_log1p };

struct UniverseColumn {
  std::string name;
  ColumnKind kind = ColumnKind::covariate;
  std::string source;  // covariate column feeding the smoother
  ColumnTransform transform = ColumnTransform::identity;
  int lag = 0;
  bool smoothed = true;
};

struct SmoothedSpec {
  std::string name;
  std::string source;
  ColumnTransform transform = ColumnTransform::identity;
  std::vector<int> lags{1};
};

struct UniverseConfig {
  std::vector<SmoothedSpec> smoothed;
};

/// Built-in per-locale lagged covariate lists ("san_juan", "iquitos").
UniverseConfig universe_preset(const std::string& locale);

/**
 * The stepwise search space: deterministic terms (trend, previous-52-week
 * cumulative cases, sin/cos at periods 52 and 26), the smoothed
 * autoregressive and historical same-week terms, and the configured
 * smoothed lagged covariates — evaluated over the training span with
 * complete-case rows only. Carries the flat series needed to rebuild any
 * column value at any week during forward simulation.
 */
struct PredictorUniverse {
  std::vector<UniverseColumn> columns;
  Eigen::MatrixXd design;          // complete rows x columns
  Eigen::VectorXd y;               // cases on those rows
  std::vector<long> row_week;      // absolute week per design row

  std::vector<double> cases;       // training span, absolute weeks
  std::map<std::string, std::vector<double>> sources;
};

/// Value of one universe column at absolute week t, given the case series
/// and the column's own source series (ignored unless kind == covariate).
/// Shared by universe assembly and forward simulation so both sides build
/// identical design rows.
std::optional<double> eval_column(const UniverseColumn& col, long t,
                                  std::span<const double> cases,
                                  std::span<const double> source);

PredictorUniverse build_universe(const SeasonSeries& series,
                                 const CovariateFrame& covariates,
                                 const UniverseConfig& cfg, long weeks_limit);

/// Greedy bidirectional stepwise negative-binomial search minimizing
/// BIC = -2 loglik + (p + 1) log n, starting from the deterministic-only
/// model. Deterministic given column order.
NegBinModel step_bic(const PredictorUniverse& universe);

/// Gaussian forward model for one covariate: value on lag-1 value, trend,
/// and the annual sin/cos pair, with the trend dropped on a rank-deficient
/// design.
struct Submodel {
  Eigen::VectorXd beta;  // intercept, lag1, [trend], sin, cos
  bool has_trend = true;
  double sigma2 = 0.0;

  double predict_mean(double prev, long t) const;
};

std::map<std::string, Submodel> fit_submodels(const CovariateFrame& frame);

struct GlmForecastOptions {
  long draws = 10000;
  std::uint64_t seed = 1;
  double mean_cap = 1e9;
};

/**
 * Markov Monte Carlo propagation: week by week, draw the selected
 * covariates forward from their submodels, rebuild the design row (the
 * autoregressive term feeds on the trajectory's own simulated cases), and
 * draw the next count from the negative binomial at the linked mean. A
 * linked mean above the cap is resampled once and then capped.
 * Trajectories cover the season's observed prefix plus `horizon` weeks.
 */
ForecastEnsemble glm_forecast(const NegBinModel& model,
                              const std::map<std::string, Submodel>& submodels,
                              const PredictorUniverse& universe,
                              int season_weeks_observed, int horizon,
                              const GlmForecastOptions& opts);

}  // namespace incast
