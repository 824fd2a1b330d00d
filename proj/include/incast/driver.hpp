#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "incast/config.hpp"
#include "incast/evaluate.hpp"
#include "incast/glm.hpp"
#include "incast/latent.hpp"
#include "incast/mle.hpp"

namespace incast {

struct RunOptions {
  std::string data_path;
  std::string covariates_path;  // needed by glm / hybrid
  std::string traits_path;      // optional: enables the derived r0 predictor
  std::string locale = "san_juan";
  std::string method = "hetgp";  // hetgp | glm | hybrid
  std::string out_dir = "out";
  std::uint64_t seed = 0;  // 0 = take forecast.seed from the config
  Config config;
};

struct SeasonRun {
  std::string season;
  ScoreTable scores;
  std::vector<PitRecord> pits;
  std::vector<std::string> forecast_files;
};

/// Pulled out of the config (with per-locale defaults) so the CLI and tests
/// share one source of knob values.
struct ResolvedSettings {
  SeverityThresholds thresholds;
  BucketSpec buckets;
  double interval_level;
  double sine_phase;
  long draws;
  std::uint64_t seed;
  MleConfig mle;
  LatentConfig latent;
  PriorMode prior_mode;
  int hybrid_min_years;
  int hybrid_min_index;
  double score_clamp_floor;
  bool fan_charts;
};

ResolvedSettings resolve_settings(const Config& config,
                                  const std::string& locale,
                                  std::uint64_t seed_override);

/**
 * Rolling out-of-sample evaluation: for each test season, refit at week 0
 * and emit a target-distribution JSON at forecast weeks 0, 4, ..., 48,
 * appending score and PIT rows. Output layout is one directory per
 * (locale, season) holding forecasts/, scores.csv and pit.csv.
 */
std::vector<SeasonRun> run_season(const RunOptions& opts);

/// Covariate frame ready for GLM use: loaded, configured columns imputed,
/// and the derived r0 column appended when a trait curve is supplied.
CovariateFrame prepare_covariates(const RunOptions& opts);

}  // namespace incast
