#include "incast/driver.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "incast/svg.hpp"
#include "incast/transform.hpp"

namespace incast {

namespace fs = std::filesystem;

namespace {

SeasonSeries season_prefix(const SeasonSeries& series, size_t n) {
  SeasonSeries out;
  out.locale = series.locale;
  out.season_labels.assign(series.season_labels.begin(),
                           series.season_labels.begin() + n);
  out.counts.assign(series.counts.begin(), series.counts.begin() + n);
  out.transformed.assign(series.transformed.begin(),
                         series.transformed.begin() + n);
  return out;
}

CovariateFrame truncate_frame(const CovariateFrame& frame, long weeks) {
  CovariateFrame out;
  out.names = frame.names;
  for (const auto& col : frame.columns) {
    const long n = std::min<long>(weeks, static_cast<long>(col.size()));
    out.columns.emplace_back(col.begin(), col.begin() + n);
  }
  return out;
}

std::string sanitize(std::string label) {
  std::replace(label.begin(), label.end(), '/', '-');
  return label;
}

UniverseConfig universe_from_config(const Config& config,
                                    const std::string& locale) {
  if (!config.has("glm.smoothed")) {
    if (locale == "san_juan" || locale == "iquitos")
      return universe_preset(locale);
    // Generic default: absent sources are skipped during assembly.
    UniverseConfig cfg;
    cfg.smoothed.push_back(
        {"lp", "precipitation", ColumnTransform::log1p, {1}});
    cfg.smoothed.push_back({"tavg", "tavg", ColumnTransform::identity, {1, 11}});
    cfg.smoothed.push_back({"tavg2", "tavg", ColumnTransform::square, {1, 11}});
    cfg.smoothed.push_back({"r0", "r0", ColumnTransform::identity, {1}});
    return cfg;
  }
  UniverseConfig cfg;
  std::istringstream ss(config.get("glm.smoothed", ""));
  std::string entry;
  while (ss >> entry) {
    // name:source:transform:lag1;lag2
    std::vector<std::string> parts;
    std::istringstream es(entry);
    std::string p;
    while (std::getline(es, p, ':')) parts.push_back(p);
    if (parts.size() != 4)
      throw std::runtime_error("glm.smoothed entry '" + entry +
                               "': want name:source:transform:lags");
    SmoothedSpec spec;
    spec.name = parts[0];
    spec.source = parts[1];
    if (parts[2] == "identity")
      spec.transform = ColumnTransform::identity;
    else if (parts[2] == "square")
      spec.transform = ColumnTransform::square;
    else if (parts[2] == "log1p")
      spec.transform = ColumnTransform::log1p;
    else if (parts[2] == "sq_log1p")
      spec.transform = ColumnTransform::sq_log1p;
    else
      throw std::runtime_error("glm.smoothed entry '" + entry +
                               "': unknown transform " + parts[2]);
    spec.lags.clear();
    std::istringstream ls(parts[3]);
    while (std::getline(ls, p, ';')) spec.lags.push_back(std::stoi(p));
    cfg.smoothed.push_back(std::move(spec));
  }
  return cfg;
}

void weekly_band(const ForecastEnsemble& ens, std::vector<double>& mean,
                 std::vector<double>& lo, std::vector<double>& hi) {
  const long weeks = ens.weeks();
  mean.resize(weeks);
  lo.resize(weeks);
  hi.resize(weeks);
  for (long w = 0; w < weeks; ++w) {
    const Eigen::VectorXd col = ens.trajectories.col(w);
    mean[w] = col.dot(ens.weights);
    lo[w] = weighted_quantile(col, ens.weights, 0.05);
    hi[w] = weighted_quantile(col, ens.weights, 0.95);
  }
}

}  // namespace

ResolvedSettings resolve_settings(const Config& config,
                                  const std::string& locale,
                                  std::uint64_t seed_override) {
  ResolvedSettings s;
  const bool iquitos = locale == "iquitos";
  s.thresholds.mild_max = config.get_num("features.mild_max",
                                         iquitos ? 10.0 : 25.0);
  s.thresholds.severe_min = config.get_num("features.severe_min",
                                           iquitos ? 25.0 : 100.0);
  if (!(s.thresholds.mild_max < s.thresholds.severe_min))
    throw std::runtime_error("features: mild_max must be < severe_min");
  s.sine_phase = config.get_num("features.sine_phase", 0.0);

  s.buckets.peak_width =
      config.get_num("targets.peak_bucket_width", iquitos ? 10.0 : 50.0);
  s.buckets.total_width =
      config.get_num("targets.total_bucket_width", iquitos ? 100.0 : 1000.0);
  s.buckets.peak_max_buckets =
      static_cast<int>(config.get_int("targets.peak_max_buckets", 0));
  s.buckets.total_max_buckets =
      static_cast<int>(config.get_int("targets.total_max_buckets", 0));
  s.interval_level = config.get_num("targets.interval_level", 0.95);

  s.draws = config.get_int("forecast.draws", 100000);
  s.seed = seed_override != 0
               ? seed_override
               : static_cast<std::uint64_t>(
                     config.get_int("forecast.seed", 20150901));
  s.fan_charts = config.get_bool("forecast.fan_charts", false);

  s.mle.theta_bounds = {config.get_num("mle.theta_lo", 1e-2),
                        config.get_num("mle.theta_hi", 1e4)};
  s.mle.eta_bounds = {config.get_num("mle.eta_lo", 1e-6),
                      config.get_num("mle.eta_hi", 1e2)};
  s.mle.multistarts = static_cast<int>(config.get_int("mle.multistarts", 5));
  s.mle.tol_grad = config.get_num("mle.tol_grad", 1e-6);
  s.mle.tol_obj = config.get_num("mle.tol_obj", 1e-9);
  s.mle.max_iters = static_cast<int>(config.get_int("mle.max_iters", 200));
  s.mle.seed = static_cast<std::uint64_t>(config.get_int("mle.seed", 1452));
  s.mle.threads = static_cast<int>(config.get_int("mle.threads", 0));

  s.latent.window = config.get_num("latent.window", 0.25);
  s.latent.grid_points =
      static_cast<int>(config.get_int("latent.grid_points", 51));
  s.latent.optimize = config.get_bool("latent.optimize", true);
  s.latent.include_noise = config.get_bool("latent.include_noise", true);
  const std::string prior = config.get("latent.prior", "uniform");
  if (prior == "uniform")
    s.prior_mode = PriorMode::uniform;
  else if (prior == "x3-linear")
    s.prior_mode = PriorMode::x3_linear;
  else
    throw std::runtime_error("latent.prior must be uniform or x3-linear");

  s.hybrid_min_years =
      static_cast<int>(config.get_int("hybrid.min_history_years", 7));
  s.hybrid_min_index =
      static_cast<int>(config.get_int("hybrid.min_forecast_index", 3));
  s.score_clamp_floor = config.get_num("score.clamp_floor", 0.0);
  return s;
}

CovariateFrame prepare_covariates(const RunOptions& opts) {
  auto interpolate = opts.config.get_list("glm.interpolate");
  if (interpolate.empty()) interpolate = {"population"};
  CovariateFrame frame = load_covariates(opts.covariates_path, interpolate);
  for (const auto& col : opts.config.get_list("glm.impute"))
    frame = impute_missing(frame, col,
                           opts.config.get_num("glm.impute_lengthscale", 8.0));
  if (!opts.traits_path.empty()) {
    const TraitCurve curve = load_trait_curve(
        opts.traits_path, opts.config.get_num("glm.human_density", 1.0),
        opts.config.get_num("glm.recovery_rate", 1.0 / 7.0));
    const std::string tcol =
        opts.config.get("glm.temperature_column", "tavg");
    const auto scaled = r0_predictor(frame.at(tcol), curve);
    if (frame.column("r0") >= 0)
      throw std::runtime_error("covariates already contain an r0 column");
    frame.names.push_back("r0");
    frame.columns.push_back(scaled);
  }
  return frame;
}

std::vector<SeasonRun> run_season(const RunOptions& opts) {
  const bool needs_gp = opts.method == "hetgp" || opts.method == "hybrid";
  const bool needs_glm = opts.method == "glm" || opts.method == "hybrid";
  if (!needs_gp && !needs_glm)
    throw std::runtime_error("method must be hetgp, glm or hybrid");

  IncidenceColumns cols;
  cols.season = opts.config.get("data.season_column", cols.season);
  cols.week = opts.config.get("data.week_column", cols.week);
  cols.cases = opts.config.get("data.cases_column", cols.cases);
  const SeasonSeries series =
      load_incidence(opts.data_path, opts.locale, cols);
  const ResolvedSettings st =
      resolve_settings(opts.config, opts.locale, opts.seed);

  // Test seasons: explicit labels, or the last n seasons.
  std::vector<size_t> test_idx;
  const auto labels = opts.config.get_list("data.test_seasons");
  if (!labels.empty()) {
    for (const auto& label : labels) {
      const auto it = std::find(series.season_labels.begin(),
                                series.season_labels.end(), label);
      if (it == series.season_labels.end())
        throw std::runtime_error("test season '" + label + "' not in data");
      test_idx.push_back(it - series.season_labels.begin());
    }
    std::sort(test_idx.begin(), test_idx.end());
  } else {
    const long n_test = opts.config.get_int("data.n_test_seasons", 1);
    for (long k = n_test; k >= 1; --k)
      if (series.n_seasons() >= static_cast<size_t>(k))
        test_idx.push_back(series.n_seasons() - k);
  }

  CovariateFrame frame;
  UniverseConfig ucfg;
  if (needs_glm) {
    if (opts.covariates_path.empty())
      throw std::runtime_error("method " + opts.method +
                               " needs --covariates");
    frame = prepare_covariates(opts);
    // Drop unavailable sources once, up front, instead of warning on
    // every weekly rebuild.
    for (const auto& spec : universe_from_config(opts.config, opts.locale).smoothed) {
      if (frame.column(spec.source) >= 0) {
        ucfg.smoothed.push_back(spec);
      } else {
        std::cerr << "run_season: covariate '" << spec.source
                  << "' not in the frame, dropping predictor " << spec.name
                  << "\n";
      }
    }
  }

  std::vector<SeasonRun> runs;
  for (size_t idx : test_idx) {
    if (idx < 2)
      throw std::runtime_error("insufficient history before season " +
                               series.season_labels[idx] +
                               " (need >= 2 seasons)");
    const SeasonSeries history = season_prefix(series, idx);
    const std::string& label = series.season_labels[idx];
    const auto& truth_counts = series.counts[idx];
    const auto& obs_trans = series.transformed[idx];
    const TrueTargets truth = true_targets(truth_counts);

    const fs::path season_dir =
        fs::path(opts.out_dir) / opts.locale / sanitize(label);
    fs::create_directories(season_dir / "forecasts");

    SeasonRun run;
    run.season = label;

    // Week-0 refit for the GP; latents and weights update within season.
    FeatureMatrix fm;
    MleResult gp_fit;
    RegimePrior prior;
    LatentState state;
    if (needs_gp) {
      fm = build_features(history, st.thresholds, st.sine_phase);
      gp_fit = fit(fm.X, fm.y, st.mle);
      if (!gp_fit.converged)
        std::cerr << "fit: season " << label
                  << " week-0 optimum not converged (grad norm "
                  << gp_fit.grad_norm << ")\n";
      prior = initial_prior(history, fm.y(fm.y.size() - 1), st.prior_mode,
                            st.thresholds);
    }

    for (int week = 0; week <= 48; week += 4) {
      ForecastEnsemble ens, gp_ens, glm_ens;
      std::string provenance = opts.method;

      if (needs_gp) {
        ForecastWeekResult wres = forecast_week(
            fm, gp_fit.model,
            std::span<const double>(obs_trans.data(), week), prior, state,
            week, st.draws, derive_seed(st.seed, idx, week, 1), st.latent);
        state = wres.state;
        gp_ens = std::move(wres.ensemble);
        gp_ens.locale = opts.locale;
        gp_ens.season_label = label;
      }
      if (needs_glm) {
        const long weeks_limit =
            static_cast<long>(idx) * kSeasonWeeks + week;
        const PredictorUniverse universe =
            build_universe(series, frame, ucfg, weeks_limit);
        const NegBinModel glm_model = step_bic(universe);
        const auto submodels =
            fit_submodels(truncate_frame(frame, weeks_limit));
        GlmForecastOptions gopts;
        gopts.draws = st.draws;
        gopts.seed = derive_seed(st.seed, idx, week, 2);
        glm_ens = glm_forecast(glm_model, submodels, universe, week,
                               kSeasonWeeks - week, gopts);
        glm_ens.locale = opts.locale;
        glm_ens.season_label = label;
      }

      if (opts.method == "hetgp") {
        ens = std::move(gp_ens);
      } else if (opts.method == "glm") {
        ens = std::move(glm_ens);
      } else {
        const bool gp_only = static_cast<int>(idx) < st.hybrid_min_years ||
                             week / 4 < st.hybrid_min_index;
        provenance = gp_only ? "gp-only" : "pooled";
        ens = mix_hybrid(gp_ens, glm_ens, static_cast<int>(idx), week / 4,
                         st.hybrid_min_years, st.hybrid_min_index);
      }

      const ForecastEnsemble pinned = substitute_observed(
          ens, std::span<const double>(truth_counts.data(), week));
      const TargetDistribution dist = extract_targets(pinned, st.buckets);

      char name[32];
      std::snprintf(name, sizeof(name), "week_%02d.json", week);
      const fs::path file = season_dir / "forecasts" / name;
      {
        std::ofstream out(file);
        out << target_distribution_json(dist, pinned, opts.method, provenance,
                                        st.interval_level)
                   .dump(2)
            << '\n';
      }
      run.forecast_files.push_back(file.string());

      const struct {
        Target target;
        double truth;
        double point;
      } per_target[] = {
          {Target::peak_week, static_cast<double>(truth.peak_week),
           static_cast<double>(dist.point_peak_week)},
          {Target::peak_incidence, truth.peak_incidence,
           dist.point_peak_incidence},
          {Target::total_incidence, truth.total_incidence,
           dist.point_total_incidence},
      };
      for (const auto& t : per_target) {
        run.scores.rows.push_back(
            {opts.method, opts.locale, target_name(t.target), label, week,
             log_score(dist, t.target, t.truth, st.score_clamp_floor),
             std::abs(t.point - t.truth)});
      }
      run.pits.push_back(
          {opts.method, opts.locale, target_name(Target::peak_week), label,
           week,
           pit(dist.sample_peak_week, dist.sample_weights,
               truth.peak_week)});
      run.pits.push_back({opts.method, opts.locale,
                          target_name(Target::peak_incidence), label, week,
                          pit(dist.sample_peak_incidence, dist.sample_weights,
                              truth.peak_incidence)});
      run.pits.push_back({opts.method, opts.locale,
                          target_name(Target::total_incidence), label, week,
                          pit(dist.sample_total_incidence, dist.sample_weights,
                              truth.total_incidence)});

      if (st.fan_charts) {
        std::vector<double> mean, lo, hi;
        weekly_band(pinned, mean, lo, hi);
        std::vector<double> observed(truth_counts.begin(),
                                     truth_counts.begin() + week);
        std::snprintf(name, sizeof(name), "fan_week_%02d.svg", week);
        write_fan_chart((season_dir / name).string(),
                        opts.locale + " " + label + " week " +
                            std::to_string(week),
                        mean, lo, hi, observed);
      }
    }

    write_scores_csv(run.scores, (season_dir / "scores.csv").string());
    write_pit_csv(run.pits, (season_dir / "pit.csv").string());
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace incast
