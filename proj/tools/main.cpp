#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "incast/driver.hpp"
#include "incast/transform.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using incast::Config;

namespace {

Config load_config_or_default(const std::string& path) {
  return path.empty() ? Config{} : Config::load(path);
}

// Rebuild the scoring view of a forecast from its JSON document.
incast::TargetDistribution dist_from_json(const nlohmann::json& doc) {
  incast::TargetDistribution dist;
  dist.peak_week_prob = Eigen::VectorXd::Zero(incast::kSeasonWeeks);
  for (const auto& b : doc.at("peak_week").at("buckets"))
    dist.peak_week_prob(b.at(0).get<int>() - 1) = b.at(1).get<double>();
  dist.point_peak_week = doc.at("peak_week").at("point").get<int>();
  auto hist = [](const nlohmann::json& h, incast::Histogram& out) {
    out.width = h.at("bucket_width").get<double>();
    for (const auto& b : h.at("buckets"))
      out.prob.push_back(b.at(1).get<double>());
  };
  hist(doc.at("peak_incidence"), dist.peak_incidence);
  hist(doc.at("total_incidence"), dist.total_incidence);
  dist.point_peak_incidence = doc.at("peak_incidence").at("point").get<double>();
  dist.point_total_incidence = doc.at("total_incidence").at("point").get<double>();
  return dist;
}

int cmd_fit(const std::string& data, const std::string& locale,
            const Config& config, std::uint64_t seed,
            const std::string& out) {
  incast::IncidenceColumns cols;
  cols.season = config.get("data.season_column", cols.season);
  cols.week = config.get("data.week_column", cols.week);
  cols.cases = config.get("data.cases_column", cols.cases);
  const auto series = incast::load_incidence(data, locale, cols);
  const auto st = incast::resolve_settings(config, locale, seed);
  const auto fm =
      incast::build_features(series, st.thresholds, st.sine_phase);
  const auto res = incast::fit(fm.X, fm.y, st.mle);

  std::printf("n = %ld  loglik = %.6f  converged = %s  iterations = %d\n",
              res.model.n(), res.loglik, res.converged ? "yes" : "no",
              res.iterations);
  std::printf("theta  = %.6g %.6g %.6g %.6g\n", res.model.theta(0),
              res.model.theta(1), res.model.theta(2), res.model.theta(3));
  std::printf("tau2   = %.6g\n", res.model.tau2);
  std::printf("eta    = %.6g %.6g %.6g   (mild, moderate, severe)\n",
              res.model.eta.eta_minus, res.model.eta.eta_zero,
              res.model.eta.eta_plus);
  if (!out.empty()) {
    incast::save_model(res.model, data, out);
    std::printf("model written to %s\n", out.c_str());
  }
  return 0;
}

int cmd_forecast(const incast::RunOptions& opts) {
  const auto runs = incast::run_season(opts);
  for (const auto& run : runs)
    std::printf("season %s: %zu forecasts, %zu score rows\n",
                run.season.c_str(), run.forecast_files.size(),
                run.scores.rows.size());
  return 0;
}

int cmd_score(const std::vector<std::string>& forecasts,
              const std::string& data, const std::string& locale,
              const Config& config, const std::string& out) {
  incast::IncidenceColumns cols;
  cols.season = config.get("data.season_column", cols.season);
  cols.week = config.get("data.week_column", cols.week);
  cols.cases = config.get("data.cases_column", cols.cases);
  const auto series = incast::load_incidence(data, locale, cols);
  const double clamp = config.get_num("score.clamp_floor", 0.0);

  incast::ScoreTable table;
  for (const auto& path : forecasts) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    const std::string season = doc.at("season");
    const auto it = std::find(series.season_labels.begin(),
                              series.season_labels.end(), season);
    if (it == series.season_labels.end())
      throw std::runtime_error(path + ": season " + season + " not in data");
    const auto truth = incast::true_targets(
        series.counts[it - series.season_labels.begin()]);
    const auto dist = dist_from_json(doc);
    const std::string method = doc.at("method");
    const int week = doc.at("forecast_week");
    using incast::Target;
    const struct {
      Target target;
      double truth;
      double point;
    } rows[] = {
        {Target::peak_week, double(truth.peak_week),
         double(dist.point_peak_week)},
        {Target::peak_incidence, truth.peak_incidence,
         dist.point_peak_incidence},
        {Target::total_incidence, truth.total_incidence,
         dist.point_total_incidence},
    };
    for (const auto& r : rows)
      table.rows.push_back({method, doc.at("locale"),
                            incast::target_name(r.target), season, week,
                            incast::log_score(dist, r.target, r.truth, clamp),
                            std::abs(r.point - r.truth)});
  }
  incast::write_scores_csv(table, out);
  std::printf("%zu score rows -> %s\n", table.rows.size(), out.c_str());
  return 0;
}

int cmd_pit(const std::vector<std::string>& files, int bins) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& f : files)
    for (const auto& rec : incast::read_pit_csv(f))
      groups[{rec.locale, rec.target}].push_back(rec.u);
  for (const auto& [key, us] : groups) {
    std::vector<int> counts(bins, 0);
    for (double u : us) {
      int b = static_cast<int>(u * bins);
      if (b >= bins) b = bins - 1;
      counts[b]++;
    }
    std::printf("%s / %s (n=%zu):", key.first.c_str(), key.second.c_str(),
                us.size());
    for (int c : counts) std::printf(" %d", c);
    std::printf("\n");
  }
  return 0;
}

void print_summaries(const std::vector<incast::MethodSummary>& summaries,
                     const char* heading) {
  std::printf("\n== %s ==\n", heading);
  std::printf("%-10s %-10s %-16s %12s %10s %12s %6s\n", "method", "locale",
              "target", "avg_score", "avg_rank", "mae", "n");
  for (const auto& s : summaries) {
    if (std::isinf(s.avg_score))
      std::printf("%-10s %-10s %-16s %12s %10.2f %12.2f %6ld\n",
                  s.method.c_str(), s.locale.c_str(), s.target.c_str(), "-inf",
                  s.avg_rank, s.mae, s.n);
    else
      std::printf("%-10s %-10s %-16s %12.3f %10.2f %12.2f %6ld\n",
                  s.method.c_str(), s.locale.c_str(), s.target.c_str(),
                  s.avg_score, s.avg_rank, s.mae, s.n);
  }
}

int cmd_report(const std::vector<std::string>& files) {
  incast::ScoreTable all;
  for (const auto& f : files) {
    const auto t = incast::read_scores_csv(f);
    all.rows.insert(all.rows.end(), t.rows.begin(), t.rows.end());
  }
  print_summaries(incast::mae_and_ranks(all), "full season");

  // Both readings of the first-24-weeks evaluation window.
  incast::ScoreTable inclusive, exclusive;
  for (const auto& r : all.rows) {
    if (r.week <= 24) inclusive.rows.push_back(r);
    if (r.week < 24) exclusive.rows.push_back(r);
  }
  print_summaries(incast::mae_and_ranks(inclusive),
                  "first 24 weeks (forecast weeks 0..24)");
  print_summaries(incast::mae_and_ranks(exclusive),
                  "first 24 weeks (forecast weeks 0..20)");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phenomenological disease-incidence forecasting"};
  app.require_subcommand(1);

  std::string data, covariates, traits, locale = "san_juan", method = "hetgp";
  std::string config_path, out;
  std::string season_col, week_col, cases_col;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  int bins = 10;

  auto add_column_flags = [&](CLI::App* cmd) {
    cmd->add_option("--season-column", season_col, "season label column");
    cmd->add_option("--week-column", week_col, "season week column");
    cmd->add_option("--cases-column", cases_col, "case count column");
  };
  auto apply_column_flags = [&](Config& config) {
    if (!season_col.empty()) config.set("data.season_column", season_col);
    if (!week_col.empty()) config.set("data.week_column", week_col);
    if (!cases_col.empty()) config.set("data.cases_column", cases_col);
  };

  auto* fit = app.add_subcommand("fit", "Fit the GP on a data file");
  fit->add_option("--data", data, "incidence csv")->required();
  fit->add_option("--locale", locale, "locale id");
  fit->add_option("--config", config_path, "config file");
  fit->add_option("--seed", seed, "seed override");
  fit->add_option("--out", out, "model file to write");
  add_column_flags(fit);

  auto* forecast = app.add_subcommand(
      "forecast", "Rolling seasonal forecasts with scoring");
  forecast->add_option("--data", data, "incidence csv")->required();
  forecast->add_option("--covariates", covariates, "covariate csv");
  forecast->add_option("--traits", traits, "thermal trait curve csv");
  forecast->add_option("--locale", locale, "locale id");
  forecast->add_option("--method", method, "hetgp | glm | hybrid");
  forecast->add_option("--config", config_path, "config file");
  forecast->add_option("--seed", seed, "seed override");
  forecast->add_option("--out", out, "output directory")->required();
  add_column_flags(forecast);

  auto* score = app.add_subcommand("score", "Score forecast JSON files");
  score->add_option("files", files, "forecast json files")->required();
  score->add_option("--data", data, "incidence csv with the truth")
      ->required();
  score->add_option("--locale", locale, "locale id");
  score->add_option("--config", config_path, "config file");
  score->add_option("--out", out, "scores csv to write")->required();
  add_column_flags(score);

  auto* pit = app.add_subcommand("pit", "Summarize PIT csv files");
  pit->add_option("files", files, "pit csv files")->required();
  pit->add_option("--bins", bins, "histogram bins");

  auto* report = app.add_subcommand("report", "Aggregate scores csv files");
  report->add_option("files", files, "scores csv files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    Config config = load_config_or_default(config_path);
    apply_column_flags(config);
    if (fit->parsed()) return cmd_fit(data, locale, config, seed, out);
    if (forecast->parsed()) {
      incast::RunOptions opts;
      opts.data_path = data;
      opts.covariates_path = covariates;
      opts.traits_path = traits;
      opts.locale = locale;
      opts.method = method;
      opts.out_dir = out;
      opts.seed = seed;
      opts.config = config;
      return cmd_forecast(opts);
    }
    if (score->parsed())
      return cmd_score(files, data, locale, config, out);
    if (pit->parsed()) return cmd_pit(files, bins);
    if (report->parsed()) return cmd_report(files);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
