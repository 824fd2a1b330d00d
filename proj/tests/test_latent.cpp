#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "incast/latent.hpp"
#include "incast/transform.hpp"
#include "test_util.hpp"

using namespace incast;

namespace {

const SeverityThresholds kSanJuan{25.0, 100.0};

SeasonSeries series_from_counts(
    const std::vector<std::vector<double>>& seasons) {
  SeasonSeries s;
  s.locale = "test";
  for (size_t i = 0; i < seasons.size(); ++i) {
    s.season_labels.push_back("s" + std::to_string(i));
    s.counts.push_back(seasons[i]);
    std::vector<double> tr(kSeasonWeeks);
    for (int w = 0; w < kSeasonWeeks; ++w)
      tr[w] = forward_transform(seasons[i][w]);
    s.transformed.push_back(tr);
  }
  return s;
}

// Season with a controllable first value, mid-season peak, and final value.
std::vector<double> shaped_season(double first, double peak, double final) {
  std::vector<double> v(kSeasonWeeks, std::min(first, final));
  v[0] = first;
  v[20] = peak;
  v[kSeasonWeeks - 1] = final;
  return v;
}

// Archetype seasons whose amplitude scales with the severity regime.
std::vector<double> archetype_season(double amplitude, Rng& rng,
                                     double noise_sd) {
  std::vector<double> v(kSeasonWeeks);
  for (int w = 0; w < kSeasonWeeks; ++w) {
    const double hump =
        amplitude * std::exp(-0.5 * std::pow((w - 26.0) / 8.0, 2.0));
    v[w] = std::max(0.0, 2.0 + hump + noise_sd * rng.normal());
  }
  return v;
}

}  // namespace

TEST_CASE("uniform prior") {
  const auto series = series_from_counts({shaped_season(3, 8, 3)});
  const RegimePrior p =
      initial_prior(series, 1.0, PriorMode::uniform, kSanJuan);
  for (double w : p.p) CHECK(w == doctest::Approx(1.0 / 3));
}

TEST_CASE("starting-level prior follows the fitted peak") {
  // Transformed peaks sit exactly on 1 + starting level, so the fitted
  // line is known in closed form.
  const auto series = series_from_counts({
      shaped_season(3, 8, 3),     // x3 = f(3) = 1, peak f = 2
      shaped_season(3, 8, 8),     // x3 = f(3) = 1, peak f = 2
      shaped_season(8, 15, 15),   // x3 = f(8) = 2, peak f = 3
      shaped_season(15, 24, 24),  // x3 = f(15) = 3, peak f = 4
  });

  SUBCASE("severe start") {
    const RegimePrior p = initial_prior(series, forward_transform(99.0),
                                        PriorMode::x3_linear, kSanJuan);
    CHECK(p.p[0] == doctest::Approx(0.25));
    CHECK(p.p[1] == doctest::Approx(0.25));
    CHECK(p.p[2] == doctest::Approx(0.5));
  }
  SUBCASE("mild start") {
    const RegimePrior p =
        initial_prior(series, 0.0, PriorMode::x3_linear, kSanJuan);
    CHECK(p.p[0] == doctest::Approx(0.5));
    CHECK(p.p[2] == doctest::Approx(0.25));
  }
}

TEST_CASE("x3-linear fallbacks") {
  SUBCASE("too few seasons") {
    const auto series = series_from_counts({shaped_season(3, 8, 3)});
    const RegimePrior p =
        initial_prior(series, 1.0, PriorMode::x3_linear, kSanJuan);
    for (double w : p.p) CHECK(w == doctest::Approx(1.0 / 3));
  }
  SUBCASE("degenerate starting levels") {
    const auto series = series_from_counts({shaped_season(3, 8, 3),
                                            shaped_season(3, 9, 3),
                                            shaped_season(3, 10, 3)});
    const RegimePrior p =
        initial_prior(series, 1.0, PriorMode::x3_linear, kSanJuan);
    for (double w : p.p) CHECK(w == doctest::Approx(1.0 / 3));
  }
}

namespace {

struct LatentFixture {
  SeasonSeries series;
  FeatureMatrix fm;
  HetGPModel model;

  LatentFixture() {
    Rng rng(61);
    std::vector<std::vector<double>> seasons;
    for (int rep = 0; rep < 3; ++rep) {
      seasons.push_back(archetype_season(10.0, rng, 0.3));    // mild
      seasons.push_back(archetype_season(60.0, rng, 1.5));    // moderate
      seasons.push_back(archetype_season(250.0, rng, 6.0));   // severe
    }
    series = series_from_counts(seasons);
    fm = build_features(series, kSanJuan);
    const double var_y = (fm.y.array() - fm.y.mean()).square().mean();
    model = make_model({0.05, 1.0, 1.0, 0.5}, var_y, {0.01, 0.03, 0.08},
                       InputScaling{}, fm.X, fm.y);
  }
};

}  // namespace

TEST_CASE("latent updates") {
  const LatentFixture fx;
  LatentState state;

  SUBCASE("no data leaves the latent unchanged") {
    const Eigen::MatrixXd none(0, 4);
    CHECK(update_latent(fx.model, state, none, Eigen::VectorXd(), 1) == 1.0);
  }

  SUBCASE("window-0 pairing keeps the label") {
    LatentConfig cfg;
    cfg.optimize = false;
    const ForecastDesign d = extend_for_forecast(fx.fm, {}, 0.0);
    const Eigen::MatrixXd X = d.predict_X.topRows(8);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(8, 2.0);
    CHECK(update_latent(fx.model, state, X, y, -1, cfg) == -1.0);
  }

  SUBCASE("returned point is a local grid optimum") {
    Rng rng(62);
    const auto new_season = archetype_season(250.0, rng, 6.0);
    const ForecastDesign d = extend_for_forecast(fx.fm, {}, 1.0);
    const long j = 12;
    Eigen::MatrixXd X = d.predict_X.topRows(j);
    Eigen::VectorXd y(j);
    for (long i = 0; i < j; ++i)
      y(i) = forward_transform(new_season[i]);
    const double found = update_latent(fx.model, state, X, y, 1);
    const double step = 0.5 / 50.0;
    auto value_at = [&](double cand) {
      Eigen::MatrixXd Xc = X;
      Xc.col(kColSeverity).setConstant(cand);
      return pll(fx.model, Xc, y, 1);
    };
    const double center = value_at(found);
    if (found - step >= state.x4_hat[2] - 0.25)
      CHECK(center >= value_at(found - step) - 1e-9);
    if (found + step <= state.x4_hat[2] + 0.25)
      CHECK(center >= value_at(found + step) - 1e-9);
  }

  SUBCASE("replayed severe season keeps the severe latent near its label") {
    // Replay one of the training severe seasons as the unfolding season.
    const auto& replay = fx.series.transformed[8];
    LatentState st;
    for (int update = 1; update <= 3; ++update) {
      const long j = 4 * update;
      const ForecastDesign d = extend_for_forecast(fx.fm, {}, st.x4_hat[2]);
      Eigen::MatrixXd X = d.predict_X.topRows(j);
      Eigen::VectorXd y(j);
      for (long i = 0; i < j; ++i) y(i) = replay[i];
      st.x4_hat[2] = update_latent(fx.model, st, X, y, 1);
    }
    CHECK(st.x4_hat[2] >= 0.75);
    CHECK(st.x4_hat[2] <= 1.25);
  }
}

TEST_CASE("unit-information damping of regime weights") {
  RegimePrior prior;

  SUBCASE("no data returns the prior") {
    prior.p = {0.5, 0.25, 0.25};
    const auto w = damped_weights(prior, {0.0, 0.0, 0.0}, 0);
    CHECK(w[0] == doctest::Approx(0.5));
    CHECK(w[1] == doctest::Approx(0.25));
  }
  SUBCASE("a 50-nat lead dominates") {
    const auto w = damped_weights(prior, {0.0, 50.0, 0.0}, 20);
    CHECK(w[1] > 0.999);
  }
  SUBCASE("equal PLLs give the damped prior") {
    prior.p = {0.5, 0.25, 0.25};
    const long j = 3;
    const auto w = damped_weights(prior, {7.0, 7.0, 7.0}, j);
    const double e = 1.0 / (j + 1);
    const double z = std::pow(0.5, e) + 2.0 * std::pow(0.25, e);
    CHECK(w[0] == doctest::Approx(std::pow(0.5, e) / z).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(std::pow(0.25, e) / z).epsilon(1e-12));
  }
  SUBCASE("weights always form a simplex") {
    Rng rng(63);
    for (int rep = 0; rep < 50; ++rep) {
      prior.p = {rng.uniform(), rng.uniform(), rng.uniform()};
      const double s = prior.p[0] + prior.p[1] + prior.p[2];
      for (auto& v : prior.p) v /= s;
      const auto w = damped_weights(
          prior, {5.0 * rng.normal(), 5.0 * rng.normal(), 5.0 * rng.normal()},
          static_cast<long>(rng.uniform() * 50));
      CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));
      for (double v : w) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("week-zero forecasts pool equal thirds under a uniform prior") {
  const LatentFixture fx;
  const RegimePrior prior;
  const LatentState state;
  const auto res =
      forecast_week(fx.fm, fx.model, {}, prior, state, 0, 3000, 99);
  CHECK(res.ensemble.draws() == 3 * 1000);
  CHECK(res.ensemble.weights.sum() == doctest::Approx(1.0));
  CHECK(res.ensemble.weights.minCoeff() ==
        doctest::Approx(res.ensemble.weights.maxCoeff()));
  CHECK(res.state.weights[0] == doctest::Approx(1.0 / 3));
  CHECK(res.ensemble.trajectories.minCoeff() >= 0.0);

  SUBCASE("deterministic given the seed") {
    const auto res2 =
        forecast_week(fx.fm, fx.model, {}, prior, state, 0, 3000, 99);
    CHECK((res.ensemble.trajectories - res2.ensemble.trajectories)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("a fully observed season still yields 52-week trajectories") {
  const LatentFixture fx;
  const auto& replay = fx.series.transformed[8];
  std::vector<double> obs(replay.begin(), replay.end());
  const auto res = forecast_week(fx.fm, fx.model, obs, RegimePrior{},
                                 LatentState{}, 52, 600, 3);
  CHECK(res.ensemble.weeks() == kSeasonWeeks);
  CHECK(res.ensemble.draws() >= 600);
  CHECK(res.state.weights[0] + res.state.weights[1] + res.state.weights[2] ==
        doctest::Approx(1.0));
}

TEST_CASE("tied nuggets and an ignorable severity input reduce to one GP") {
  const LatentFixture fx;
  // Huge severity lengthscale: the latent coordinate stops mattering, and
  // with equal nuggets the three branches sample one homoskedastic GP.
  HetGPModel flat = make_model({0.05, 1.0, 1.0, 1e8}, fx.model.tau2,
                               {0.05, 0.05, 0.05}, InputScaling{}, fx.fm.X,
                               fx.fm.y);
  const RegimePrior prior;
  const LatentState state;
  const auto pooled =
      forecast_week(fx.fm, flat, {}, prior, state, 0, 30000, 7);

  const ForecastDesign d = extend_for_forecast(fx.fm, {}, 0.0);
  const PredictiveMVN single = predict(flat, d.predict_X, 0, true);
  for (int w = 0; w < kSeasonWeeks; w += 7) {
    const double mc_mean =
        pooled.ensemble.weights.dot(pooled.ensemble.trajectories.col(w));
    double expect = 0.0;  // transformed-normal mean via quadrature
    const double mu = single.mean(w), sd = std::sqrt(single.cov(w, w));
    const int q = 400;
    for (int i = 0; i < q; ++i) {
      const double z = -5.0 + 10.0 * (i + 0.5) / q;
      const double phi =
          std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * (10.0 / q);
      expect += phi * std::max(0.0, inverse_transform(mu + sd * z));
    }
    CHECK(mc_mean == doctest::Approx(expect).epsilon(0.05));
  }
}
