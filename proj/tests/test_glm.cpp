#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "incast/glm.hpp"
#include "incast/rng.hpp"
#include "incast/transform.hpp"

using namespace incast;

namespace {

SeasonSeries series_from_flat(const std::vector<double>& cases) {
  SeasonSeries s;
  s.locale = "test";
  const size_t n_seasons = cases.size() / kSeasonWeeks;
  for (size_t i = 0; i < n_seasons; ++i) {
    s.season_labels.push_back("s" + std::to_string(i));
    std::vector<double> season(cases.begin() + i * kSeasonWeeks,
                               cases.begin() + (i + 1) * kSeasonWeeks);
    std::vector<double> tr(kSeasonWeeks);
    for (int w = 0; w < kSeasonWeeks; ++w)
      tr[w] = forward_transform(season[w]);
    s.counts.push_back(std::move(season));
    s.transformed.push_back(std::move(tr));
  }
  return s;
}

// Poisson IRLS reference for the dispersion -> infinity limit.
Eigen::VectorXd poisson_fit(const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  beta(0) = std::log(std::max(y.mean(), 1e-8));
  for (int it = 0; it < 80; ++it) {
    const Eigen::VectorXd eta = X * beta;
    const Eigen::VectorXd mu = eta.array().exp();
    const Eigen::VectorXd w = mu.cwiseSqrt();
    Eigen::VectorXd z(y.size());
    for (long i = 0; i < y.size(); ++i)
      z(i) = eta(i) + (y(i) - mu(i)) / mu(i);
    const Eigen::MatrixXd Xw = w.asDiagonal() * X;
    beta = Xw.colPivHouseholderQr().solve(w.cwiseProduct(z));
  }
  return beta;
}

}  // namespace

TEST_CASE("ten-week one-sided smoother") {
  SUBCASE("constant series") {
    std::vector<double> c(30, 4.5);
    const auto s = smooth(c);
    for (int t = 0; t < 9; ++t) CHECK(!s[t].has_value());
    for (int t = 9; t < 30; ++t) CHECK(*s[t] == doctest::Approx(4.5));
  }
  SUBCASE("unit impulse spreads as 0.1 for ten weeks") {
    std::vector<double> c(40, 0.0);
    c[15] = 1.0;
    const auto s = smooth(c);
    for (int t = 15; t < 25; ++t) CHECK(*s[t] == doctest::Approx(0.1));
    CHECK(*s[25] == doctest::Approx(0.0));
  }
  SUBCASE("random series matches the direct average") {
    Rng rng(81);
    std::vector<double> c(60);
    for (auto& v : c) v = rng.normal();
    const auto s = smooth(c);
    for (int t = 9; t < 60; ++t) {
      double acc = 0.0;
      for (int u = t - 9; u <= t; ++u) acc += c[u];
      CHECK(*s[t] == doctest::Approx(acc / 10.0).epsilon(1e-12));
    }
  }
  SUBCASE("linearity") {
    Rng rng(82);
    std::vector<double> a(30), b(30), mix(30);
    for (int t = 0; t < 30; ++t) {
      a[t] = rng.normal();
      b[t] = rng.normal();
      mix[t] = 2.0 * a[t] - 3.0 * b[t];
    }
    const auto sa = smooth(a), sb = smooth(b), sm = smooth(mix);
    for (int t = 9; t < 30; ++t)
      CHECK(*sm[t] == doctest::Approx(2.0 * *sa[t] - 3.0 * *sb[t]));
  }
}

TEST_CASE("basic reproductive rate") {
  SUBCASE("all-ones traits") {
    MosquitoTraits tr{1, 1, 1, 1, 1, 1, 1, 1, 1};
    CHECK(r0(tr) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  }
  SUBCASE("no competence means no transmission") {
    MosquitoTraits tr{1, 0, 1, 1, 1, 1, 1, 1, 1};
    CHECK(r0(tr) == 0.0);
  }
  SUBCASE("doubling the human density scales by 1/sqrt(2)") {
    MosquitoTraits tr{0.3, 0.5, 0.1, 0.2, 5.0, 0.8, 0.1, 100.0, 0.14};
    MosquitoTraits tr2 = tr;
    tr2.N *= 2.0;
    CHECK(r0(tr2) == doctest::Approx(r0(tr) / std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("zero denominators are rejected") {
    MosquitoTraits tr{1, 1, 0, 1, 1, 1, 1, 1, 1};
    CHECK_THROWS_AS(r0(tr), std::domain_error);
  }
  SUBCASE("composed density route matches the inlined formula") {
    Rng rng(83);
    for (int rep = 0; rep < 100; ++rep) {
      MosquitoTraits tr{0.1 + rng.uniform(),  rng.uniform(),
                        0.05 + rng.uniform(), 0.05 + rng.uniform(),
                        10.0 * rng.uniform(), rng.uniform(),
                        0.05 + rng.uniform(), 1.0 + 99.0 * rng.uniform(),
                        0.05 + rng.uniform()};
      const double inlined = std::sqrt(
          (tr.EFD * tr.pEA * tr.MDR / (tr.mu * tr.mu)) / (tr.N * tr.r) *
          tr.a * tr.a * tr.bc * std::exp(-tr.mu / tr.PDR) / tr.mu);
      CHECK(std::abs(r0(tr) - inlined) <= 1e-12 * std::max(1.0, inlined));
    }
  }
}

TEST_CASE("scaled reproductive rate") {
  std::vector<double> v{2.0, 4.0, 6.0};
  const auto s = r0_scaled(v);
  CHECK(s[0] == 0.0);
  CHECK(s[1] == doctest::Approx(0.5));
  CHECK(s[2] == 1.0);
  std::vector<double> c{3.0, 3.0, 3.0};
  for (double u : r0_scaled(c)) CHECK(u == 0.5);
}

TEST_CASE("trait curves interpolate in temperature") {
  namespace fs = std::filesystem;
  const fs::path p = fs::temp_directory_path() / "traits.csv";
  {
    std::ofstream out(p);
    out << "temperature,a,bc,mu,PDR,EFD,pEA,MDR\n";
    out << "15,0.1,0.2,0.2,0.05,2,0.5,0.05\n";
    out << "25,0.3,0.6,0.1,0.15,8,0.9,0.15\n";
    out << "35,0.05,0.1,0.4,0.02,1,0.2,0.02\n";
  }
  const TraitCurve curve = load_trait_curve(p.string(), 100.0, 0.14);
  CHECK(curve.at(20.0).a == doctest::Approx(0.2));
  CHECK(curve.at(10.0).a == doctest::Approx(0.1));  // clamped
  CHECK(curve.at(40.0).bc == doctest::Approx(0.1));
  CHECK(curve.at(25.0).N == 100.0);

  std::vector<std::optional<double>> tavg{20.0, 25.0, std::nullopt, 30.0};
  const auto pred = r0_predictor(tavg, curve);
  CHECK(pred[0].has_value());
  CHECK(!pred[2].has_value());
  for (const auto& v : pred)
    if (v) {
      CHECK(*v >= 0.0);
      CHECK(*v <= 1.0);
    }
}

TEST_CASE("negative binomial regression") {
  Rng rng(84);

  SUBCASE("intercept-only recovers the log mean") {
    Eigen::VectorXd y(400);
    for (long i = 0; i < y.size(); ++i)
      y(i) = static_cast<double>(rng.neg_binomial(7.0, 3.0));
    const NegBinModel m = fit_negbin(Eigen::MatrixXd(400, 0), y);
    CHECK(m.beta(0) == doctest::Approx(std::log(y.mean())).epsilon(1e-6));
  }
  SUBCASE("Poisson data pushes the dispersion to the boundary") {
    // Means around 100 pin the overdispersion near zero.
    const long n = 2000;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) {
      X(i, 0) = rng.uniform();
      y(i) = static_cast<double>(
          rng.poisson(std::exp(4.0 + 0.8 * X(i, 0))));
    }
    const NegBinModel m = fit_negbin(X, y);
    CHECK(m.dispersion > 1e3);
    Eigen::MatrixXd Xi(n, 2);
    Xi.col(0).setOnes();
    Xi.col(1) = X.col(0);
    const Eigen::VectorXd pois = poisson_fit(Xi, y);
    CHECK(std::abs(m.beta(0) - pois(0)) < 1e-3);
    CHECK(std::abs(m.beta(1) - pois(1)) < 1e-3);
  }
  SUBCASE("coefficients recovered within three standard errors") {
    const long n = 2000;
    const double size = 5.0;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    const Eigen::Vector3d beta_true{1.2, 0.7, -0.5};
    for (long i = 0; i < n; ++i) {
      X(i, 0) = rng.normal();
      X(i, 1) = rng.uniform();
      const double mu =
          std::exp(beta_true(0) + beta_true(1) * X(i, 0) +
                   beta_true(2) * X(i, 1));
      y(i) = static_cast<double>(rng.neg_binomial(mu, size));
    }
    const NegBinModel m = fit_negbin(X, y);
    // Fisher information at the truth gives the error scale.
    Eigen::MatrixXd Xi(n, 3);
    Xi.col(0).setOnes();
    Xi.rightCols(2) = X;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(3, 3);
    for (long i = 0; i < n; ++i) {
      const double mu = std::exp(Xi.row(i).dot(beta_true));
      info += Xi.row(i).transpose() * Xi.row(i) * (mu / (1.0 + mu / size));
    }
    const Eigen::MatrixXd cov = info.inverse();
    for (int k = 0; k < 3; ++k)
      CHECK(std::abs(m.beta(k) - beta_true(k)) <
            3.0 * std::sqrt(cov(k, k)));
  }
  SUBCASE("rank-deficient designs are rejected") {
    Eigen::MatrixXd X(50, 2);
    X.col(0).setConstant(2.0);
    X.col(1).setConstant(4.0);
    Eigen::VectorXd y = Eigen::VectorXd::Constant(50, 3.0);
    CHECK_THROWS_AS(fit_negbin(X, y), std::invalid_argument);
  }
}

TEST_CASE("universe columns match hand-computed values") {
  // cases[t] = t makes every indexing mistake visible.
  std::vector<double> cases(4 * kSeasonWeeks);
  for (size_t t = 0; t < cases.size(); ++t)
    cases[t] = static_cast<double>(t);
  const SeasonSeries series = series_from_flat(cases);

  CovariateFrame frame;
  frame.names = {"precipitation"};
  frame.columns.resize(1);
  Rng rng(85);
  for (size_t t = 0; t < cases.size(); ++t)
    frame.columns[0].push_back(5.0 + rng.uniform());

  UniverseConfig cfg;
  cfg.smoothed.push_back(
      {"lp", "precipitation", ColumnTransform::log1p, {1, 4}});
  const PredictorUniverse u =
      build_universe(series, frame, cfg, 4 * kSeasonWeeks);

  REQUIRE(u.columns.size() == 6 + 2 + 2);
  const long t = u.row_week[10];
  const long r = 10;
  auto col_idx = [&](const std::string& name) {
    for (size_t c = 0; c < u.columns.size(); ++c)
      if (u.columns[c].name == name) return static_cast<long>(c);
    FAIL("missing column ", name);
    return -1L;
  };
  CHECK(u.design(r, col_idx("t")) == static_cast<double>(t + 1));
  double ci = 0.0;
  for (long q = t - 52; q < t; ++q) ci += cases[q];
  CHECK(u.design(r, col_idx("ci")) == doctest::Approx(ci));
  CHECK(u.design(r, col_idx("sin52")) ==
        doctest::Approx(std::sin(2.0 * M_PI * (t + 1) / 52.0)));
  double ly = 0.0;
  for (long q = t - 10; q < t; ++q) ly += std::log1p(cases[q]);
  CHECK(u.design(r, col_idx("ly.1")) == doctest::Approx(ly / 10.0));
  double lgm = 0.0;
  for (long q = t - 9; q <= t; ++q) {
    const long season = q / kSeasonWeeks, w = q % kSeasonWeeks;
    double acc = 0.0;
    for (long s = 0; s < season; ++s)
      acc += std::log1p(cases[s * kSeasonWeeks + w]);
    lgm += acc / season;
  }
  CHECK(u.design(r, col_idx("lgm")) == doctest::Approx(lgm / 10.0));
  double lp4 = 0.0;
  for (long q = t - 4 - 9; q <= t - 4; ++q)
    lp4 += std::log1p(*frame.columns[0][q]);
  CHECK(u.design(r, col_idx("lp.4")) == doctest::Approx(lp4 / 10.0));
  CHECK(u.y(r) == cases[t]);
}

TEST_CASE("stepwise search honors its contract") {
  Rng rng(86);
  const long n = 600;
  PredictorUniverse u;
  auto add_col = [&](const std::string& name, ColumnKind kind) {
    UniverseColumn c;
    c.name = name;
    c.kind = kind;
    u.columns.push_back(c);
  };
  add_col("t", ColumnKind::deterministic);
  add_col("signal", ColumnKind::covariate);
  for (int k = 0; k < 5; ++k)
    add_col("noise" + std::to_string(k), ColumnKind::covariate);

  u.design.resize(n, u.columns.size());
  u.y.resize(n);
  for (long i = 0; i < n; ++i) {
    u.design(i, 0) = static_cast<double>(i) / n;
    for (int c = 1; c < 7; ++c) u.design(i, c) = rng.normal();
    const double mu = std::exp(1.0 + 1.2 * u.design(i, 1));
    u.y(i) = static_cast<double>(rng.neg_binomial(mu, 8.0));
  }

  const NegBinModel m = step_bic(u);
  CHECK(std::count(m.selected.begin(), m.selected.end(), "signal") == 1);
  long noise = 0;
  for (const auto& s : m.selected)
    if (s.rfind("noise", 0) == 0) ++noise;
  CHECK(noise <= 1);

  // Never worse than the deterministic-only start.
  Eigen::MatrixXd det(n, 1);
  det.col(0) = u.design.col(0);
  const NegBinModel start = fit_negbin(det, u.y, {"t"});
  CHECK(m.bic <= start.bic);
}

TEST_CASE("covariate submodels") {
  Rng rng(87);

  SUBCASE("AR(1) coefficient recovery") {
    const long n = 1000;
    CovariateFrame frame;
    frame.names = {"x"};
    frame.columns.resize(1);
    double v = 0.0;
    for (long t = 0; t < n; ++t) {
      v = 0.5 + 0.8 * v + 0.3 * rng.normal();
      frame.columns[0].push_back(v);
    }
    const auto models = fit_submodels(frame);
    CHECK(models.at("x").beta(1) == doctest::Approx(0.8).epsilon(0.07));
  }
  SUBCASE("pure sinusoid is captured almost exactly") {
    CovariateFrame frame;
    frame.names = {"x"};
    frame.columns.resize(1);
    double var_signal = 0.0;
    for (long t = 0; t < 600; ++t) {
      const double v = std::sin(2.0 * M_PI * (t + 1) / 52.0);
      frame.columns[0].push_back(v);
      var_signal += v * v;
    }
    var_signal /= 600.0;
    const auto models = fit_submodels(frame);
    CHECK(models.at("x").sigma2 < 0.01 * var_signal);
  }
  SUBCASE("one-step mean at horizon zero") {
    CovariateFrame frame;
    frame.names = {"x"};
    frame.columns.resize(1);
    for (long t = 0; t < 200; ++t)
      frame.columns[0].push_back(0.2 * t + rng.normal());
    const auto models = fit_submodels(frame);
    const Submodel& sm = models.at("x");
    const double pred = sm.predict_mean(*frame.columns[0][199], 200);
    CHECK(std::isfinite(pred));
    CHECK(pred == doctest::Approx(0.2 * 200).epsilon(0.25));
  }
  SUBCASE("short columns are rejected") {
    CovariateFrame frame;
    frame.names = {"x"};
    frame.columns.resize(1);
    for (long t = 0; t < 50; ++t) frame.columns[0].push_back(1.0 * t);
    CHECK_THROWS_AS(fit_submodels(frame), std::invalid_argument);
  }
  SUBCASE("a pure linear trend collides with the lag and drops the trend") {
    // v_{t-1} = t - 1 is collinear with the trend column t.
    CovariateFrame frame;
    frame.names = {"x"};
    frame.columns.resize(1);
    for (long t = 0; t < 200; ++t)
      frame.columns[0].push_back(static_cast<double>(t));
    const auto models = fit_submodels(frame);
    CHECK(!models.at("x").has_trend);
    const double pred = models.at("x").predict_mean(199.0, 200);
    CHECK(pred == doctest::Approx(200.0).epsilon(0.02));
  }
}

TEST_CASE("Markov forward simulation") {
  // Shared context: 3 seasons of mildly varying counts.
  Rng mk(88);
  std::vector<double> cases(3 * kSeasonWeeks);
  for (size_t t = 0; t < cases.size(); ++t)
    cases[t] = std::floor(20.0 + 10.0 * mk.uniform());
  const SeasonSeries series = series_from_flat(cases);
  CovariateFrame frame;  // no covariates needed below
  const UniverseConfig empty_cfg;
  const PredictorUniverse u =
      build_universe(series, frame, empty_cfg, 3 * kSeasonWeeks);

  SUBCASE("horizon zero returns only the observed prefix") {
    NegBinModel m;
    m.names = {"(Intercept)"};
    m.beta = Eigen::VectorXd::Constant(1, std::log(20.0));
    m.dispersion = 10.0;
    GlmForecastOptions opts;
    opts.draws = 5;
    const ForecastEnsemble ens = glm_forecast(m, {}, u, 4, 0, opts);
    CHECK(ens.weeks() == 4);
    for (long i = 0; i < 5; ++i)
      for (int w = 0; w < 4; ++w)
        CHECK(ens.trajectories(i, w) ==
              u.cases[3 * kSeasonWeeks - 4 + w]);
  }
  SUBCASE("intercept-only marginals match the closed-form mean") {
    NegBinModel m;
    m.names = {"(Intercept)"};
    m.beta = Eigen::VectorXd::Constant(1, std::log(20.0));
    m.dispersion = 10.0;
    GlmForecastOptions opts;
    opts.draws = 100000;
    opts.seed = 5;
    const ForecastEnsemble ens = glm_forecast(m, {}, u, 0, 10, opts);
    for (int w = 0; w < 10; ++w)
      CHECK(ens.trajectories.col(w).mean() ==
            doctest::Approx(20.0).epsilon(0.02));
  }
  SUBCASE("deterministic-terms model matches closed-form linked means") {
    NegBinModel m;
    m.names = {"(Intercept)", "sin52", "cos52"};
    m.beta.resize(3);
    m.beta << std::log(15.0), 0.4, -0.2;
    m.selected = {"sin52", "cos52"};
    m.dispersion = 50.0;
    GlmForecastOptions opts;
    opts.draws = 60000;
    opts.seed = 6;
    const ForecastEnsemble ens = glm_forecast(m, {}, u, 0, 8, opts);
    const long T = 3 * kSeasonWeeks;
    for (int h = 0; h < 8; ++h) {
      const double ang = 2.0 * M_PI * (T + h + 1) / 52.0;
      const double mu =
          std::exp(std::log(15.0) + 0.4 * std::sin(ang) - 0.2 * std::cos(ang));
      CHECK(ens.trajectories.col(h).mean() ==
            doctest::Approx(mu).epsilon(0.03));
    }
  }
  SUBCASE("fixed seeds reproduce the ensemble") {
    NegBinModel m;
    m.names = {"(Intercept)"};
    m.beta = Eigen::VectorXd::Constant(1, std::log(20.0));
    m.dispersion = 10.0;
    GlmForecastOptions opts;
    opts.draws = 200;
    opts.seed = 11;
    const ForecastEnsemble a = glm_forecast(m, {}, u, 4, 48, opts);
    const ForecastEnsemble b = glm_forecast(m, {}, u, 4, 48, opts);
    CHECK((a.trajectories - b.trajectories).cwiseAbs().maxCoeff() == 0.0);
  }
}
