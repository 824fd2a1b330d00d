#include "incast/glm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "incast/csv.hpp"
#include "incast/rng.hpp"

namespace incast {

namespace {

constexpr int kSmoothWindow = 10;
constexpr double kEtaClamp = 30.0;

double apply_transform(ColumnTransform t, double v) {
  switch (t) {
    case ColumnTransform::identity: return v;
    case ColumnTransform::square: return v * v;
    case ColumnTransform::log1p: return std::log1p(v);
    case ColumnTransform::sq_log1p: {
      const double l = std::log1p(v);
      return l * l;
    }
  }
  return v;
}

}  // namespace

std::vector<std::optional<double>> smooth(std::span<const double> series) {
  std::vector<std::optional<double>> out(series.size());
  if (series.size() < kSmoothWindow) return out;
  double acc = 0.0;
  for (size_t t = 0; t < series.size(); ++t) {
    acc += series[t];
    if (t >= kSmoothWindow) acc -= series[t - kSmoothWindow];
    if (t >= kSmoothWindow - 1) out[t] = acc / kSmoothWindow;
  }
  return out;
}

double r0(const MosquitoTraits& tr) {
  if (tr.mu <= 0.0 || tr.PDR <= 0.0 || tr.N <= 0.0 || tr.r <= 0.0)
    throw std::domain_error("r0: mu, PDR, N and r must be positive");
  const double M = tr.EFD * tr.pEA * tr.MDR / (tr.mu * tr.mu);
  const double inner =
      (M / (tr.N * tr.r)) * tr.a * tr.a * tr.bc * std::exp(-tr.mu / tr.PDR) /
      tr.mu;
  return std::sqrt(inner);
}

std::vector<double> r0_scaled(std::span<const double> weekly_r0) {
  if (weekly_r0.empty())
    throw std::invalid_argument("r0_scaled: empty series");
  const auto [mn, mx] = std::minmax_element(weekly_r0.begin(), weekly_r0.end());
  std::vector<double> out(weekly_r0.size());
  if (*mx - *mn <= 0.0) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = (weekly_r0[i] - *mn) / (*mx - *mn);
  return out;
}

MosquitoTraits TraitCurve::at(double temp) const {
  if (temp <= temperature.front()) return traits.front();
  if (temp >= temperature.back()) return traits.back();
  size_t hi = 1;
  while (temperature[hi] < temp) ++hi;
  const double t0 = temperature[hi - 1], t1 = temperature[hi];
  const double u = (temp - t0) / (t1 - t0);
  const MosquitoTraits& A = traits[hi - 1];
  const MosquitoTraits& B = traits[hi];
  auto lerp = [u](double a, double b) { return a + u * (b - a); };
  return {lerp(A.a, B.a),     lerp(A.bc, B.bc),   lerp(A.mu, B.mu),
          lerp(A.PDR, B.PDR), lerp(A.EFD, B.EFD), lerp(A.pEA, B.pEA),
          lerp(A.MDR, B.MDR), A.N,                A.r};
}

TraitCurve load_trait_curve(const std::string& path, double human_density,
                            double recovery_rate) {
  const CsvTable table = read_csv(path);
  const std::vector<std::string> want = {"temperature", "a",   "bc", "mu",
                                         "PDR",         "EFD", "pEA", "MDR"};
  std::vector<int> idx;
  for (const auto& w : want) {
    const int c = table.column(w);
    if (c < 0) throw std::runtime_error(path + ": missing column " + w);
    idx.push_back(c);
  }
  TraitCurve curve;
  for (size_t r = 0; r < table.rows.size(); ++r) {
    std::array<double, 8> v{};
    for (size_t k = 0; k < idx.size(); ++k) {
      const auto cell = parse_cell(table.rows[r][idx[k]],
                                   path + ": row " + std::to_string(r + 2));
      if (!cell) throw std::runtime_error(path + ": missing trait value");
      v[k] = *cell;
    }
    curve.temperature.push_back(v[0]);
    curve.traits.push_back({v[1], v[2], v[3], v[4], v[5], v[6], v[7],
                            human_density, recovery_rate});
  }
  if (curve.temperature.size() < 2)
    throw std::runtime_error(path + ": need at least 2 temperature rows");
  for (size_t i = 1; i < curve.temperature.size(); ++i)
    if (curve.temperature[i] <= curve.temperature[i - 1])
      throw std::runtime_error(path + ": temperatures must increase");
  return curve;
}

std::vector<std::optional<double>> r0_predictor(
    std::span<const std::optional<double>> tavg, const TraitCurve& curve) {
  std::vector<double> weekly(tavg.size(), 0.0);
  std::vector<bool> present(tavg.size(), false);
  for (size_t t = 0; t < tavg.size(); ++t) {
    if (!tavg[t]) continue;
    present[t] = true;
    const MosquitoTraits tr = curve.at(*tavg[t]);
    // Rates at thermal extremes can hit zero; no transmission there.
    if (tr.mu <= 0.0 || tr.PDR <= 0.0)
      weekly[t] = 0.0;
    else
      weekly[t] = r0(tr);
  }
  std::vector<double> observed;
  for (size_t t = 0; t < tavg.size(); ++t)
    if (present[t]) observed.push_back(weekly[t]);
  if (observed.empty())
    throw std::invalid_argument("r0_predictor: no observed temperatures");
  const auto scaled_obs = r0_scaled(observed);
  std::vector<std::optional<double>> out(tavg.size());
  size_t k = 0;
  for (size_t t = 0; t < tavg.size(); ++t)
    if (present[t]) out[t] = scaled_obs[k++];
  return out;
}

double negbin_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                     double size) {
  double ll = 0.0;
  for (long i = 0; i < y.size(); ++i) {
    const double m = std::max(mu(i), 1e-12);
    ll += std::lgamma(y(i) + size) - std::lgamma(size) -
          std::lgamma(y(i) + 1.0) + size * std::log(size / (size + m)) +
          y(i) * std::log(m / (size + m));
  }
  return ll;
}

namespace {

double negbin_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                       double size) {
  double dev = 0.0;
  for (long i = 0; i < y.size(); ++i) {
    const double m = std::max(mu(i), 1e-12);
    double term = -(y(i) + size) * std::log((y(i) + size) / (m + size));
    if (y(i) > 0.0) term += y(i) * std::log(y(i) / m);
    dev += 2.0 * term;
  }
  return dev;
}

// Profile maximization of the size on the log scale.
double optimize_size(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  constexpr double kGolden = 0.6180339887498949;
  double a = std::log(1e-2), b = std::log(1e6);
  double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
  double f1 = negbin_loglik(y, mu, std::exp(x1));
  double f2 = negbin_loglik(y, mu, std::exp(x2));
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = negbin_loglik(y, mu, std::exp(x2));
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = negbin_loglik(y, mu, std::exp(x1));
    }
  }
  return std::exp(f1 > f2 ? x1 : x2);
}

Eigen::VectorXd irls_negbin(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double size, Eigen::VectorXd beta,
                            std::vector<double>* trace) {
  const long n = y.size();
  double dev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 60; ++it) {
    Eigen::VectorXd eta = (X * beta).cwiseMax(-kEtaClamp).cwiseMin(kEtaClamp);
    Eigen::VectorXd mu = eta.array().exp();
    Eigen::VectorXd w(n), z(n);
    for (long i = 0; i < n; ++i) {
      w(i) = std::sqrt(mu(i) / (1.0 + mu(i) / size));
      z(i) = eta(i) + (y(i) - mu(i)) / mu(i);
    }
    Eigen::MatrixXd Xw = w.asDiagonal() * X;
    Eigen::VectorXd zw = w.cwiseProduct(z);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols())
      throw std::invalid_argument("fit_negbin: design is rank deficient");
    beta = qr.solve(zw);

    eta = (X * beta).cwiseMax(-kEtaClamp).cwiseMin(kEtaClamp);
    mu = eta.array().exp();
    const double new_dev = negbin_deviance(y, mu, size);
    if (trace) trace->push_back(new_dev);
    if (std::abs(new_dev - dev) < 1e-8 * (std::abs(new_dev) + 0.1)) return beta;
    dev = new_dev;
  }
  std::ostringstream msg;
  msg << "fit_negbin: IRLS did not converge; deviance trace:";
  if (trace)
    for (size_t i = trace->size() > 6 ? trace->size() - 6 : 0;
         i < trace->size(); ++i)
      msg << ' ' << (*trace)[i];
  throw std::runtime_error(msg.str());
}

}  // namespace

NegBinModel fit_negbin(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                       const std::vector<std::string>& names) {
  const long n = y.size();
  const long p = design.cols() + 1;
  if (design.rows() != n)
    throw std::invalid_argument("fit_negbin: design/response mismatch");
  if (n <= p)
    throw std::invalid_argument("fit_negbin: need more rows than columns");

  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = design;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = std::log(std::max(y.mean(), 1e-8));
  double size = 1.0;
  std::vector<double> trace;

  double ll = -std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < 25; ++outer) {
    beta = irls_negbin(X, y, size, beta, &trace);
    const Eigen::VectorXd mu =
        (X * beta).cwiseMax(-kEtaClamp).cwiseMin(kEtaClamp).array().exp();
    size = optimize_size(y, mu);
    const double new_ll = negbin_loglik(y, mu, size);
    if (std::abs(new_ll - ll) < 1e-8 * (1.0 + std::abs(new_ll))) {
      ll = new_ll;
      break;
    }
    ll = new_ll;
  }

  NegBinModel model;
  model.names.push_back("(Intercept)");
  for (long c = 0; c < p - 1; ++c)
    model.names.push_back(c < static_cast<long>(names.size())
                              ? names[c]
                              : "x" + std::to_string(c + 1));
  model.beta = beta;
  model.dispersion = size;
  model.loglik = ll;
  model.bic = -2.0 * ll + static_cast<double>(p + 1) * std::log(n);
  return model;
}

std::optional<double> eval_column(const UniverseColumn& col, long t,
                                  std::span<const double> cases,
                                  std::span<const double> source) {
  const long week1 = t + 1;  // absolute week number, 1-based
  switch (col.kind) {
    case ColumnKind::deterministic: {
      if (col.name == "t") return static_cast<double>(week1);
      if (col.name == "ci") {
        if (t < kSeasonWeeks) return std::nullopt;
        double acc = 0.0;
        for (long u = t - kSeasonWeeks; u < t; ++u) acc += cases[u];
        return acc;
      }
      const double ang52 = 2.0 * M_PI * week1 / 52.0;
      const double ang26 = 2.0 * M_PI * week1 / 26.0;
      if (col.name == "sin52") return std::sin(ang52);
      if (col.name == "cos52") return std::cos(ang52);
      if (col.name == "sin26") return std::sin(ang26);
      if (col.name == "cos26") return std::cos(ang26);
      throw std::invalid_argument("unknown deterministic column " + col.name);
    }
    case ColumnKind::autoregressive: {
      // Lagged smoothed log cases.
      const long end = t - col.lag;  // last week entering the smoother
      if (end - (kSmoothWindow - 1) < 0) return std::nullopt;
      double acc = 0.0;
      for (long u = end - (kSmoothWindow - 1); u <= end; ++u)
        acc += std::log1p(cases[u]);
      return acc / kSmoothWindow;
    }
    case ColumnKind::seasonal_mean: {
      // Smoothed mean of same-week log cases over all previous seasons.
      if (t - (kSmoothWindow - 1) < 0) return std::nullopt;
      double acc = 0.0;
      for (long u = t - (kSmoothWindow - 1); u <= t; ++u) {
        const long season = u / kSeasonWeeks;
        if (season == 0) return std::nullopt;
        const long w = u % kSeasonWeeks;
        double lg = 0.0;
        for (long s = 0; s < season; ++s)
          lg += std::log1p(cases[s * kSeasonWeeks + w]);
        acc += lg / static_cast<double>(season);
      }
      return acc / kSmoothWindow;
    }
    case ColumnKind::covariate: {
      const long end = t - col.lag;
      if (end - (kSmoothWindow - 1) < 0 ||
          end >= static_cast<long>(source.size()))
        return std::nullopt;
      double acc = 0.0;
      for (long u = end - (kSmoothWindow - 1); u <= end; ++u)
        acc += apply_transform(col.transform, source[u]);
      return acc / kSmoothWindow;
    }
  }
  return std::nullopt;
}

UniverseConfig universe_preset(const std::string& locale) {
  UniverseConfig cfg;
  auto add = [&cfg](const std::string& name, const std::string& source,
                    ColumnTransform tr, std::vector<int> lags) {
    cfg.smoothed.push_back({name, source, tr, std::move(lags)});
  };
  if (locale == "san_juan") {
    add("lpop", "population", ColumnTransform::log1p, {1});
    add("lp", "precipitation", ColumnTransform::log1p, {1});
    add("lp2", "precipitation", ColumnTransform::sq_log1p, {1});
    add("tavg", "tavg", ColumnTransform::identity, {1, 11});
    add("tavg2", "tavg", ColumnTransform::square, {1, 11});
    add("ndvi45", "ndvi45", ColumnTransform::identity, {1, 16});
    add("ndvi50", "ndvi50", ColumnTransform::identity, {1, 11});
    add("r0", "r0", ColumnTransform::identity, {1, 11});
    add("nino12", "nino12", ColumnTransform::identity, {1, 6, 32});
    add("soi", "soi", ColumnTransform::identity, {1, 24});
  } else if (locale == "iquitos") {
    add("lp", "precipitation", ColumnTransform::log1p, {1});
    add("lp2", "precipitation", ColumnTransform::sq_log1p, {1});
    add("tavg", "tavg", ColumnTransform::identity, {1, 11});
    add("tavg2", "tavg", ColumnTransform::square, {1, 11});
    add("ndviavg", "ndviavg", ColumnTransform::identity, {1});
    add("r0", "r0", ColumnTransform::identity, {1});
    add("nino12", "nino12", ColumnTransform::identity, {1});
    add("soi", "soi", ColumnTransform::identity, {1});
  } else {
    throw std::invalid_argument("no universe preset for locale " + locale);
  }
  return cfg;
}

PredictorUniverse build_universe(const SeasonSeries& series,
                                 const CovariateFrame& covariates,
                                 const UniverseConfig& cfg, long weeks_limit) {
  PredictorUniverse u;
  const long total =
      static_cast<long>(series.n_seasons()) * kSeasonWeeks;
  const long T = std::min(weeks_limit, total);
  if (T < 2 * kSeasonWeeks)
    throw std::invalid_argument("build_universe: need >= 2 seasons of data");

  u.cases.reserve(T);
  for (long t = 0; t < T; ++t)
    u.cases.push_back(series.counts[t / kSeasonWeeks][t % kSeasonWeeks]);

  for (const std::string name : {"t", "ci", "sin52", "cos52", "sin26",
                                 "cos26"}) {
    UniverseColumn c;
    c.name = name;
    c.kind = ColumnKind::deterministic;
    c.smoothed = false;
    u.columns.push_back(c);
  }
  {
    UniverseColumn ar;
    ar.name = "ly.1";
    ar.kind = ColumnKind::autoregressive;
    ar.transform = ColumnTransform::log1p;
    ar.lag = 1;
    u.columns.push_back(ar);
    UniverseColumn lgm;
    lgm.name = "lgm";
    lgm.kind = ColumnKind::seasonal_mean;
    u.columns.push_back(lgm);
  }
  for (const auto& spec : cfg.smoothed) {
    const int src = covariates.column(spec.source);
    if (src < 0) {
      std::cerr << "build_universe: covariate '" << spec.source
                << "' not in frame, skipping predictor " << spec.name << "\n";
      continue;
    }
    const auto& col = covariates.columns[src];
    if (static_cast<long>(col.size()) < T)
      throw std::invalid_argument("build_universe: covariate '" + spec.source +
                                  "' shorter than the incidence span");
    if (u.sources.find(spec.source) == u.sources.end()) {
      std::vector<double> vals(T);
      for (long t = 0; t < T; ++t) {
        if (!col[t])
          throw std::invalid_argument(
              "build_universe: covariate '" + spec.source +
              "' has missing values; impute first");
        vals[t] = *col[t];
      }
      u.sources.emplace(spec.source, std::move(vals));
    }
    for (int lag : spec.lags) {
      UniverseColumn c;
      c.name = spec.name + "." + std::to_string(lag);
      c.kind = ColumnKind::covariate;
      c.source = spec.source;
      c.transform = spec.transform;
      c.lag = lag;
      u.columns.push_back(c);
    }
  }

  const std::span<const double> cases_span(u.cases);
  std::vector<std::span<const double>> source_span(u.columns.size());
  for (size_t c = 0; c < u.columns.size(); ++c)
    if (u.columns[c].kind == ColumnKind::covariate)
      source_span[c] = u.sources.at(u.columns[c].source);

  std::vector<long> rows;
  Eigen::MatrixXd full(T, u.columns.size());
  for (long t = 0; t < T; ++t) {
    bool complete = true;
    for (size_t c = 0; c < u.columns.size(); ++c) {
      const auto v = eval_column(u.columns[c], t, cases_span, source_span[c]);
      if (!v) {
        complete = false;
        break;
      }
      full(t, c) = *v;
    }
    if (complete) rows.push_back(t);
  }
  if (rows.size() < u.columns.size() + 8)
    throw std::invalid_argument("build_universe: too few complete rows");

  u.design.resize(rows.size(), u.columns.size());
  u.y.resize(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    u.design.row(r) = full.row(rows[r]);
    u.y(r) = u.cases[rows[r]];
    u.row_week.push_back(rows[r]);
  }
  return u;
}

NegBinModel step_bic(const PredictorUniverse& universe) {
  const size_t ncol = universe.columns.size();
  std::vector<bool> in(ncol, false);
  for (size_t c = 0; c < ncol; ++c)
    in[c] = universe.columns[c].kind == ColumnKind::deterministic;

  auto fit_subset = [&](const std::vector<bool>& sel) {
    std::vector<long> cols;
    std::vector<std::string> names;
    for (size_t c = 0; c < ncol; ++c)
      if (sel[c]) {
        cols.push_back(static_cast<long>(c));
        names.push_back(universe.columns[c].name);
      }
    Eigen::MatrixXd X(universe.design.rows(), cols.size());
    for (size_t k = 0; k < cols.size(); ++k) X.col(k) = universe.design.col(cols[k]);
    NegBinModel m = fit_negbin(X, universe.y, names);
    m.selected = names;
    return m;
  };

  NegBinModel current = fit_subset(in);
  for (int step = 0; step < 100; ++step) {
    NegBinModel best = current;
    std::vector<bool> best_sel = in;
    bool improved = false;
    for (size_t c = 0; c < ncol; ++c) {
      std::vector<bool> cand = in;
      cand[c] = !cand[c];
      if (std::none_of(cand.begin(), cand.end(), [](bool b) { return b; }))
        continue;
      try {
        NegBinModel m = fit_subset(cand);
        if (m.bic < best.bic - 1e-9) {
          best = std::move(m);
          best_sel = cand;
          improved = true;
        }
      } catch (const std::exception& e) {
        std::cerr << "step_bic: skipping a candidate ("
                  << universe.columns[c].name << "): " << e.what() << "\n";
      }
    }
    if (!improved) break;
    current = std::move(best);
    in = best_sel;
  }
  return current;
}

double Submodel::predict_mean(double prev, long t) const {
  const double week1 = static_cast<double>(t + 1);
  const double ang = 2.0 * M_PI * week1 / 52.0;
  if (has_trend)
    return beta(0) + beta(1) * prev + beta(2) * week1 +
           beta(3) * std::sin(ang) + beta(4) * std::cos(ang);
  return beta(0) + beta(1) * prev + beta(2) * std::sin(ang) +
         beta(3) * std::cos(ang);
}

std::map<std::string, Submodel> fit_submodels(const CovariateFrame& frame) {
  std::map<std::string, Submodel> out;
  for (size_t c = 0; c < frame.names.size(); ++c) {
    const auto& col = frame.columns[c];
    std::vector<long> rows;
    for (size_t t = 1; t < col.size(); ++t)
      if (col[t] && col[t - 1]) rows.push_back(static_cast<long>(t));
    if (rows.size() < 104)
      throw std::invalid_argument("fit_submodels: column '" + frame.names[c] +
                                  "' has fewer than 104 usable weeks");

    auto assemble = [&](bool with_trend) {
      const long p = with_trend ? 5 : 4;
      Eigen::MatrixXd X(rows.size(), p);
      Eigen::VectorXd y(rows.size());
      for (size_t r = 0; r < rows.size(); ++r) {
        const long t = rows[r];
        const double week1 = static_cast<double>(t + 1);
        const double ang = 2.0 * M_PI * week1 / 52.0;
        long k = 0;
        X(r, k++) = 1.0;
        X(r, k++) = *col[t - 1];
        if (with_trend) X(r, k++) = week1;
        X(r, k++) = std::sin(ang);
        X(r, k++) = std::cos(ang);
        y(r) = *col[t];
      }
      return std::make_pair(X, y);
    };

    Submodel sm;
    auto [X, y] = assemble(true);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
      std::tie(X, y) = assemble(false);
      qr.compute(X);
      sm.has_trend = false;
    }
    sm.beta = qr.solve(y);
    const double ssr = (y - X * sm.beta).squaredNorm();
    sm.sigma2 = ssr / static_cast<double>(
                          std::max<long>(1, X.rows() - X.cols()));
    out.emplace(frame.names[c], std::move(sm));
  }
  return out;
}

ForecastEnsemble glm_forecast(const NegBinModel& model,
                              const std::map<std::string, Submodel>& submodels,
                              const PredictorUniverse& universe,
                              int season_weeks_observed, int horizon,
                              const GlmForecastOptions& opts) {
  const long T = static_cast<long>(universe.cases.size());
  const int j = season_weeks_observed;
  if (j < 0 || j > kSeasonWeeks || horizon < 0)
    throw std::invalid_argument("glm_forecast: bad week arguments");

  // Resolve selected columns and the sources they require.
  std::vector<const UniverseColumn*> cols;
  for (const auto& name : model.selected) {
    const UniverseColumn* found = nullptr;
    for (const auto& c : universe.columns)
      if (c.name == name) {
        found = &c;
        break;
      }
    if (!found)
      throw std::invalid_argument("glm_forecast: model term '" + name +
                                  "' not in the universe");
    cols.push_back(found);
  }
  std::set<std::string> needed;
  for (const auto* c : cols)
    if (c->kind == ColumnKind::covariate) needed.insert(c->source);
  for (const auto& s : needed)
    if (submodels.find(s) == submodels.end())
      throw std::invalid_argument("glm_forecast: no submodel for source '" +
                                  s + "'");

  std::map<std::string, std::vector<double>> src_ext;
  for (const auto& s : needed) {
    src_ext[s] = universe.sources.at(s);
    src_ext[s].reserve(T + horizon);
  }
  std::vector<double> cases_ext = universe.cases;
  cases_ext.reserve(T + horizon);

  // Resolve the per-column source buffers and the per-source submodels
  // once; the weekly loop below runs draws * horizon times.
  std::vector<std::vector<double>*> col_src(cols.size(), nullptr);
  for (size_t k = 0; k < cols.size(); ++k)
    if (cols[k]->kind == ColumnKind::covariate)
      col_src[k] = &src_ext.at(cols[k]->source);
  std::vector<std::pair<std::vector<double>*, const Submodel*>> sims;
  for (const auto& s : needed)
    sims.emplace_back(&src_ext.at(s), &submodels.at(s));

  Rng rng(opts.seed);
  ForecastEnsemble ens;
  ens.forecast_week = j;
  ens.trajectories.resize(opts.draws, j + horizon);
  ens.weights =
      Eigen::VectorXd::Constant(opts.draws, 1.0 / static_cast<double>(opts.draws));
  long capped_trajectories = 0;

  for (long d = 0; d < opts.draws; ++d) {
    cases_ext.resize(T);
    for (auto& [v, sm] : sims) v->resize(T);

    for (int w = 0; w < j; ++w)
      ens.trajectories(d, w) = universe.cases[T - j + w];

    for (int h = 0; h < horizon; ++h) {
      const long t = T + h;
      for (auto& [v, sm] : sims)
        v->push_back(sm->predict_mean(v->back(), t) +
                     std::sqrt(sm->sigma2) * rng.normal());
      bool capped = false;
      double mu = 0.0;
      for (int attempt = 0; attempt < 2; ++attempt) {
        double eta = model.beta(0);
        for (size_t k = 0; k < cols.size(); ++k) {
          const auto v = eval_column(
              *cols[k], t, cases_ext,
              col_src[k] ? std::span<const double>(*col_src[k])
                         : std::span<const double>());
          if (!v)
            throw std::runtime_error("glm_forecast: term '" + cols[k]->name +
                                     "' undefined at week " +
                                     std::to_string(t + 1));
          eta += model.beta(k + 1) * *v;
        }
        mu = std::exp(std::min(eta, std::log(opts.mean_cap)));
        if (eta <= std::log(opts.mean_cap)) {
          capped = false;
          break;
        }
        capped = true;
        if (attempt == 0) {
          // Overflowing linked mean: redraw this week's covariates once.
          for (auto& [v, sm] : sims)
            v->back() = sm->predict_mean((*v)[v->size() - 2], t) +
                        std::sqrt(sm->sigma2) * rng.normal();
        }
      }
      capped_trajectories += capped;
      const double draw =
          static_cast<double>(rng.neg_binomial(mu, model.dispersion));
      cases_ext.push_back(draw);
      ens.trajectories(d, j + h) = draw;
    }
  }
  if (capped_trajectories > 0)
    std::cerr << "glm_forecast: linked mean capped at " << opts.mean_cap
              << " in " << capped_trajectories << " trajectory-weeks\n";
  return ens;
}

}  // namespace incast
