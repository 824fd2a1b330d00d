#include "incast/targets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "incast/ingest.hpp"

namespace incast {

int Histogram::bucket_of(double v) const {
  if (v < 0.0)
    throw std::invalid_argument("bucket_of: negative target value");
  int idx = static_cast<int>(std::floor(v / width));
  if (max_buckets > 0) idx = std::min(idx, max_buckets - 1);
  return idx;
}

double Histogram::prob_of(double v) const {
  const int idx = bucket_of(v);
  if (idx >= static_cast<int>(prob.size())) return 0.0;
  return prob[idx];
}

ForecastEnsemble substitute_observed(const ForecastEnsemble& ens,
                                     std::span<const double> observed) {
  const long j = static_cast<long>(observed.size());
  if (j > ens.weeks())
    throw std::invalid_argument("substitute_observed: more observed weeks "
                                "than trajectory columns");
  ForecastEnsemble out = ens;
  for (long w = 0; w < j; ++w) out.trajectories.col(w).setConstant(observed[w]);
  return out;
}

TargetDistribution extract_targets(const ForecastEnsemble& ens,
                                   const BucketSpec& buckets) {
  const long m = ens.draws();
  if (m < 1) throw std::invalid_argument("extract_targets: empty ensemble");
  const long weeks = ens.weeks();

  TargetDistribution dist;
  dist.peak_week_prob = Eigen::VectorXd::Zero(kSeasonWeeks);
  dist.peak_incidence.width = buckets.peak_width;
  dist.peak_incidence.max_buckets = buckets.peak_max_buckets;
  dist.total_incidence.width = buckets.total_width;
  dist.total_incidence.max_buckets = buckets.total_max_buckets;
  dist.sample_peak_week.resize(m);
  dist.sample_peak_incidence.resize(m);
  dist.sample_total_incidence.resize(m);
  dist.sample_weights = ens.weights / ens.weights.sum();

  auto bump = [](std::vector<double>& prob, int idx, double w) {
    if (idx >= static_cast<int>(prob.size())) prob.resize(idx + 1, 0.0);
    prob[idx] += w;
  };

  for (long i = 0; i < m; ++i) {
    int peak_week = 0;  // earliest argmax
    double peak = -1.0;
    double total = 0.0;
    for (long w = 0; w < weeks; ++w) {
      const double v = std::max(0.0, ens.trajectories(i, w));
      total += v;
      if (v > peak) {
        peak = v;
        peak_week = static_cast<int>(w);
      }
    }
    const double wt = dist.sample_weights(i);
    dist.sample_peak_week(i) = peak_week + 1;
    dist.sample_peak_incidence(i) = peak;
    dist.sample_total_incidence(i) = total;
    dist.peak_week_prob(peak_week) += wt;
    bump(dist.peak_incidence.prob, dist.peak_incidence.bucket_of(peak), wt);
    bump(dist.total_incidence.prob, dist.total_incidence.bucket_of(total), wt);
  }

  // Mode under 0-1 loss for the week target, earliest week on ties.
  int mode = 0;
  for (int w = 1; w < kSeasonWeeks; ++w)
    if (dist.peak_week_prob(w) > dist.peak_week_prob(mode)) mode = w;
  dist.point_peak_week = mode + 1;
  dist.point_peak_incidence =
      weighted_quantile(dist.sample_peak_incidence, dist.sample_weights, 0.5);
  dist.point_total_incidence =
      weighted_quantile(dist.sample_total_incidence, dist.sample_weights, 0.5);
  return dist;
}

ForecastEnsemble mix_hybrid(const ForecastEnsemble& gp,
                            const ForecastEnsemble& glm, int history_years,
                            int forecast_index, int min_history_years,
                            int min_forecast_index) {
  if (gp.locale != glm.locale || gp.season_label != glm.season_label ||
      gp.forecast_week != glm.forecast_week || gp.weeks() != glm.weeks())
    throw std::invalid_argument("mix_hybrid: ensembles are not aligned");
  if (history_years < min_history_years || forecast_index < min_forecast_index)
    return gp;

  ForecastEnsemble out;
  out.locale = gp.locale;
  out.season_label = gp.season_label;
  out.forecast_week = gp.forecast_week;
  out.trajectories.resize(gp.draws() + glm.draws(), gp.weeks());
  out.trajectories.topRows(gp.draws()) = gp.trajectories;
  out.trajectories.bottomRows(glm.draws()) = glm.trajectories;
  out.weights.resize(gp.draws() + glm.draws());
  out.weights.head(gp.draws()) = 0.5 * gp.weights / gp.weights.sum();
  out.weights.tail(glm.draws()) = 0.5 * glm.weights / glm.weights.sum();
  return out;
}

double weighted_quantile(const Eigen::VectorXd& values,
                         const Eigen::VectorXd& weights, double q) {
  const long m = values.size();
  std::vector<long> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](long a, long b) { return values(a) < values(b); });
  const double total = weights.sum();
  double acc = 0.0;
  for (long i : order) {
    acc += weights(i);
    if (acc >= q * total - 1e-15) return values(i);
  }
  return values(order.back());
}

TargetIntervals interval(const TargetDistribution& dist, double level) {
  if (level <= 0.0 || level >= 1.0)
    throw std::invalid_argument("interval: level must be inside (0, 1)");
  const double a = 0.5 * (1.0 - level);
  auto central = [&](const Eigen::VectorXd& v) {
    return Interval{weighted_quantile(v, dist.sample_weights, a),
                    weighted_quantile(v, dist.sample_weights, 1.0 - a)};
  };
  return {central(dist.sample_peak_week),
          central(dist.sample_peak_incidence),
          central(dist.sample_total_incidence)};
}

nlohmann::ordered_json target_distribution_json(
    const TargetDistribution& dist, const ForecastEnsemble& ens,
    const std::string& method, const std::string& provenance,
    double interval_level) {
  using json = nlohmann::ordered_json;
  const TargetIntervals iv = interval(dist, interval_level);

  auto hist_json = [](const Histogram& h) {
    json buckets = json::array();
    for (size_t i = 0; i < h.prob.size(); ++i)
      buckets.push_back({i * h.width, h.prob[i]});
    return buckets;
  };
  json week_buckets = json::array();
  for (int w = 0; w < kSeasonWeeks; ++w)
    week_buckets.push_back({w + 1, dist.peak_week_prob(w)});

  json doc;
  doc["locale"] = ens.locale;
  doc["season"] = ens.season_label;
  doc["forecast_week"] = ens.forecast_week;
  doc["method"] = method;
  doc["provenance"] = provenance;
  doc["draws"] = ens.draws();
  doc["interval_level"] = interval_level;
  doc["peak_week"] = {{"buckets", week_buckets},
                      {"point", dist.point_peak_week},
                      {"interval", {iv.peak_week.lo, iv.peak_week.hi}}};
  doc["peak_incidence"] = {
      {"bucket_width", dist.peak_incidence.width},
      {"buckets", hist_json(dist.peak_incidence)},
      {"point", dist.point_peak_incidence},
      {"interval", {iv.peak_incidence.lo, iv.peak_incidence.hi}}};
  doc["total_incidence"] = {
      {"bucket_width", dist.total_incidence.width},
      {"buckets", hist_json(dist.total_incidence)},
      {"point", dist.point_total_incidence},
      {"interval", {iv.total_incidence.lo, iv.total_incidence.hi}}};
  return doc;
}

}  // namespace incast
