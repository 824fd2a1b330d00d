#include "incast/mle.hpp"

#include <cmath>
#include <deque>
#include <future>
#include <limits>
#include <stdexcept>
#include <thread>

#include "incast/features.hpp"

namespace incast {

namespace {

int label_of_strict(double x4) {
  for (int label : {-1, 0, 1})
    if (std::abs(x4 - label) < 1e-9) return label;
  throw std::invalid_argument("training severity entry is not a label");
}

// Shared factorization products for one (theta, eta) evaluation.
struct Factored {
  Eigen::MatrixXd C;     // correlation only
  CholFactor chol;       // of C + Lambda (+ jitter)
  Eigen::VectorXd alpha; // K^-1 y
  double quad;           // y' K^-1 y
  double log_det;
};

Factored factorize(const Lengthscales& theta, const NuggetVector& eta,
                   const GpData& data, const JitterPolicy& policy = {}) {
  Factored f;
  Eigen::MatrixXd S = data.sqdist[0] / theta(0);
  for (int k = 1; k < 4; ++k) S.noalias() += data.sqdist[k] / theta(k);
  f.C = (-S.array()).exp();
  Eigen::MatrixXd K = f.C;
  for (int r = 0; r < 3; ++r) {
    const double e = eta.for_label(r - 1);
    for (int i : data.regime_rows[r]) K(i, i) += e;
  }
  f.chol = chol_psd(K, policy);
  f.alpha = f.chol.lower.triangularView<Eigen::Lower>().solve(data.y);
  f.quad = f.alpha.squaredNorm();  // y' K^-1 y via the half-solve
  f.chol.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(
      f.alpha);
  f.log_det = f.chol.log_det();
  return f;
}

double concentrated_constant(long n) {
  const double nn = static_cast<double>(n);
  return -0.5 * nn * (std::log(2.0 * M_PI) + 1.0 - std::log(nn));
}

}  // namespace

GpData GpData::build(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                     const InputScaling& scaling) {
  if (X_raw.rows() != y.size() || X_raw.cols() != 4)
    throw std::invalid_argument("GpData: want n x 4 design aligned with y");
  if (scaling.divisor(kColSeverity) != 1.0)
    throw std::invalid_argument(
        "GpData: the severity column must stay unscaled (labels select the "
        "nugget)");
  GpData d;
  d.X = scaling.apply(X_raw);
  d.y = y;
  const long n = y.size();
  for (int k = 0; k < 4; ++k) {
    const auto col = d.X.col(k);
    d.sqdist[k] = (col * Eigen::RowVectorXd::Ones(n) -
                   Eigen::VectorXd::Ones(n) * col.transpose())
                      .array()
                      .square();
  }
  // Partition by label using the raw column; labels are scale-invariant
  // only when the severity divisor is 1, so classify before scaling.
  for (long i = 0; i < n; ++i)
    d.regime_rows[label_of_strict(X_raw(i, kColSeverity)) + 1].push_back(
        static_cast<int>(i));
  return d;
}

double log_likelihood(const Lengthscales& theta, double tau2,
                      const NuggetVector& eta, const GpData& data) {
  const Factored f = factorize(theta, eta, data);
  const double n = static_cast<double>(data.n());
  return -0.5 * n * std::log(2.0 * M_PI) - 0.5 * n * std::log(tau2) -
         0.5 * f.log_det - f.quad / (2.0 * tau2);
}

double tau2_hat(const Lengthscales& theta, const NuggetVector& eta,
                const GpData& data, bool* degenerate) {
  const Factored f = factorize(theta, eta, data);
  const double t2 = f.quad / static_cast<double>(data.n());
  if (degenerate) *degenerate = t2 == 0.0;
  return t2;
}

double concentrated_loglik(const Lengthscales& theta, const NuggetVector& eta,
                           const GpData& data) {
  const Factored f = factorize(theta, eta, data);
  const double n = static_cast<double>(data.n());
  return concentrated_constant(data.n()) - 0.5 * n * std::log(f.quad) -
         0.5 * f.log_det;
}

MleEval concentrated_with_gradient(const Lengthscales& theta,
                                   const NuggetVector& eta,
                                   const GpData& data) {
  const long n = data.n();
  const Factored f = factorize(theta, eta, data);

  MleEval out;
  out.value = concentrated_constant(n) -
              0.5 * static_cast<double>(n) * std::log(f.quad) - 0.5 * f.log_det;

  // K^-1 from the cached factor.
  Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
  f.chol.lower.triangularView<Eigen::Lower>().solveInPlace(Kinv);
  f.chol.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);

  // d/d p = sum_ij G_ij (dK/dp)_ij with G = (n/2q) aa' - K^-1/2; the
  // nugget selectors reduce this to diagonal subset sums.
  const double w = 0.5 * static_cast<double>(n) / f.quad;
  Eigen::MatrixXd G = w * (f.alpha * f.alpha.transpose()) - 0.5 * Kinv;
  const Eigen::MatrixXd H = G.cwiseProduct(f.C);
  for (int k = 0; k < 4; ++k)
    out.grad(k) = H.cwiseProduct(data.sqdist[k]).sum() / (theta(k) * theta(k));
  for (int r = 0; r < 3; ++r) {
    double acc = 0.0;
    for (int i : data.regime_rows[r]) acc += G(i, i);
    out.grad(4 + r) = acc;  // exactly 0 for an empty regime
  }
  return out;
}

Eigen::Matrix<double, 7, 1> gradient(const Lengthscales& theta,
                                     const NuggetVector& eta,
                                     const GpData& data) {
  return concentrated_with_gradient(theta, eta, data).grad;
}

namespace {

struct EvalFG {
  double f = 0.0;
  Eigen::VectorXd g;
};

struct SearchOutcome {
  Eigen::VectorXd x;
  double f = 0.0;
  int iters = 0;
  double pg_norm = 0.0;
  bool converged = false;
  std::vector<double> trace;  // objective after each accepted step
};

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& g,
                                   const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = g;
  for (long i = 0; i < x.size(); ++i) {
    if ((x(i) <= lo(i) + 1e-12 && g(i) > 0.0) ||
        (x(i) >= hi(i) - 1e-12 && g(i) < 0.0))
      pg(i) = 0.0;
  }
  return pg;
}

// Box-constrained L-BFGS (minimization): quasi-Newton steps projected onto
// the box with Armijo backtracking, steepest-descent fallback when the
// projected step fails to make progress.
template <typename F>
SearchOutcome lbfgs_box(F&& eval, Eigen::VectorXd x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi, int max_iters, double tol_g,
                        double tol_f) {
  constexpr size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  auto clamp = [&](const Eigen::VectorXd& v) {
    return v.cwiseMax(lo).cwiseMin(hi).eval();
  };
  x = clamp(x);
  EvalFG cur = eval(x);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> hist;

  SearchOutcome res;
  res.trace.push_back(cur.f);
  res.pg_norm = projected_gradient(x, cur.g, lo, hi)
                    .lpNorm<Eigen::Infinity>();
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    if (res.pg_norm < tol_g) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = cur.g;
    std::vector<double> a(hist.size());
    for (long i = static_cast<long>(hist.size()) - 1; i >= 0; --i) {
      const auto& [s, yv] = hist[i];
      const double rho = 1.0 / yv.dot(s);
      a[i] = rho * s.dot(q);
      q -= a[i] * yv;
    }
    if (!hist.empty()) {
      const auto& [s, yv] = hist.back();
      q *= s.dot(yv) / yv.dot(yv);
    }
    for (size_t i = 0; i < hist.size(); ++i) {
      const auto& [s, yv] = hist[i];
      const double rho = 1.0 / yv.dot(s);
      q += (a[i] - rho * yv.dot(q)) * s;
    }

    bool accepted = false;
    Eigen::VectorXd xn;
    EvalFG next;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const Eigen::VectorXd dir =
          attempt == 0 ? Eigen::VectorXd(-q)
                       : Eigen::VectorXd(-projected_gradient(x, cur.g, lo, hi));
      double t = 1.0;
      for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
        xn = clamp(x + t * dir);
        const Eigen::VectorXd step = xn - x;
        if (step.lpNorm<Eigen::Infinity>() < 1e-16) break;
        const double gd = cur.g.dot(step);
        if (gd >= 0.0) continue;  // projection bent the step uphill
        try {
          next = eval(xn);
        } catch (const std::runtime_error&) {
          continue;  // not factorizable there, shorten the step
        }
        if (next.f <= cur.f + kArmijo * gd) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) break;  // no progress in any direction

    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd yv = next.g - cur.g;
    if (s.dot(yv) > 1e-10 * s.norm() * yv.norm()) {
      hist.emplace_back(s, yv);
      if (hist.size() > kMemory) hist.pop_front();
    }
    const double drop = cur.f - next.f;
    x = xn;
    cur = next;
    res.trace.push_back(cur.f);
    res.pg_norm =
        projected_gradient(x, cur.g, lo, hi).lpNorm<Eigen::Infinity>();
    if (drop < tol_f * (1.0 + std::abs(cur.f))) {
      ++iter;
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.f = cur.f;
  res.iters = iter;
  return res;
}

}  // namespace

MleResult fit(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
              const MleConfig& config) {
  const GpData data = GpData::build(X_raw, y, config.scaling);
  const long n = data.n();
  if (n < 8) throw std::invalid_argument("fit: need at least 8 rows");
  if (y.norm() == 0.0)
    throw std::invalid_argument("fit: all-zero response is degenerate");

  std::vector<int> present;  // regime slots 0..2 with training rows
  for (int r = 0; r < 3; ++r)
    if (!data.regime_rows[r].empty()) present.push_back(r);
  if (present.empty()) throw std::invalid_argument("fit: no labeled rows");
  const int dim = 4 + static_cast<int>(present.size());

  // Spec'd defaults: theta_k = half squared input range, eta = 0.1 var(y).
  Lengthscales theta0;
  if (config.init_theta) {
    theta0 = *config.init_theta;
  } else {
    for (int k = 0; k < 4; ++k) {
      const double range =
          data.X.col(k).maxCoeff() - data.X.col(k).minCoeff();
      theta0(k) = 0.5 * range * range;
    }
  }
  const double var_y =
      (y.array() - y.mean()).square().sum() / std::max<long>(n - 1, 1);
  NuggetVector eta0;
  if (config.init_eta) {
    eta0 = *config.init_eta;
  } else {
    eta0.eta_minus = eta0.eta_zero = eta0.eta_plus = 0.1 * var_y;
  }

  const auto [th_lo, th_hi] = config.theta_bounds;
  const auto [et_lo, et_hi] = config.eta_bounds;
  Eigen::VectorXd lo(dim), hi(dim), base(dim);
  for (int k = 0; k < 4; ++k) {
    lo(k) = std::log(th_lo);
    hi(k) = std::log(th_hi);
    base(k) = std::log(std::clamp(theta0(k), th_lo, th_hi));
  }
  for (size_t s = 0; s < present.size(); ++s) {
    lo(4 + s) = std::log(et_lo);
    hi(4 + s) = std::log(et_hi);
    base(4 + s) =
        std::log(std::clamp(eta0.for_label(present[s] - 1), et_lo, et_hi));
  }

  auto unpack = [&](const Eigen::VectorXd& z, Lengthscales& th,
                    NuggetVector& et) {
    for (int k = 0; k < 4; ++k) th(k) = std::exp(z(k));
    et = eta0;
    for (size_t s = 0; s < present.size(); ++s)
      et.for_label(present[s] - 1) = std::exp(z(4 + s));
  };
  auto objective = [&](const Eigen::VectorXd& z) -> EvalFG {
    Lengthscales th;
    NuggetVector et;
    unpack(z, th, et);
    const MleEval e = concentrated_with_gradient(th, et, data);
    EvalFG out;
    out.f = -e.value;
    out.g.resize(dim);
    for (int k = 0; k < 4; ++k) out.g(k) = -e.grad(k) * th(k);
    for (size_t s = 0; s < present.size(); ++s)
      out.g(4 + s) = -e.grad(4 + present[s]) * et.for_label(present[s] - 1);
    return out;
  };

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(base);
  for (int s = 1; s < config.multistarts; ++s) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(s)));
    Eigen::VectorXd z = base;
    for (int i = 0; i < dim; ++i)
      z(i) += std::log(0.1 + 9.9 * rng.uniform());  // factor U[1/10, 10]
    starts.push_back(z.cwiseMax(lo).cwiseMin(hi));
  }

  auto run_start = [&](const Eigen::VectorXd& z0) -> SearchOutcome {
    try {
      return lbfgs_box(objective, z0, lo, hi, config.max_iters,
                       config.tol_grad, config.tol_obj);
    } catch (const std::runtime_error&) {
      SearchOutcome failed;  // start point itself not factorizable
      failed.x = z0;
      failed.f = std::numeric_limits<double>::infinity();
      return failed;
    }
  };

  std::vector<SearchOutcome> outcomes(starts.size());
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers =
      config.threads > 0 ? static_cast<unsigned>(config.threads) : hw;
  if (workers <= 1 || starts.size() <= 1) {
    for (size_t s = 0; s < starts.size(); ++s) outcomes[s] = run_start(starts[s]);
  } else {
    std::vector<std::future<SearchOutcome>> futs;
    futs.reserve(starts.size());
    for (const auto& z0 : starts)
      futs.push_back(
          std::async(std::launch::async, [&run_start, z0] { return run_start(z0); }));
    for (size_t s = 0; s < starts.size(); ++s) outcomes[s] = futs[s].get();
  }

  size_t best = 0;
  for (size_t s = 1; s < outcomes.size(); ++s)
    if (outcomes[s].f < outcomes[best].f) best = s;
  const SearchOutcome& win = outcomes[best];
  if (!std::isfinite(win.f))
    throw std::runtime_error("fit: no start point was factorizable");

  Lengthscales theta;
  NuggetVector eta;
  unpack(win.x, theta, eta);
  // Unidentifiable (absent) regimes take the geometric mean of the rest.
  if (present.size() < 3) {
    double log_sum = 0.0;
    for (int r : present) log_sum += std::log(eta.for_label(r - 1));
    const double pin = std::exp(log_sum / static_cast<double>(present.size()));
    for (int r = 0; r < 3; ++r)
      if (data.regime_rows[r].empty()) eta.for_label(r - 1) = pin;
  }

  MleResult result;
  result.loglik = -win.f;
  result.converged = win.converged;
  result.iterations = win.iters;
  result.grad_norm = win.pg_norm;
  result.objective_trace.reserve(win.trace.size());
  for (double f : win.trace) result.objective_trace.push_back(-f);
  const double tau2 = tau2_hat(theta, eta, data);
  result.model = make_model(theta, tau2, eta, config.scaling, X_raw, y,
                            config.jitter);
  return result;
}

}  // namespace incast
