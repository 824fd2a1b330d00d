#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "incast/gp.hpp"

namespace incast {

/// Likelihood workspace: scaled design, response, cached per-column squared
/// distances, and the row partition by severity label.
struct GpData {
  Eigen::MatrixXd X;  // scaled
  Eigen::VectorXd y;
  std::array<Eigen::MatrixXd, 4> sqdist;     // (x_ik - x_jk)^2 per column
  std::array<std::vector<int>, 3> regime_rows;  // rows with label -1, 0, +1

  static GpData build(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                      const InputScaling& scaling);
  long n() const { return y.size(); }
};

/// Full log likelihood of the zero-mean GP with covariance
/// tau2 * (C_n + Lambda_n), constant -(n/2) log(2 pi).
double log_likelihood(const Lengthscales& theta, double tau2,
                      const NuggetVector& eta, const GpData& data);

/// Closed-form scale MLE y' K^-1 y / n. An all-zero response yields 0 and
/// is reported degenerate through `degenerate` when provided.
double tau2_hat(const Lengthscales& theta, const NuggetVector& eta,
                const GpData& data, bool* degenerate = nullptr);

/// Likelihood with the scale concentrated out.
double concentrated_loglik(const Lengthscales& theta, const NuggetVector& eta,
                           const GpData& data);

/// Analytic gradient of the concentrated log likelihood:
/// (d/d theta_1..4, d/d eta_-1, d/d eta_0, d/d eta_+1). The component for
/// a regime with no training rows is identically zero.
Eigen::Matrix<double, 7, 1> gradient(const Lengthscales& theta,
                                     const NuggetVector& eta,
                                     const GpData& data);

/// Value and gradient sharing one factorization (optimizer hot path).
struct MleEval {
  double value;
  Eigen::Matrix<double, 7, 1> grad;
};
MleEval concentrated_with_gradient(const Lengthscales& theta,
                                   const NuggetVector& eta,
                                   const GpData& data);

struct MleConfig {
  InputScaling scaling;
  std::pair<double, double> theta_bounds{1e-2, 1e4};  // on scaled inputs
  std::pair<double, double> eta_bounds{1e-6, 1e2};
  std::optional<Lengthscales> init_theta;  // default 0.5 * range_k^2
  std::optional<NuggetVector> init_eta;    // default 0.1 * var(y)
  int multistarts = 5;
  double tol_grad = 1e-6;  // infinity norm of the projected gradient
  double tol_obj = 1e-9;   // relative objective change
  int max_iters = 200;
  std::uint64_t seed = 1452;  // multistart jitter stream
  int threads = 0;            // 0 = hardware concurrency
  JitterPolicy jitter;
};

struct MleResult {
  HetGPModel model;
  double loglik = 0.0;  // concentrated, at the optimum
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::vector<double> objective_trace;  // winning start, accepted steps
};

/**
 * Bound-constrained maximization of the concentrated log likelihood over
 * (theta, eta) on the log scale, best of `multistarts` starts, with the
 * scale set by its closed form at the optimum. A regime absent from the
 * training data is unidentifiable (zero gradient) and is pinned to the
 * geometric mean of the fitted nuggets. Deterministic given the config.
 */
MleResult fit(const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
              const MleConfig& config = {});

}  // namespace incast
