#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "incast/rng.hpp"

namespace incast {

/// Anisotropic lengthscales of the separable Gaussian kernel, one per
/// design column.
using Lengthscales = Eigen::Array4d;

/// Per-regime noise variances keyed by the severity label.
struct NuggetVector {
  double eta_minus = 0.1;
  double eta_zero = 0.1;
  double eta_plus = 0.1;

  double for_label(int label) const;
  double& for_label(int label);
};

/// Fixed per-column divisors applied before kernel evaluation. The week
/// column maps to (0, 1]; the remaining columns are already on comparable
/// scales. Stored with the model so prediction uses the identical map.
struct InputScaling {
  Eigen::Array4d divisor{52.0, 1.0, 1.0, 1.0};

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

/// Diagonal floor added before factorization, escalating tenfold on
/// failure. Repeated deterministic inputs (identical week/sine columns
/// across seasons) make the correlation matrix rank-deficient without it.
struct JitterPolicy {
  double floor = 1e-8;
  double max = 1e-4;
};

struct CholFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  double log_det() const;
};

/// Cholesky of a symmetric PSD matrix under the jitter policy; throws
/// std::runtime_error with diagnostics if even the maximum jitter fails.
CholFactor chol_psd(const Eigen::MatrixXd& K, const JitterPolicy& policy = {});

/// Separable Gaussian correlation of two (already scaled) design rows.
double kernel(const Eigen::RowVector4d& a, const Eigen::RowVector4d& b,
              const Lengthscales& theta);

/// Cross-correlation matrix C(A, B) of scaled design matrices.
Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B,
                                  const Lengthscales& theta);

/// C_n + Lambda_n: correlation of training rows plus the regime-keyed
/// diagonal. Training severity entries must be exact {-1, 0, +1} labels;
/// continuous latent values belong only in prediction rows.
Eigen::MatrixXd build_covariance(const Eigen::MatrixXd& X,
                                 const Lengthscales& theta,
                                 const NuggetVector& eta);

/**
 * Fitted heteroskedastic GP: hyperparameters plus the cached factorization
 * of C_n + Lambda_n over the (scaled) training design. Immutable after
 * construction; predict/pll/sample are read-only.
 */
struct HetGPModel {
  Lengthscales theta;
  double tau2 = 1.0;
  NuggetVector eta;
  InputScaling scaling;
  Eigen::MatrixXd train_X;  // scaled
  Eigen::VectorXd train_y;
  CholFactor chol;          // of C_n + Lambda_n (+ jitter)
  Eigen::VectorXd alpha;    // (C_n + Lambda_n)^-1 y

  long n() const { return train_y.size(); }
};

/// Builds a model from raw (unscaled) training data, factorizing once.
HetGPModel make_model(const Lengthscales& theta, double tau2,
                      const NuggetVector& eta, const InputScaling& scaling,
                      const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                      const JitterPolicy& policy = {});

/// Same hyperparameters conditioned on extra observations whose severity
/// column is forced to `regime_label` (so the nugget lookup stays valid).
HetGPModel augment_model(const HetGPModel& model, const Eigen::MatrixXd& X_raw,
                         const Eigen::VectorXd& y, int regime_label,
                         const JitterPolicy& policy = {});

struct PredictiveMVN {
  Eigen::VectorXd mean;  // transformed scale
  Eigen::MatrixXd cov;   // includes the regime noise diagonal when requested
};

/**
 * Exact MVN conditioning at raw (unscaled) prediction rows. The noise
 * diagonal added to the predictive covariance uses the regime's nugget;
 * with include_noise = false the latent-mean covariance is returned
 * instead. Cross-covariances never carry nugget.
 */
PredictiveMVN predict(const HetGPModel& model, const Eigen::MatrixXd& Xnew_raw,
                      int regime_label, bool include_noise = true);

/// Log predictive density of observed values at the given rows; returns
/// -infinity (with a stderr note) if the predictive covariance cannot be
/// factorized even with maximal jitter.
double pll(const HetGPModel& model, const Eigen::MatrixXd& Xnew_raw,
           const Eigen::VectorXd& ynew, int regime_label);

/// m joint draws (rows) from the predictive; eigendecomposition-based so
/// exactly singular covariances (including the zero matrix) sample their
/// mean. Deterministic for a fixed seed.
Eigen::MatrixXd sample_joint(const PredictiveMVN& p, long m,
                             std::uint64_t seed);

/// Hyperparameter header of a serialized model (key=value flat file).
struct ModelHeader {
  int version = 1;
  Lengthscales theta;
  double tau2 = 1.0;
  NuggetVector eta;
  InputScaling scaling;
  std::string training_data;  // reference, not a copy
  long n_train = 0;
};

void save_model(const HetGPModel& model, const std::string& training_data_ref,
                const std::string& path);
ModelHeader load_model_header(const std::string& path);

}  // namespace incast
