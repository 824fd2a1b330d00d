#include "incast/gp.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "incast/features.hpp"

namespace incast {

double NuggetVector::for_label(int label) const {
  switch (label) {
    case -1: return eta_minus;
    case 0: return eta_zero;
    case 1: return eta_plus;
  }
  throw std::invalid_argument("severity label must be -1, 0 or +1");
}

double& NuggetVector::for_label(int label) {
  switch (label) {
    case -1: return eta_minus;
    case 0: return eta_zero;
    case 1: return eta_plus;
  }
  throw std::invalid_argument("severity label must be -1, 0 or +1");
}

Eigen::MatrixXd InputScaling::apply(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out = X;
  for (int k = 0; k < 4; ++k) out.col(k) /= divisor(k);
  return out;
}

double CholFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

CholFactor chol_psd(const Eigen::MatrixXd& K, const JitterPolicy& policy) {
  for (double jitter = policy.floor; jitter <= policy.max * (1.0 + 1e-12);
       jitter *= 10.0) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success)
      return {Eigen::MatrixXd(llt.matrixL()), jitter};
  }
  std::ostringstream msg;
  msg << "covariance not PSD at max jitter " << policy.max
      << " (n=" << K.rows() << ", diag range [" << K.diagonal().minCoeff()
      << ", " << K.diagonal().maxCoeff() << "])";
  throw std::runtime_error(msg.str());
}

double kernel(const Eigen::RowVector4d& a, const Eigen::RowVector4d& b,
              const Lengthscales& theta) {
  double s = 0.0;
  for (int k = 0; k < 4; ++k) {
    const double d = a(k) - b(k);
    s += d * d / theta(k);
  }
  return std::exp(-s);
}

Eigen::MatrixXd cross_correlation(const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B,
                                  const Lengthscales& theta) {
  // Weighted squared distances via the expansion |a-b|^2 = a^2 + b^2 - 2ab
  // per column, accumulated with 1/theta_k weights.
  const long na = A.rows(), nb = B.rows();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(na, nb);
  for (int k = 0; k < 4; ++k) {
    const double w = 1.0 / theta(k);
    const auto a = A.col(k);
    const auto b = B.col(k);
    S.noalias() += w * (a.array().square().matrix() *
                            Eigen::RowVectorXd::Ones(nb) +
                        Eigen::VectorXd::Ones(na) *
                            b.array().square().matrix().transpose() -
                        2.0 * a * b.transpose());
  }
  return (-S.array()).exp();
}

namespace {

int label_of(double x4) {
  for (int label : {-1, 0, 1})
    if (std::abs(x4 - label) < 1e-9) return label;
  throw std::invalid_argument(
      "training severity entry " + std::to_string(x4) +
      " is not a {-1,0,+1} label; latent values belong in prediction rows");
}

}  // namespace

Eigen::MatrixXd build_covariance(const Eigen::MatrixXd& X,
                                 const Lengthscales& theta,
                                 const NuggetVector& eta) {
  Eigen::MatrixXd K = cross_correlation(X, X, theta);
  for (long i = 0; i < X.rows(); ++i)
    K(i, i) += eta.for_label(label_of(X(i, kColSeverity)));
  return K;
}

HetGPModel make_model(const Lengthscales& theta, double tau2,
                      const NuggetVector& eta, const InputScaling& scaling,
                      const Eigen::MatrixXd& X_raw, const Eigen::VectorXd& y,
                      const JitterPolicy& policy) {
  if (X_raw.rows() != y.size())
    throw std::invalid_argument("make_model: X/y size mismatch");
  if (scaling.divisor(kColSeverity) != 1.0)
    throw std::invalid_argument(
        "make_model: the severity column must stay unscaled (labels select "
        "the nugget)");
  HetGPModel m;
  m.theta = theta;
  m.tau2 = tau2;
  m.eta = eta;
  m.scaling = scaling;
  m.train_X = scaling.apply(X_raw);
  m.train_y = y;
  m.chol = chol_psd(build_covariance(m.train_X, theta, eta), policy);
  m.alpha = m.chol.lower.triangularView<Eigen::Lower>().solve(y);
  m.chol.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(
      m.alpha);
  return m;
}

HetGPModel augment_model(const HetGPModel& model, const Eigen::MatrixXd& X_raw,
                         const Eigen::VectorXd& y, int regime_label,
                         const JitterPolicy& policy) {
  const long n = model.n(), j = y.size();
  Eigen::MatrixXd X(n + j, 4);
  X.topRows(n) = model.train_X;
  X.bottomRows(j) = model.scaling.apply(X_raw);
  X.col(kColSeverity).tail(j).setConstant(static_cast<double>(regime_label));
  Eigen::VectorXd yy(n + j);
  yy << model.train_y, y;

  HetGPModel out;
  out.theta = model.theta;
  out.tau2 = model.tau2;
  out.eta = model.eta;
  out.scaling = model.scaling;
  out.train_X = std::move(X);
  out.train_y = std::move(yy);
  out.chol = chol_psd(build_covariance(out.train_X, out.theta, out.eta),
                      policy);
  out.alpha = out.chol.lower.triangularView<Eigen::Lower>().solve(out.train_y);
  out.chol.lower.triangularView<Eigen::Lower>().transpose().solveInPlace(
      out.alpha);
  return out;
}

PredictiveMVN predict(const HetGPModel& model, const Eigen::MatrixXd& Xnew_raw,
                      int regime_label, bool include_noise) {
  const Eigen::MatrixXd Xs = model.scaling.apply(Xnew_raw);
  const Eigen::MatrixXd Kx =
      cross_correlation(model.train_X, Xs, model.theta);  // n x n'

  PredictiveMVN p;
  p.mean = Kx.transpose() * model.alpha;

  Eigen::MatrixXd V = Kx;
  model.chol.lower.triangularView<Eigen::Lower>().solveInPlace(V);
  Eigen::MatrixXd cov = cross_correlation(Xs, Xs, model.theta);
  cov.noalias() -= V.transpose() * V;
  if (include_noise)
    cov.diagonal().array() += model.eta.for_label(regime_label);
  cov *= model.tau2;
  cov = 0.5 * (cov + cov.transpose()).eval();

  const double scale =
      model.tau2 * (1.0 + model.eta.for_label(regime_label));
  const double tol = 1e-8 * std::max(scale, 1.0);
  for (long i = 0; i < cov.rows(); ++i) {
    if (cov(i, i) < -tol) {
      std::ostringstream msg;
      msg << "predictive covariance lost PSD: diag " << cov(i, i) << " at row "
          << i << " (train n=" << model.n()
          << ", jitter=" << model.chol.jitter << ")";
      throw std::runtime_error(msg.str());
    }
    if (cov(i, i) < 0.0) cov(i, i) = 0.0;
  }
  p.cov = std::move(cov);
  return p;
}

double pll(const HetGPModel& model, const Eigen::MatrixXd& Xnew_raw,
           const Eigen::VectorXd& ynew, int regime_label) {
  if (Xnew_raw.rows() != ynew.size() || ynew.size() < 1)
    throw std::invalid_argument("pll: need >= 1 aligned observation");
  const PredictiveMVN p = predict(model, Xnew_raw, regime_label, true);
  CholFactor f;
  try {
    f = chol_psd(p.cov);
  } catch (const std::runtime_error& e) {
    std::cerr << "pll: singular predictive covariance (" << e.what() << ")\n";
    return -std::numeric_limits<double>::infinity();
  }
  Eigen::VectorXd r = ynew - p.mean;
  f.lower.triangularView<Eigen::Lower>().solveInPlace(r);
  const double n = static_cast<double>(ynew.size());
  return -0.5 * (n * std::log(2.0 * M_PI) + f.log_det() + r.squaredNorm());
}

Eigen::MatrixXd sample_joint(const PredictiveMVN& p, long m,
                             std::uint64_t seed) {
  const long d = p.mean.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.cov);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("sample_joint: eigendecomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd root =
      es.eigenvectors() * lambda.cwiseSqrt().asDiagonal();

  Rng rng(seed);
  Eigen::MatrixXd Z(m, d);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < d; ++j) Z(i, j) = rng.normal();
  Eigen::MatrixXd draws = Z * root.transpose();
  draws.rowwise() += p.mean.transpose();
  return draws;
}

void save_model(const HetGPModel& model, const std::string& training_data_ref,
                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  out << "format = incast-gp-model\n";
  out << "version = 1\n";
  out << "theta = " << model.theta(0) << ' ' << model.theta(1) << ' '
      << model.theta(2) << ' ' << model.theta(3) << '\n';
  out << "tau2 = " << model.tau2 << '\n';
  out << "eta = " << model.eta.eta_minus << ' ' << model.eta.eta_zero << ' '
      << model.eta.eta_plus << '\n';
  out << "scale = " << model.scaling.divisor(0) << ' '
      << model.scaling.divisor(1) << ' ' << model.scaling.divisor(2) << ' '
      << model.scaling.divisor(3) << '\n';
  out << "n_train = " << model.n() << '\n';
  out << "training_data = " << training_data_ref << '\n';
}

ModelHeader load_model_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  ModelHeader h;
  bool format_seen = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    std::istringstream val(line.substr(eq + 1));
    if (key == "format") {
      std::string fmt;
      val >> fmt;
      if (fmt != "incast-gp-model")
        throw std::runtime_error(path + ": not a model file");
      format_seen = true;
    } else if (key == "version") {
      val >> h.version;
      if (h.version != 1)
        throw std::runtime_error(path + ": unsupported model version");
    } else if (key == "theta") {
      val >> h.theta(0) >> h.theta(1) >> h.theta(2) >> h.theta(3);
    } else if (key == "tau2") {
      val >> h.tau2;
    } else if (key == "eta") {
      val >> h.eta.eta_minus >> h.eta.eta_zero >> h.eta.eta_plus;
    } else if (key == "scale") {
      val >> h.scaling.divisor(0) >> h.scaling.divisor(1) >>
          h.scaling.divisor(2) >> h.scaling.divisor(3);
    } else if (key == "n_train") {
      val >> h.n_train;
    } else if (key == "training_data") {
      std::string rest;
      std::getline(val, rest);
      const auto a = rest.find_first_not_of(' ');
      h.training_data = a == std::string::npos ? "" : rest.substr(a);
    }
  }
  if (!format_seen) throw std::runtime_error(path + ": not a model file");
  return h;
}

}  // namespace incast
