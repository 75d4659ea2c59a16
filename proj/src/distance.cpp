#include "statfuse/distance.hpp"

#include <cmath>

#include "statfuse/errors.hpp"

namespace statfuse {

Eigen::MatrixXd pooled_covariance(const SampleFrame& recipient, const SampleFrame& donor,
                                  const HarmonizedPair& pair) {
  const int p = recipient.p();
  if (donor.p() != p) throw ConfigError("pooled_covariance: x dimension mismatch");
  const Eigen::VectorXd mean = pair.x_hat_star / pair.n_hat_star;

  Eigen::MatrixXd centered1 = recipient.x.rowwise() - mean.transpose();
  Eigen::MatrixXd centered2 = donor.x.rowwise() - mean.transpose();
  Eigen::MatrixXd omega =
      pair.alpha * (centered1.transpose() * pair.w1.asDiagonal() * centered1) +
      (1.0 - pair.alpha) * (centered2.transpose() * pair.w2.asDiagonal() * centered2);
  omega /= pair.n_hat_star;
  // symmetrize against round-off
  return 0.5 * (omega + omega.transpose());
}

CostMatrix mahalanobis_matrix(const SampleFrame& recipient, const SampleFrame& donor,
                              const Eigen::MatrixXd& omega, CostForm form) {
  const int p = recipient.p();
  if (donor.p() != p) throw ConfigError("mahalanobis_matrix: x dimension mismatch");
  if (omega.rows() != p || omega.cols() != p) {
    throw ConfigError("mahalanobis_matrix: omega must be p x p");
  }

  // Ridge only when the form is (near-)singular: collinear or constant x
  // columns. A healthy covariance passes through untouched, which keeps the
  // metric exactly invariant under affine maps of x.
  Eigen::MatrixXd regularized = omega;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen(omega);
  const double lambda_max = eigen.eigenvalues().maxCoeff();
  if (eigen.eigenvalues().minCoeff() <= 1e-10 * std::max(lambda_max, 1e-300)) {
    const double trace = omega.trace();
    const double ridge = 1e-8 * (trace > 0.0 ? trace / p : 1.0);
    regularized += ridge * Eigen::MatrixXd::Identity(p, p);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() != Eigen::Success) {
    throw NumericError("mahalanobis_matrix: covariance not positive definite after ridge");
  }

  // d^2(k,l) = |L^{-1}(x_k - x_l)|^2, so whiten both samples once.
  Eigen::MatrixXd white1 = llt.matrixL().solve(recipient.x.transpose()).transpose();
  Eigen::MatrixXd white2 = llt.matrixL().solve(donor.x.transpose()).transpose();

  CostMatrix cost;
  cost.metric = Metric::kMahalanobis;
  cost.form = form;
  cost.omega = regularized;
  cost.values.resize(recipient.n(), donor.n());
  for (int k = 0; k < recipient.n(); ++k) {
    for (int l = 0; l < donor.n(); ++l) {
      const double d2 = (white1.row(k) - white2.row(l)).squaredNorm();
      cost.values(k, l) = form == CostForm::kDistance ? std::sqrt(d2) : d2;
    }
  }
  return cost;
}

CostMatrix cost_matrix(const SampleFrame& recipient, const SampleFrame& donor,
                       const HarmonizedPair& pair, Metric metric, CostForm form) {
  if (metric == Metric::kMahalanobis) {
    return mahalanobis_matrix(recipient, donor, pooled_covariance(recipient, donor, pair), form);
  }
  CostMatrix cost;
  cost.metric = Metric::kEuclidean;
  cost.form = form;
  cost.values.resize(recipient.n(), donor.n());
  for (int k = 0; k < recipient.n(); ++k) {
    for (int l = 0; l < donor.n(); ++l) {
      const double d2 = (recipient.x.row(k) - donor.x.row(l)).squaredNorm();
      cost.values(k, l) = form == CostForm::kDistance ? std::sqrt(d2) : d2;
    }
  }
  return cost;
}

}  // namespace statfuse
