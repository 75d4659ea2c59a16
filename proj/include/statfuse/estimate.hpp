#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "statfuse/balance.hpp"
#include "statfuse/frame.hpp"
#include "statfuse/harmonize.hpp"
#include "statfuse/transport.hpp"

namespace statfuse {

enum class Representation { kPairwise, kPredictedS1, kImputedS1, kPredictedS2, kImputedS2 };

std::string representation_name(Representation rep);

struct Prediction {
  Eigen::MatrixXd x_hat;     // matched-side x averaged with the plan shares
  Eigen::MatrixXd vars_hat;  // z-hat for s1 direction, y-hat for s2
};

/// Weighted-average predictions across the plan support: for s1, unit k gets
/// sum_l (W_kl / w1_k) (x_l, z_l); s2 is symmetric with W_kl / w2_l.
Prediction predict(const TransportPlan& plan, const HarmonizedPair& pair,
                   const SampleFrame& recipient, const SampleFrame& donor,
                   ImputeDirection direction);

/// One analysis-ready file. Every representation carries the same five
/// blocks so the estimators below are representation-agnostic: observed x,
/// the matched-side x, a y block, a z block, and a weight per row.
struct FusedFile {
  Representation representation = Representation::kPairwise;
  std::vector<std::string> ids;        // row unit ids
  std::vector<std::string> match_ids;  // matched unit per row (pairwise, imputed)
  Eigen::MatrixXd x;
  Eigen::MatrixXd x_match;
  Eigen::MatrixXd y;
  Eigen::MatrixXd z;
  Eigen::VectorXd weights;
  double n_hat_star = 0.0;
  std::uint64_t seed = 0;
  bool seeded = false;
};

FusedFile build_fused(Representation rep, const TransportPlan& plan, const HarmonizedPair& pair,
                      const SampleFrame& recipient, const SampleFrame& donor);

/// Imputed representations select one matched record per unit by balanced
/// sampling; the seed is recorded in the file.
FusedFile build_imputed_fused(Representation rep, const TransportPlan& plan,
                              const HarmonizedPair& pair, const SampleFrame& recipient,
                              const SampleFrame& donor, std::uint64_t seed);

enum class VariableBlock { kY, kZ };

struct JointEstimate {
  enum class Kind { kMean, kContingency, kCovariance };
  Kind kind = Kind::kMean;
  Representation representation = Representation::kPairwise;
  Eigen::MatrixXd value;  // mean: column vector
  double n_hat_star = 0.0;
};

Eigen::VectorXd weighted_mean(const FusedFile& fused, VariableBlock block);

/// N_yz = sum of weight * y z' over the file; requires one-hot y and z.
JointEstimate contingency(const FusedFile& fused);

/// Sigma_yz = (1/N*) sum of weight * (y - ymean)(z - zmean)'.
JointEstimate covariance_yz(const FusedFile& fused);

/// Weighted cross-moment regression coefficients
/// (sum w e x')(sum w x x')^{-1} for the frame's extra block against x.
/// Falls back to a scaled ridge when x'Wx is rank deficient.
Eigen::MatrixXd renssen_beta(const SampleFrame& frame, const Eigen::VectorXd& weights,
                             bool* ridged = nullptr);

/// Regression-based contingency estimate:
/// beta_y (alpha sum w1 x x' + (1-alpha) sum w2 x x') beta_z'.
Eigen::MatrixXd renssen_contingency(const HarmonizedPair& pair, const SampleFrame& recipient,
                                    const SampleFrame& donor, const Eigen::MatrixXd& beta_y,
                                    const Eigen::MatrixXd& beta_z);

/// Regression comparator for covariances: beta_y poolcov(x) beta_z'.
Eigen::MatrixXd renssen_covariance(const HarmonizedPair& pair, const SampleFrame& recipient,
                                   const SampleFrame& donor);

struct QualityReport {
  Eigen::VectorXd rmse_per_x;  // weighted RMSE between x_k and x-hat_k
  double mean_distance = 0.0;  // plan-weighted mean transport cost
  double min_distance = 0.0;
  double median_distance = 0.0;
  double max_distance = 0.0;
};

QualityReport quality_diagnostic(const TransportPlan& plan, const HarmonizedPair& pair,
                                 const SampleFrame& recipient, const SampleFrame& donor,
                                 const CostMatrix& cost);

}  // namespace statfuse
