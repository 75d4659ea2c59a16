#pragma once

#include <Eigen/Dense>

#include "statfuse/frame.hpp"
#include "statfuse/harmonize.hpp"

namespace statfuse {

enum class Metric { kEuclidean, kMahalanobis };

/// What the transport objective prices: the distance itself or its square.
enum class CostForm { kDistance, kSquaredDistance };

struct CostMatrix {
  Eigen::MatrixXd values;  // n1 x n2, nonnegative
  Metric metric = Metric::kMahalanobis;
  CostForm form = CostForm::kDistance;
  Eigen::MatrixXd omega;  // pooled covariance behind the metric (empty for euclidean)
};

/// Pooled weighted covariance of the matching variables around the composite
/// mean X*/N*, mixing the two samples with alpha.
Eigen::MatrixXd pooled_covariance(const SampleFrame& recipient, const SampleFrame& donor,
                                  const HarmonizedPair& pair);

/// Distances between every recipient and donor unit under the quadratic form
/// omega^{-1}. A scaled ridge (1e-8 * trace/p) keeps the form positive
/// definite when x has collinear or constant columns.
CostMatrix mahalanobis_matrix(const SampleFrame& recipient, const SampleFrame& donor,
                              const Eigen::MatrixXd& omega,
                              CostForm form = CostForm::kDistance);

/// Convenience builder: pooled covariance for the mahalanobis metric,
/// identity for euclidean.
CostMatrix cost_matrix(const SampleFrame& recipient, const SampleFrame& donor,
                       const HarmonizedPair& pair, Metric metric = Metric::kMahalanobis,
                       CostForm form = CostForm::kDistance);

}  // namespace statfuse
