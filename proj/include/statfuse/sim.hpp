#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "statfuse/frame.hpp"
#include "statfuse/rng.hpp"

namespace statfuse {

/// Parameters of the synthetic Gaussian population: x multivariate normal,
/// y = B_y x + eps, z = B_z x + eps with independent unit-normal noise per
/// generated variable, so cov(y, z) = B_y Sigma_xx B_z' by construction.
struct GaussianSpec {
  int population_size = 10000;
  Eigen::VectorXd mu_x;      // p
  Eigen::MatrixXd sigma_xx;  // p x p, symmetric positive definite
  Eigen::MatrixXd b_y;       // q x p
  Eigen::MatrixXd b_z;       // r x p
  int n1 = 600;
  int n2 = 3000;
  int replicates = 200;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  bool truth_finite_population = false;
};

/// The defaults used across the docs and tests (p=3, q=r=2).
GaussianSpec default_gaussian_spec();

struct Population {
  Eigen::MatrixXd x, y, z;
  int size() const { return static_cast<int>(x.rows()); }
};

Population generate_population(const GaussianSpec& spec, std::uint64_t seed);

/// Equal-probability fixed-size sample without replacement; returns sorted
/// positions. Every unit carries weight N/n.
std::vector<int> srswor(int population_size, int n, Philox4x32& rng);

SampleFrame population_frame(const Population& pop, const std::vector<int>& positions, Role role);

struct MseDecomposition {
  Eigen::MatrixXd bias2;
  Eigen::MatrixXd variance;
  Eigen::MatrixXd mse;  // bias2 + variance, same accumulation
};

/// B = (mean - truth)^2 entrywise, V = population variance over replicates.
MseDecomposition mse_decompose(const std::vector<Eigen::MatrixXd>& estimates,
                               const Eigen::MatrixXd& truth);

struct McReport {
  Eigen::MatrixXd truth;
  MseDecomposition opt;  // pairwise transport covariance
  MseDecomposition bal;  // one balanced imputation per replicate
  MseDecomposition ren;  // regression comparator
  int replicates_done = 0;
  int replicates_failed = 0;
};

/// Full experiment: one population, `replicates` independent sample pairs,
/// each run through harmonize -> distance -> transport -> the three
/// covariance estimators. Replicates run on a thread pool but aggregate in
/// index order, so the report is bit-stable for a given spec.
McReport run_monte_carlo(const GaussianSpec& spec);

}  // namespace statfuse
