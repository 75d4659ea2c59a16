#pragma once

#include <Eigen/Dense>
#include <vector>

#include "statfuse/frame.hpp"

namespace statfuse {

/// Overlap-aware mixing coefficient (n1 - n12) / (n1 + n2 - 2 n12).
///
/// When both samples coincide (n1 = n2 = n12) the ratio is 0/0; 0.5 is
/// returned and `degenerate`, if given, is set. Disjoint samples give
/// n1 / (n1 + n2); a donor contained in the recipient gives 1.
double alpha_star(int n1, int n2, int n12, bool* degenerate = nullptr);

/// Variance-minimizing coefficient (var2 - cov12) / (var1 + var2 - cov12)
/// for a scalar total estimated from both samples. Exposed for diagnostics
/// only; the pipeline always mixes with alpha_star because the variance
/// inputs are rarely stable enough. Clamped to [0, 1].
double alpha_opt(double var1, double var2, double cov12);

struct CompositeTotals {
  Eigen::VectorXd x_hat_star;  // composite totals of the matching variables
  double n_hat_star = 0.0;     // composite population size
};

/// X* = alpha * sum_{S1} v1 x + (1-alpha) * sum_{S2} v2 x, same mix for N*.
CompositeTotals composite_totals(const SampleFrame& recipient, const SampleFrame& donor,
                                 double alpha);

struct KlOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;        // max residual relative to max(1, |target|)
  // Once `tolerance` is met the iteration keeps polishing toward this target
  // while steps still pay off; the representation identities downstream
  // inherit whatever residual is left here.
  double polish_tolerance = 1e-13;
  double pivot_threshold = 1e-10; // collinear-column detection
};

struct KlReport {
  int iterations = 0;
  double max_rel_residual = 0.0;
  std::vector<int> dropped_columns;      // design columns removed as collinear
  std::vector<double> objective_trace;   // dual objective at accepted steps
};

/// Multiplicative (raking) calibration: finds w = v .* exp(A lambda) with
/// A' w = targets, by damped Newton on the convex dual
///   phi(lambda) = sum_k v_k exp(a_k' lambda) - targets' lambda.
/// Weights stay positive by construction. Collinear design columns are
/// dropped (with the matching target) and reported.
Eigen::VectorXd kl_calibrate(const Eigen::VectorXd& v, const Eigen::MatrixXd& design,
                             const Eigen::VectorXd& targets, const KlOptions& options = {},
                             KlReport* report = nullptr);

struct CalibrationSummary {
  int iterations = 0;
  double max_rel_residual = 0.0;
  std::vector<int> dropped_columns;
};

/// Two weight systems calibrated to shared composite totals.
struct HarmonizedPair {
  double alpha = 0.0;
  bool alpha_degenerate = false;
  Eigen::VectorXd x_hat_star;
  double n_hat_star = 0.0;
  Eigen::VectorXd w1;  // calibrated recipient weights
  Eigen::VectorXd w2;  // calibrated donor weights
  CalibrationSummary recipient_report;
  CalibrationSummary donor_report;
};

/// Full harmonization: alpha from the overlap, composite totals, then each
/// frame calibrated on [x | 1] to (X*, N*).
HarmonizedPair harmonize_pair(const SampleFrame& recipient, const SampleFrame& donor,
                              const OverlapInfo& overlap, const KlOptions& options = {});

}  // namespace statfuse
