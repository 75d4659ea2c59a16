#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "statfuse/frame.hpp"
#include "statfuse/harmonize.hpp"
#include "statfuse/transport.hpp"

namespace statfuse {

/// Which side of the plan receives a single matched record per unit.
enum class ImputeDirection { kS1, kS2 };

struct DesignCell {
  int stratum = 0;    // recipient position (kS1) or donor position (kS2)
  int candidate = 0;  // the unit that may be copied in
  double probability = 0.0;
};

/// One selection stratum per completed unit, candidate probabilities
/// q = W / stratum weight (pruned below 1e-12 and renormalized), and the
/// balancing rows: stratum-weight * (x, other-block) of each candidate.
struct ImputationDesign {
  ImputeDirection direction = ImputeDirection::kS1;
  int num_strata = 0;
  std::vector<DesignCell> cells;   // grouped by stratum, candidates ascending
  std::vector<int> stratum_begin;  // num_strata + 1 offsets into cells
  Eigen::MatrixXd balance;         // cells x (p + extra_dim)
  Eigen::VectorXd balance_target;  // sum_c q_c * balance row c
};

struct BalanceOptions {
  double prune_threshold = 1e-12;
  /// Called with the full probability vector after every flight step; used
  /// by tests to watch stratum sums. Leave empty for production runs.
  std::function<void(const Eigen::VectorXd&)> step_observer;
};

ImputationDesign build_design(const TransportPlan& plan, const HarmonizedPair& pair,
                              const SampleFrame& recipient, const SampleFrame& donor,
                              ImputeDirection direction = ImputeDirection::kS1,
                              const BalanceOptions& options = {});

struct ImputationOutcome {
  std::vector<int> selected;         // per stratum: chosen candidate position
  Eigen::VectorXd balance_residual;  // realized minus target, per balance column
  std::uint64_t seed = 0;
};

/// Cube method over the stacked support cells. The flight phase moves the
/// probability vector inside the intersection of the per-stratum simplices
/// and the balancing subspace until only a handful of fractional cells
/// remain; the landing phase then relaxes balance columns one at a time
/// (least weighted norm first) and finishes with an exact categorical draw
/// per stratum. Stratum unit-sums are never relaxed, so every stratum ends
/// with exactly one selected candidate.
ImputationOutcome select_balanced(const ImputationDesign& design, std::uint64_t seed,
                                  const BalanceOptions& options = {});

struct ImputedValues {
  Eigen::MatrixXd x;      // one row per stratum, copied from the source frame
  Eigen::MatrixXd extra;  // z block (kS1) or y block (kS2)
};

ImputedValues impute_from_outcome(const ImputationOutcome& outcome, const SampleFrame& source);

}  // namespace statfuse
