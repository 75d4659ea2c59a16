#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "statfuse/distance.hpp"
#include "statfuse/frame.hpp"
#include "statfuse/harmonize.hpp"

namespace statfuse {

struct PlanEntry {
  int row = 0;  // position in S1
  int col = 0;  // position in S2
  double weight = 0.0;
};

/// Optimal matching weights over S1 x S2. `entries` is the complete support
/// (fixed overlap cells included), sorted by (row, col). The potentials
/// certify optimality of the reduced problem left after the fixed cells are
/// subtracted from both marginals.
struct TransportPlan {
  int n1 = 0;
  int n2 = 0;
  std::vector<PlanEntry> entries;
  std::vector<PlanEntry> fixed;  // forced cells (k, l, min(w1_k, w2_l))
  double objective = 0.0;        // includes the fixed cells
  Eigen::VectorXd row_potential;
  Eigen::VectorXd col_potential;
  long pivots = 0;
};

struct SolveOptions {
  enum class InitialBasis { kVogel, kNorthWest };
  InitialBasis initial = InitialBasis::kVogel;
  double balance_tol = 1e-8;     // allowed relative mismatch of marginal sums
  long max_pivots = 2'000'000;
};

/// Transportation simplex on the reduced problem: fixed overlap cells get
/// min(w1, w2), are excluded from further routing, and their mass is
/// subtracted from both marginals. Deterministic tie-breaking throughout
/// (lowest (row, col) wins), so identical inputs give identical plans.
TransportPlan solve_transport(const CostMatrix& cost, const HarmonizedPair& pair,
                              const OverlapInfo& overlap, const SolveOptions& options = {});

/// Lower-level entry point used by tests and by the simulator.
TransportPlan solve_transport_raw(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                                  const Eigen::VectorXd& demand,
                                  const std::vector<std::pair<int, int>>& fixed_pairs,
                                  const SolveOptions& options = {});

/// Independent re-certification of a plan: marginals, nonnegativity, fixed
/// cells, and optimality. Potentials are reconstructed from the support
/// alone (the solver's stored duals are not trusted), so a plan loaded from
/// disk can be certified as well.
struct PlanCertificate {
  bool pass = false;
  double max_row_violation = 0.0;    // relative to w1_k
  double max_col_violation = 0.0;    // relative to w2_l
  double min_entry = 0.0;
  double max_fixed_violation = 0.0;  // relative deviation from min(w1, w2)
  double min_reduced_cost = 0.0;     // most negative reduced cost anywhere
  double max_support_residual = 0.0; // worst |reduced cost| on the support
  double duality_gap = 0.0;          // |primal - dual| relative to max(1, primal)
  std::string failure;               // empty when pass
};

PlanCertificate verify_plan(const TransportPlan& plan, const CostMatrix& cost,
                            const Eigen::VectorXd& w1, const Eigen::VectorXd& w2,
                            const OverlapInfo& overlap);

/// Plan CSV: recipient_id,donor_id,weight with round-trip precision.
void save_plan(const TransportPlan& plan, const SampleFrame& recipient,
               const SampleFrame& donor, const std::string& path);
TransportPlan load_plan(const std::string& path, const SampleFrame& recipient,
                        const SampleFrame& donor, const OverlapInfo& overlap);

}  // namespace statfuse
