#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "statfuse/distance.hpp"
#include "statfuse/errors.hpp"
#include "statfuse/harmonize.hpp"
#include "statfuse/transport.hpp"
#include "test_util.hpp"

using namespace statfuse;
using statfuse_test::random_frame;

namespace {

struct RawInstance {
  Eigen::MatrixXd cost;
  Eigen::VectorXd supply, demand;
};

RawInstance random_instance(Philox4x32& rng, int m, int n) {
  RawInstance inst;
  inst.cost.resize(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) inst.cost(i, j) = 10.0 * rng.next_double();
  }
  inst.supply.resize(m);
  inst.demand.resize(n);
  for (int i = 0; i < m; ++i) inst.supply(i) = 0.5 + 2.5 * rng.next_double();
  for (int j = 0; j < n; ++j) inst.demand(j) = 0.5 + 2.5 * rng.next_double();
  inst.demand *= inst.supply.sum() / inst.demand.sum();
  return inst;
}

CostMatrix as_cost_matrix(const Eigen::MatrixXd& values) {
  CostMatrix cost;
  cost.values = values;
  cost.metric = Metric::kEuclidean;
  cost.form = CostForm::kDistance;
  return cost;
}

}  // namespace

TEST_CASE("single cell carries the whole mass") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(1, 1, 2.0);
  TransportPlan plan = solve_transport_raw(cost, Eigen::VectorXd::Constant(1, 5.0),
                                           Eigen::VectorXd::Constant(1, 5.0), {});
  REQUIRE(plan.entries.size() == 1);
  CHECK(plan.entries[0].weight == 5.0);
  CHECK(plan.objective == 10.0);
}

TEST_CASE("zero-cost perfect matching is found") {
  Eigen::MatrixXd cost(2, 2);
  cost << 0, 1, 1, 0;
  TransportPlan plan = solve_transport_raw(cost, Eigen::VectorXd::Ones(2),
                                           Eigen::VectorXd::Ones(2), {});
  CHECK(plan.objective == doctest::Approx(0.0).epsilon(1e-15));
  for (const auto& e : plan.entries) {
    if (e.weight > 0) CHECK(e.row == e.col);
  }
}

TEST_CASE("overlap cell is fixed and the leftovers route around it") {
  // S1 = {a, b} with w1 = (2, 1); S2 = {a, c} with w2 = (1, 2); overlap {a}.
  Eigen::MatrixXd cost(2, 2);
  cost << 0.3, 7.1, 9.2, 0.4;  // any costs: the residual polytope is a single point
  Eigen::VectorXd w1(2), w2(2);
  w1 << 2, 1;
  w2 << 1, 2;
  TransportPlan plan = solve_transport_raw(cost, w1, w2, {{0, 0}});
  REQUIRE(plan.entries.size() == 3);
  CHECK(plan.entries[0].row == 0);
  CHECK(plan.entries[0].col == 0);
  CHECK(plan.entries[0].weight == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(plan.entries[1].row == 0);
  CHECK(plan.entries[1].col == 1);
  CHECK(plan.entries[1].weight == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(plan.entries[2].row == 1);
  CHECK(plan.entries[2].col == 1);
  CHECK(plan.entries[2].weight == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("random instances match both oracles") {
  Philox4x32 rng(21);
  for (int rep = 0; rep < 60; ++rep) {
    const int m = 1 + static_cast<int>(rng.below(5));
    const int n = 1 + static_cast<int>(rng.below(5));
    RawInstance inst = random_instance(rng, m, n);
    TransportPlan plan = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});

    const double lp = statfuse_test::lp_transport_objective(inst.cost, inst.supply, inst.demand);
    CHECK(plan.objective == doctest::Approx(lp).epsilon(1e-9));
    if (m * n <= 20) {
      const double vertex =
          statfuse_test::enumerate_vertices_objective(inst.cost, inst.supply, inst.demand);
      CHECK(plan.objective == doctest::Approx(vertex).epsilon(1e-9));
    }

    PlanCertificate cert =
        verify_plan(plan, as_cost_matrix(inst.cost), inst.supply, inst.demand, {});
    CHECK(cert.pass);
    CHECK(static_cast<int>(plan.entries.size()) <= m + n - 1);
  }
}

TEST_CASE("a 5x7 instance agrees with exhaustive vertex enumeration") {
  Philox4x32 rng(22);
  RawInstance inst = random_instance(rng, 5, 7);
  TransportPlan plan = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  const double vertex =
      statfuse_test::enumerate_vertices_objective(inst.cost, inst.supply, inst.demand);
  CHECK(plan.objective == doctest::Approx(vertex).epsilon(1e-9));
}

TEST_CASE("fixed cells against the oracle on the reduced problem") {
  Philox4x32 rng(23);
  for (int rep = 0; rep < 30; ++rep) {
    const int m = 2 + static_cast<int>(rng.below(5));
    const int n = 2 + static_cast<int>(rng.below(5));
    RawInstance inst = random_instance(rng, m, n);
    const int overlap = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(m, n))));
    std::vector<std::pair<int, int>> fixed;
    for (int t = 0; t < overlap; ++t) fixed.push_back({t, t});

    TransportPlan plan = solve_transport_raw(inst.cost, inst.supply, inst.demand, fixed);

    // independent route: subtract the fixed mass, ban the cells with a huge
    // cost, and hand the residual problem to the oracle simplex
    Eigen::VectorXd a = inst.supply, b = inst.demand;
    Eigen::MatrixXd cost = inst.cost;
    double fixed_part = 0.0;
    for (const auto& [k, l] : fixed) {
      const double f = std::min(a(k), b(l));
      fixed_part += f * cost(k, l);
      a(k) -= f;
      b(l) -= f;
      cost(k, l) = 1e6;
    }
    a = a.cwiseMax(0.0);
    b = b.cwiseMax(0.0);
    const double lp = statfuse_test::lp_transport_objective(cost, a, b);
    CHECK(plan.objective == doctest::Approx(fixed_part + lp).epsilon(1e-8));

    OverlapInfo info;
    for (const auto& [k, l] : fixed) {
      info.common_ids.push_back(std::to_string(k));
      info.pairs.push_back({k, l});
    }
    PlanCertificate cert =
        verify_plan(plan, as_cost_matrix(inst.cost), inst.supply, inst.demand, info);
    CHECK(cert.pass);
  }
}

TEST_CASE("marginals hold to 1e-9 relative on larger instances") {
  Philox4x32 rng(24);
  RawInstance inst = random_instance(rng, 60, 140);
  TransportPlan plan = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(60), cols = Eigen::VectorXd::Zero(140);
  for (const auto& e : plan.entries) {
    rows(e.row) += e.weight;
    cols(e.col) += e.weight;
    CHECK(e.weight > 0.0);
  }
  for (int i = 0; i < 60; ++i) {
    CHECK(std::abs(rows(i) - inst.supply(i)) <= 1e-9 * inst.supply(i));
  }
  for (int j = 0; j < 140; ++j) {
    CHECK(std::abs(cols(j) - inst.demand(j)) <= 1e-9 * inst.demand(j));
  }
  CHECK(static_cast<int>(plan.entries.size()) <= 60 + 140 - 1);
}

TEST_CASE("scaling all costs scales the objective and keeps the support") {
  Philox4x32 rng(25);
  RawInstance inst = random_instance(rng, 7, 9);
  TransportPlan base = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  TransportPlan scaled = solve_transport_raw(3.75 * inst.cost, inst.supply, inst.demand, {});
  CHECK(scaled.objective == doctest::Approx(3.75 * base.objective).epsilon(1e-12));
  REQUIRE(scaled.entries.size() == base.entries.size());
  for (std::size_t t = 0; t < base.entries.size(); ++t) {
    CHECK(scaled.entries[t].row == base.entries[t].row);
    CHECK(scaled.entries[t].col == base.entries[t].col);
    CHECK(scaled.entries[t].weight == doctest::Approx(base.entries[t].weight).epsilon(1e-12));
  }
}

TEST_CASE("identical inputs give identical plans") {
  Philox4x32 rng(26);
  RawInstance inst = random_instance(rng, 12, 17);
  TransportPlan a = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  TransportPlan b = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t t = 0; t < a.entries.size(); ++t) {
    CHECK(a.entries[t].row == b.entries[t].row);
    CHECK(a.entries[t].col == b.entries[t].col);
    CHECK(a.entries[t].weight == b.entries[t].weight);
  }
}

TEST_CASE("north-west start reaches the same optimum as Vogel") {
  Philox4x32 rng(27);
  for (int rep = 0; rep < 10; ++rep) {
    RawInstance inst = random_instance(rng, 9, 11);
    SolveOptions nw;
    nw.initial = SolveOptions::InitialBasis::kNorthWest;
    TransportPlan vogel = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
    TransportPlan north = solve_transport_raw(inst.cost, inst.supply, inst.demand, {}, nw);
    CHECK(vogel.objective == doctest::Approx(north.objective).epsilon(1e-10));
  }
}

TEST_CASE("degenerate equal-cost grids terminate (anti-cycling)") {
  // all-equal costs and equal marginals: every vertex is optimal and every
  // pivot is degenerate or flat
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(12, 12);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
  TransportPlan plan = solve_transport_raw(cost, w, w, {});
  CHECK(plan.objective == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("verify_plan flags a perturbed plan and a suboptimal plan") {
  Philox4x32 rng(28);
  RawInstance inst = random_instance(rng, 4, 5);
  TransportPlan plan = solve_transport_raw(inst.cost, inst.supply, inst.demand, {});
  CostMatrix cost = as_cost_matrix(inst.cost);
  REQUIRE(verify_plan(plan, cost, inst.supply, inst.demand, {}).pass);

  SUBCASE("row marginal broken") {
    TransportPlan bad = plan;
    bad.entries[0].weight += 0.1;
    PlanCertificate cert = verify_plan(bad, cost, inst.supply, inst.demand, {});
    CHECK_FALSE(cert.pass);
    CHECK(cert.max_row_violation > 1e-9);
  }
  SUBCASE("feasible but suboptimal plan rejected") {
    // move mass around a 2x2 square; feasibility is preserved, cost changes
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(4, 5);
    for (const auto& e : plan.entries) dense(e.row, e.col) = e.weight;
    // find the cheapest direction that makes it strictly worse
    TransportPlan worse = plan;
    bool built = false;
    for (int i = 0; i < 4 && !built; ++i) {
      for (int k = i + 1; k < 4 && !built; ++k) {
        for (int j = 0; j < 5 && !built; ++j) {
          for (int l = j + 1; l < 5 && !built; ++l) {
            const double shift = std::min(dense(i, j), dense(k, l));
            if (shift <= 0) continue;
            const double delta =
                inst.cost(i, l) + inst.cost(k, j) - inst.cost(i, j) - inst.cost(k, l);
            if (delta <= 1e-6) continue;
            Eigen::MatrixXd moved = dense;
            moved(i, j) -= shift;
            moved(k, l) -= shift;
            moved(i, l) += shift;
            moved(k, j) += shift;
            worse.entries.clear();
            for (int a = 0; a < 4; ++a) {
              for (int b = 0; b < 5; ++b) {
                if (moved(a, b) > 0) worse.entries.push_back({a, b, moved(a, b)});
              }
            }
            built = true;
          }
        }
      }
    }
    REQUIRE(built);
    PlanCertificate cert = verify_plan(worse, cost, inst.supply, inst.demand, {});
    CHECK_FALSE(cert.pass);
  }
}

TEST_CASE("solve_transport preserves calibration through the plan") {
  Philox4x32 rng(29);
  SampleFrame recipient = random_frame(rng, 25, 3, 1, Role::kRecipient, "u");
  SampleFrame donor = random_frame(rng, 55, 3, 1, Role::kDonor, "v");
  // overlap of 6 units sharing ids and x rows
  for (int t = 0; t < 6; ++t) {
    donor.ids[t] = recipient.ids[t];
    donor.x.row(t) = recipient.x.row(t);
  }
  OverlapInfo overlap = detect_overlap(recipient, donor);
  REQUIRE(overlap.n12() == 6);
  HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  CostMatrix cost = cost_matrix(recipient, donor, pair);
  TransportPlan plan = solve_transport(cost, pair, overlap);

  Eigen::VectorXd via_rows = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd via_cols = Eigen::VectorXd::Zero(3);
  for (const auto& e : plan.entries) {
    via_rows += e.weight * recipient.x.row(e.row).transpose();
    via_cols += e.weight * donor.x.row(e.col).transpose();
  }
  for (int j = 0; j < 3; ++j) {
    const double scale = std::max(1.0, std::abs(pair.x_hat_star(j)));
    CHECK(std::abs(via_rows(j) - pair.x_hat_star(j)) / scale <= 1e-6);
    CHECK(std::abs(via_cols(j) - pair.x_hat_star(j)) / scale <= 1e-6);
  }

  PlanCertificate cert = verify_plan(plan, cost, pair.w1, pair.w2, overlap);
  CHECK(cert.pass);
  CHECK(cert.duality_gap <= 1e-9);
}

TEST_CASE("plans survive a save/load round trip") {
  auto dir = statfuse_test::temp_dir("plan_roundtrip");
  Philox4x32 rng(30);
  SampleFrame recipient = random_frame(rng, 10, 2, 1, Role::kRecipient);
  SampleFrame donor = random_frame(rng, 14, 2, 1, Role::kDonor);
  OverlapInfo overlap = detect_overlap(recipient, donor);
  HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  CostMatrix cost = cost_matrix(recipient, donor, pair);
  TransportPlan plan = solve_transport(cost, pair, overlap);
  save_plan(plan, recipient, donor, (dir / "plan.csv").string());

  TransportPlan loaded = load_plan((dir / "plan.csv").string(), recipient, donor, overlap);
  REQUIRE(loaded.entries.size() == plan.entries.size());
  for (std::size_t t = 0; t < plan.entries.size(); ++t) {
    CHECK(loaded.entries[t].row == plan.entries[t].row);
    CHECK(loaded.entries[t].col == plan.entries[t].col);
    CHECK(loaded.entries[t].weight == plan.entries[t].weight);  // round-trip decimals
  }
  PlanCertificate cert = verify_plan(loaded, cost, pair.w1, pair.w2, overlap);
  CHECK(cert.pass);
}

TEST_CASE("marginal mismatch is an infeasibility error") {
  Eigen::MatrixXd cost = Eigen::MatrixXd::Ones(2, 2);
  Eigen::VectorXd a = Eigen::VectorXd::Ones(2);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(2) * 1.5;
  CHECK_THROWS_AS(solve_transport_raw(cost, a, b, {}), NumericError);
}
