#include "statfuse/balance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "statfuse/errors.hpp"
#include "statfuse/rng.hpp"

namespace statfuse {

ImputationDesign build_design(const TransportPlan& plan, const HarmonizedPair& pair,
                              const SampleFrame& recipient, const SampleFrame& donor,
                              ImputeDirection direction, const BalanceOptions& options) {
  const bool s1 = direction == ImputeDirection::kS1;
  const int num_strata = s1 ? plan.n1 : plan.n2;
  const Eigen::VectorXd& stratum_weight = s1 ? pair.w1 : pair.w2;
  const SampleFrame& source = s1 ? donor : recipient;

  // Collect the support of each stratum.
  std::vector<std::vector<std::pair<int, double>>> support(num_strata);
  for (const auto& e : plan.entries) {
    if (s1) {
      support[e.row].push_back({e.col, e.weight});
    } else {
      support[e.col].push_back({e.row, e.weight});
    }
  }

  ImputationDesign design;
  design.direction = direction;
  design.num_strata = num_strata;
  design.stratum_begin.assign(num_strata + 1, 0);

  for (int s = 0; s < num_strata; ++s) {
    auto& cand = support[s];
    if (cand.empty()) {
      throw NumericError("build_design: internal: unit " + std::to_string(s) +
                         " has empty support in the plan");
    }
    std::sort(cand.begin(), cand.end());
    double total = 0.0;
    for (auto& [pos, w] : cand) {
      double q = w / stratum_weight(s);
      if (q < options.prune_threshold) q = 0.0;
      w = q;
      total += q;
    }
    if (total <= 0.0) {
      throw NumericError("build_design: internal: stratum probability mass vanished");
    }
    design.stratum_begin[s] = static_cast<int>(design.cells.size());
    for (const auto& [pos, q] : cand) {
      if (q <= 0.0) continue;
      design.cells.push_back({s, pos, q / total});
    }
  }
  design.stratum_begin[num_strata] = static_cast<int>(design.cells.size());

  const int num_cells = static_cast<int>(design.cells.size());
  const int p = source.p();
  const int extra = source.extra_dim();
  design.balance.resize(num_cells, p + extra);
  for (int c = 0; c < num_cells; ++c) {
    const DesignCell& cell = design.cells[c];
    const double w = stratum_weight(cell.stratum);
    design.balance.row(c).head(p) = w * source.x.row(cell.candidate);
    if (extra > 0) design.balance.row(c).tail(extra) = w * source.extra.row(cell.candidate);
  }
  design.balance_target = Eigen::VectorXd::Zero(p + extra);
  for (int c = 0; c < num_cells; ++c) {
    design.balance_target += design.cells[c].probability * design.balance.row(c).transpose();
  }
  return design;
}

namespace {

constexpr double kSnap = 1e-12;

struct FlightState {
  const ImputationDesign* design;
  Eigen::VectorXd pi;
  std::vector<int> status;               // -1 free, 0, 1
  std::vector<std::vector<int>> free_of; // per stratum: free cell indices
  const BalanceOptions* options;

  void pin(int c, int value) {
    status[c] = value;
    pi(c) = value;
    auto& list = free_of[design->cells[c].stratum];
    list.erase(std::find(list.begin(), list.end(), c));
  }

  // Snap a cell sitting numerically on a bound. Returns true if pinned.
  bool snap_if_bound(int c) {
    if (status[c] != -1) return false;
    if (pi(c) <= kSnap) {
      pin(c, 0);
      return true;
    }
    if (pi(c) >= 1.0 - kSnap) {
      pin(c, 1);
      return true;
    }
    return false;
  }

  // A stratum whose last free cell remains must hold an integer mass.
  void resolve_singletons(int stratum) {
    auto& list = free_of[stratum];
    if (list.size() != 1) return;
    const int c = list.front();
    const double rounded = std::round(pi(c));
    if (std::abs(pi(c) - rounded) > 1e-6) {
      throw NumericError("select_balanced: internal: stray fractional mass " +
                         std::to_string(pi(c)));
    }
    pin(c, static_cast<int>(rounded));
  }
};

// One flight move on `window` (cell indices) against the stratum unit-sum
// rows plus the active balance columns. Returns false when no kernel
// direction exists.
bool flight_step(FlightState& state, const std::vector<int>& window,
                 const std::vector<int>& window_strata, const std::vector<int>& active_cols,
                 Philox4x32& rng) {
  const int t = static_cast<int>(window_strata.size());
  const int g = static_cast<int>(active_cols.size());
  const int w = static_cast<int>(window.size());
  if (w <= t + g) return false;

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(t + g, w);
  for (int c = 0; c < w; ++c) {
    const DesignCell& cell = state.design->cells[window[c]];
    const int srow = static_cast<int>(
        std::find(window_strata.begin(), window_strata.end(), cell.stratum) -
        window_strata.begin());
    m(srow, c) = 1.0;
    for (int k = 0; k < g; ++k) {
      m(t + k, c) = state.design->balance(window[c], active_cols[k]);
    }
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-12);
  const Eigen::MatrixXd kernel = lu.kernel();
  if (kernel.cols() == 0 || kernel.col(0).norm() < 1e-14) return false;
  const Eigen::VectorXd direction = kernel.col(0).normalized();

  double lambda_up = std::numeric_limits<double>::infinity();
  double lambda_down = std::numeric_limits<double>::infinity();
  for (int c = 0; c < w; ++c) {
    const double u = direction(c);
    const double value = state.pi(window[c]);
    if (u > 1e-14) {
      lambda_up = std::min(lambda_up, (1.0 - value) / u);
      lambda_down = std::min(lambda_down, value / u);
    } else if (u < -1e-14) {
      lambda_up = std::min(lambda_up, value / -u);
      lambda_down = std::min(lambda_down, (1.0 - value) / -u);
    }
  }
  if (!std::isfinite(lambda_up) || !std::isfinite(lambda_down)) return false;

  // Martingale step: E(pi) is preserved by the choice probabilities.
  const double go_up_prob = lambda_down / (lambda_up + lambda_down);
  const double lambda = rng.next_double() < go_up_prob ? lambda_up : -lambda_down;
  for (int c = 0; c < w; ++c) state.pi(window[c]) += lambda * direction(c);

  for (int c = 0; c < w; ++c) state.snap_if_bound(window[c]);
  if (state.options->step_observer) state.options->step_observer(state.pi);
  return true;
}

// Flight restricted to one stratum, with per-stratum substream.
void stratum_flight(FlightState& state, int stratum, const std::vector<int>& active_cols,
                    Philox4x32& rng) {
  const int capacity = 1 + static_cast<int>(active_cols.size());
  for (;;) {
    auto& free = state.free_of[stratum];
    if (static_cast<int>(free.size()) <= capacity) return;
    std::vector<int> window(free.begin(), free.begin() + std::min<std::size_t>(
                                              free.size(), static_cast<std::size_t>(capacity) + 1));
    if (!flight_step(state, window, {stratum}, active_cols, rng)) return;
  }
}

// Global flight across strata; windows take whole strata so unit sums stay
// inside the kernel.
void global_flight(FlightState& state, const std::vector<int>& active_cols, Philox4x32& rng) {
  const int g = static_cast<int>(active_cols.size());
  for (;;) {
    std::vector<int> window, window_strata;
    for (int s = 0; s < state.design->num_strata; ++s) {
      const auto& free = state.free_of[s];
      if (free.empty()) continue;
      if (free.size() == 1) {
        state.resolve_singletons(s);
        continue;
      }
      window_strata.push_back(s);
      window.insert(window.end(), free.begin(), free.end());
      if (static_cast<int>(window.size()) >
          static_cast<int>(window_strata.size()) + g) {
        break;
      }
    }
    if (static_cast<int>(window.size()) <= static_cast<int>(window_strata.size()) + g) return;
    if (!flight_step(state, window, window_strata, active_cols, rng)) return;
    for (int s : window_strata) state.resolve_singletons(s);
  }
}

}  // namespace

ImputationOutcome select_balanced(const ImputationDesign& design, std::uint64_t seed,
                                  const BalanceOptions& options) {
  const int num_cells = static_cast<int>(design.cells.size());
  FlightState state;
  state.design = &design;
  state.options = &options;
  state.pi.resize(num_cells);
  state.status.assign(num_cells, -1);
  state.free_of.assign(design.num_strata, {});
  for (int c = 0; c < num_cells; ++c) {
    state.pi(c) = design.cells[c].probability;
    state.free_of[design.cells[c].stratum].push_back(c);
  }
  for (int c = 0; c < num_cells; ++c) state.snap_if_bound(c);
  for (int s = 0; s < design.num_strata; ++s) state.resolve_singletons(s);

  Philox4x32 master(seed);
  std::vector<int> active_cols(design.balance.cols());
  std::iota(active_cols.begin(), active_cols.end(), 0);

  // Flight: within strata first (cheap, kills most fractional cells), then
  // across strata on whole-stratum windows.
  for (int s = 0; s < design.num_strata; ++s) {
    if (state.free_of[s].size() > 1) {
      Philox4x32 rng = master.substream(static_cast<std::uint64_t>(s) + 1);
      stratum_flight(state, s, active_cols, rng);
    }
  }
  Philox4x32 global_rng = master.substream(0);
  global_flight(state, active_cols, global_rng);

  // Landing: relax balance columns one at a time, least weighted norm first.
  while (!active_cols.empty()) {
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t best_pos = 0;
    for (std::size_t k = 0; k < active_cols.size(); ++k) {
      double score = 0.0;
      for (int s = 0; s < design.num_strata; ++s) {
        for (int c : state.free_of[s]) {
          const double b = design.balance(c, active_cols[k]);
          score += b * b * state.pi(c) * (1.0 - state.pi(c));
        }
      }
      if (score < best_score) {
        best_score = score;
        best_pos = k;
      }
    }
    active_cols.erase(active_cols.begin() + static_cast<std::ptrdiff_t>(best_pos));
    global_flight(state, active_cols, global_rng);
  }

  // Exact finish: categorical draw inside each still-fractional stratum.
  for (int s = 0; s < design.num_strata; ++s) {
    auto& free = state.free_of[s];
    if (free.empty()) continue;
    std::vector<int> cells(free);
    double total = 0.0;
    for (int c : cells) total += state.pi(c);
    const double u = global_rng.next_double() * total;
    double cum = 0.0;
    int chosen = cells.back();
    for (int c : cells) {
      cum += state.pi(c);
      if (u < cum) {
        chosen = c;
        break;
      }
    }
    for (int c : cells) {
      state.status[c] = (c == chosen) ? 1 : 0;
      state.pi(c) = state.status[c];
    }
    free.clear();
  }

  ImputationOutcome outcome;
  outcome.seed = seed;
  outcome.selected.assign(design.num_strata, -1);
  for (int c = 0; c < num_cells; ++c) {
    if (state.status[c] != 1) continue;
    const DesignCell& cell = design.cells[c];
    if (outcome.selected[cell.stratum] != -1) {
      throw NumericError("select_balanced: internal: two candidates selected in one stratum");
    }
    outcome.selected[cell.stratum] = cell.candidate;
  }
  for (int s = 0; s < design.num_strata; ++s) {
    if (outcome.selected[s] < 0) {
      throw NumericError("select_balanced: internal: stratum " + std::to_string(s) +
                         " ended with no selection");
    }
  }

  Eigen::VectorXd realized = Eigen::VectorXd::Zero(design.balance.cols());
  for (int c = 0; c < num_cells; ++c) {
    if (state.status[c] == 1) realized += design.balance.row(c).transpose();
  }
  outcome.balance_residual = realized - design.balance_target;
  return outcome;
}

ImputedValues impute_from_outcome(const ImputationOutcome& outcome, const SampleFrame& source) {
  const int n = static_cast<int>(outcome.selected.size());
  ImputedValues values;
  values.x.resize(n, source.p());
  values.extra.resize(n, source.extra_dim());
  for (int s = 0; s < n; ++s) {
    values.x.row(s) = source.x.row(outcome.selected[s]);
    if (source.extra_dim() > 0) values.extra.row(s) = source.extra.row(outcome.selected[s]);
  }
  return values;
}

}  // namespace statfuse
