#include "statfuse/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "statfuse/csv.hpp"
#include "statfuse/errors.hpp"

namespace statfuse {

namespace {

constexpr double kBannedCost = 1e30;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Transportation simplex (MODI) over a dense cost matrix. Nodes are the m
// supply rows (0..m-1) and n demand columns (m..m+n-1); the basis is a
// spanning tree of m+n-1 cells. Ties are always broken toward the lowest
// (row, col), which makes the whole solve deterministic.
class TransportSimplex {
 public:
  TransportSimplex(const Eigen::MatrixXd& cost_in, std::vector<double> supply,
                   std::vector<double> demand, const std::vector<char>& banned,
                   const SolveOptions& options)
      : m_(static_cast<int>(supply.size())),
        n_(static_cast<int>(demand.size())),
        supply_(std::move(supply)),
        demand_(std::move(demand)),
        banned_(banned),
        options_(options) {
    cost_.resize(static_cast<std::size_t>(m_) * n_);
    cost_scale_ = 0.0;
    for (int i = 0; i < m_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const bool ban = banned_[static_cast<std::size_t>(i) * n_ + j] != 0;
        const double c = ban ? kBannedCost : cost_in(i, j);
        cost_[static_cast<std::size_t>(i) * n_ + j] = c;
        if (!ban) cost_scale_ = std::max(cost_scale_, std::abs(c));
      }
    }
    entering_tol_ = 1e-12 * std::max(1.0, cost_scale_);
  }

  void solve() {
    bool any_ban = false;
    for (char b : banned_) any_ban |= (b != 0);
    // North-west ignores bans and could load real flow onto an excluded
    // cell; Vogel only ever parks degenerate flow there, which the repair
    // below replaces.
    if (options_.initial == SolveOptions::InitialBasis::kVogel || any_ban) {
      build_initial_vogel();
    } else {
      build_initial_northwest();
    }
    if (any_ban) repair_banned_basis();
    rebuild_tree();

    long stall = 0;
    bool bland = false;
    const long stall_limit = 10L * (m_ + n_);
    for (;;) {
      int enter_i = -1, enter_j = -1;
      if (bland) {
        if (!bland_entering(&enter_i, &enter_j)) break;
      } else if (!candidate_entering(&enter_i, &enter_j)) {
        refill_candidates();
        if (!candidate_entering(&enter_i, &enter_j)) break;
      }
      const double theta = pivot(enter_i, enter_j);
      ++pivots_;
      if (pivots_ > options_.max_pivots) {
        throw NumericError("solve_transport: pivot limit exceeded (" +
                           std::to_string(options_.max_pivots) + ")");
      }
      if (theta > 0.0) {
        stall = 0;
        bland = false;
      } else if (!bland && ++stall > stall_limit) {
        bland = true;  // anti-cycling fallback: first improving cell in index order
      }
    }
  }

  int basis_size() const { return static_cast<int>(cell_row_.size()); }
  int cell_row(int s) const { return cell_row_[s]; }
  int cell_col(int s) const { return cell_col_[s]; }
  double cell_flow(int s) const { return cell_flow_[s]; }
  const std::vector<double>& u() const { return u_; }
  const std::vector<double>& v() const { return v_; }
  long pivots() const { return pivots_; }

 private:
  double cost_at(int i, int j) const { return cost_[static_cast<std::size_t>(i) * n_ + j]; }

  void add_basic(int i, int j, double flow) {
    cell_row_.push_back(i);
    cell_col_.push_back(j);
    cell_flow_.push_back(flow);
  }

  // ---- initial basis ------------------------------------------------------

  // Doubly linked active lists over rows and columns.
  struct Active {
    std::vector<int> next, prev;
    int count;
    explicit Active(int size) : next(size + 1), prev(size + 1), count(size) {
      for (int i = 0; i <= size; ++i) {
        next[i] = i + 1 <= size ? i + 1 : size;
        prev[i] = i - 1 >= 0 ? i - 1 : size;
      }
      next[size] = 0;      // head sentinel at `size`
      prev[0] = size;
      prev[size] = size - 1;
    }
    int first() const { return next.back(); }
    int end() const { return static_cast<int>(next.size()) - 1; }
    void remove(int i) {
      next[prev[i]] = next[i];
      prev[next[i]] = prev[i];
      --count;
    }
  };

  void build_initial_vogel() {
    std::vector<double> rs = supply_, rd = demand_;
    Active rows(m_), cols(n_);

    // Cached two cheapest allowed cells per line; -1 when absent.
    std::vector<int> row_best1(m_, -1), row_best2(m_, -1);
    std::vector<int> col_best1(n_, -1), col_best2(n_, -1);

    auto rescan_row = [&](int i) {
      int b1 = -1, b2 = -1;
      for (int j = cols.first(); j != cols.end(); j = cols.next[j]) {
        const double c = cost_at(i, j);
        if (c >= kBannedCost) continue;
        if (b1 < 0 || c < cost_at(i, b1)) {
          b2 = b1;
          b1 = j;
        } else if (b2 < 0 || c < cost_at(i, b2)) {
          b2 = j;
        }
      }
      row_best1[i] = b1;
      row_best2[i] = b2;
    };
    auto rescan_col = [&](int j) {
      int b1 = -1, b2 = -1;
      for (int i = rows.first(); i != rows.end(); i = rows.next[i]) {
        const double c = cost_at(i, j);
        if (c >= kBannedCost) continue;
        if (b1 < 0 || c < cost_at(b1, j)) {
          b2 = b1;
          b1 = i;
        } else if (b2 < 0 || c < cost_at(b2, j)) {
          b2 = i;
        }
      }
      col_best1[j] = b1;
      col_best2[j] = b2;
    };
    for (int i = 0; i < m_; ++i) rescan_row(i);
    for (int j = 0; j < n_; ++j) rescan_col(j);

    auto row_penalty = [&](int i) -> double {
      if (row_best1[i] < 0) return -kInf;
      if (row_best2[i] < 0) return cost_at(i, row_best1[i]);
      return cost_at(i, row_best2[i]) - cost_at(i, row_best1[i]);
    };
    auto col_penalty = [&](int j) -> double {
      if (col_best1[j] < 0) return -kInf;
      if (col_best2[j] < 0) return cost_at(col_best1[j], j);
      return cost_at(col_best2[j], j) - cost_at(col_best1[j], j);
    };

    auto finish_single_row = [&](int r) {
      // Only row r left: hand every remaining column its demand; the last
      // cell takes the row residual so the row marginal stays exact.
      std::vector<int> remaining;
      for (int j = cols.first(); j != cols.end(); j = cols.next[j]) remaining.push_back(j);
      for (std::size_t t = 0; t < remaining.size(); ++t) {
        const int j = remaining[t];
        const double flow = (t + 1 == remaining.size()) ? rs[r] : std::min(rs[r], rd[j]);
        add_basic(r, j, flow);
        rs[r] = std::max(0.0, rs[r] - flow);
        cols.remove(j);
      }
      rows.remove(r);
    };
    auto finish_single_col = [&](int c) {
      std::vector<int> remaining;
      for (int i = rows.first(); i != rows.end(); i = rows.next[i]) remaining.push_back(i);
      for (std::size_t t = 0; t < remaining.size(); ++t) {
        const int i = remaining[t];
        add_basic(i, c, rs[i]);
        rd[c] = std::max(0.0, rd[c] - rs[i]);
        rows.remove(i);
      }
      cols.remove(c);
    };

    while (rows.count > 0 && cols.count > 0) {
      if (rows.count == 1) {
        finish_single_row(rows.first());
        break;
      }
      if (cols.count == 1) {
        finish_single_col(cols.first());
        break;
      }

      // Largest penalty; ties prefer rows, then the lowest index.
      double best_penalty = -kInf;
      bool is_row = true;
      int line = -1;
      for (int i = rows.first(); i != rows.end(); i = rows.next[i]) {
        const double pen = row_penalty(i);
        if (pen > best_penalty) {
          best_penalty = pen;
          is_row = true;
          line = i;
        }
      }
      for (int j = cols.first(); j != cols.end(); j = cols.next[j]) {
        const double pen = col_penalty(j);
        if (pen > best_penalty) {
          best_penalty = pen;
          is_row = false;
          line = j;
        }
      }

      int i, j;
      if (line < 0) {
        // Every remaining cell is banned; fall back to the first active pair
        // (feasibility demands it, the simplex will price it out if it can).
        i = rows.first();
        j = cols.first();
      } else if (is_row) {
        i = line;
        j = row_best1[line];
      } else {
        j = line;
        i = col_best1[line];
      }

      const double flow = std::min(rs[i], rd[j]);
      add_basic(i, j, flow);
      rs[i] -= flow;
      rd[j] -= flow;
      const bool row_done = rs[i] <= 0.0;
      const bool col_done = rd[j] <= 0.0;
      bool cross_row, cross_col;
      if (row_done && col_done) {
        cross_row = rows.count > 1;
        cross_col = !cross_row;
      } else {
        cross_row = row_done;
        cross_col = col_done;
      }
      if (cross_row) {
        rows.remove(i);
        for (int jj = cols.first(); jj != cols.end(); jj = cols.next[jj]) {
          if (col_best1[jj] == i || col_best2[jj] == i) rescan_col(jj);
        }
      }
      if (cross_col) {
        cols.remove(j);
        for (int ii = rows.first(); ii != rows.end(); ii = rows.next[ii]) {
          if (row_best1[ii] == j || row_best2[ii] == j) rescan_row(ii);
        }
      }
    }
    if (basis_size() != m_ + n_ - 1) {
      throw NumericError("solve_transport: internal: initial basis has " +
                         std::to_string(basis_size()) + " cells, expected " +
                         std::to_string(m_ + n_ - 1));
    }
  }

  void build_initial_northwest() {
    std::vector<double> rs = supply_, rd = demand_;
    int i = 0, j = 0;
    while (i < m_ && j < n_) {
      const bool last = (i == m_ - 1 && j == n_ - 1);
      const double flow = last ? rs[i] : std::min(rs[i], rd[j]);
      add_basic(i, j, flow);
      rs[i] -= flow;
      rd[j] -= flow;
      if (last) break;
      if (rs[i] <= 0.0 && i < m_ - 1) {
        ++i;
      } else {
        ++j;
      }
    }
    if (basis_size() != m_ + n_ - 1) {
      throw NumericError("solve_transport: internal: northwest basis incomplete");
    }
  }

  // A banned cell can enter the greedy basis only as a degenerate edge (its
  // residual marginal is zero by construction of the fixed-cell reduction).
  // Its sentinel cost would wreck the dual potentials, so swap each one for
  // an allowed zero-flow cell across the same tree cut.
  void repair_banned_basis() {
    const double flow_tol = 1e-9 * std::max(1.0, std::accumulate(supply_.begin(), supply_.end(), 0.0));
    for (int s = 0; s < basis_size(); ++s) {
      if (!banned_[static_cast<std::size_t>(cell_row_[s]) * n_ + cell_col_[s]]) continue;
      if (cell_flow_[s] > flow_tol) {
        throw NumericError("solve_transport: internal: excluded cell carries flow in the basis");
      }
      // Side A = nodes reachable from the cell's row without crossing s.
      const int nodes = m_ + n_;
      std::vector<std::vector<int>> adj(nodes);
      for (int t = 0; t < basis_size(); ++t) {
        if (t == s) continue;
        adj[cell_row_[t]].push_back(t);
        adj[m_ + cell_col_[t]].push_back(t);
      }
      std::vector<char> side(nodes, 0);
      std::vector<int> queue{cell_row_[s]};
      side[cell_row_[s]] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const int node = queue[head];
        for (int t : adj[node]) {
          const int other = (node < m_) ? m_ + cell_col_[t] : cell_row_[t];
          if (!side[other]) {
            side[other] = 1;
            queue.push_back(other);
          }
        }
      }
      int found = -1;
      for (int i = 0; i < m_ && found < 0; ++i) {
        for (int j = 0; j < n_; ++j) {
          if (banned_[static_cast<std::size_t>(i) * n_ + j]) continue;
          if (side[i] != side[m_ + j]) {
            found = 1;
            cell_row_[s] = i;
            cell_col_[s] = j;
            cell_flow_[s] = 0.0;
            break;
          }
        }
      }
      if (found < 0) {
        throw NumericError("solve_transport: internal: no allowed cell can replace an excluded one");
      }
    }
  }

  // ---- tree and duals -----------------------------------------------------

  void rebuild_tree() {
    const int nodes = m_ + n_;
    if (adj_.size() != static_cast<std::size_t>(nodes)) adj_.resize(nodes);
    for (auto& list : adj_) list.clear();
    for (int s = 0; s < basis_size(); ++s) {
      adj_[cell_row_[s]].push_back(s);
      adj_[m_ + cell_col_[s]].push_back(s);
    }
    parent_node_.assign(nodes, -1);
    parent_cell_.assign(nodes, -1);
    u_.assign(m_, 0.0);
    v_.assign(n_, 0.0);
    bfs_queue_.clear();
    bfs_queue_.push_back(0);
    seen_.assign(nodes, 0);
    auto& seen = seen_;
    seen[0] = 1;
    for (std::size_t head = 0; head < bfs_queue_.size(); ++head) {
      const int node = bfs_queue_[head];
      for (int s : adj_[node]) {
        const int other = (node < m_) ? m_ + cell_col_[s] : cell_row_[s];
        if (seen[other]) continue;
        seen[other] = 1;
        parent_node_[other] = node;
        parent_cell_[other] = s;
        if (other >= m_) {
          v_[other - m_] = cost_at(cell_row_[s], cell_col_[s]) - u_[cell_row_[s]];
        } else {
          u_[other] = cost_at(cell_row_[s], cell_col_[s]) - v_[cell_col_[s]];
        }
        bfs_queue_.push_back(other);
      }
    }
    if (static_cast<int>(bfs_queue_.size()) != nodes) {
      throw NumericError("solve_transport: internal: basis is not a spanning tree");
    }
  }

  // ---- pricing ------------------------------------------------------------

  struct Candidate {
    int i, j;
  };

  double reduced_cost(int i, int j) const { return cost_at(i, j) - u_[i] - v_[j]; }

  void refill_candidates() {
    candidates_.clear();
    // Keep the kMaxCandidates most negative cells; full (rc, i, j) ordering
    // makes the selection independent of scan bookkeeping.
    struct Entry {
      double rc;
      int i, j;
      bool operator<(const Entry& o) const {
        if (rc != o.rc) return rc < o.rc;
        if (i != o.i) return i < o.i;
        return j < o.j;
      }
    };
    std::vector<Entry> heap;  // max-heap on Entry ordering, worst at front
    heap.reserve(kMaxCandidates + 1);
    // Partial pricing: rows are scanned from a rotating cursor and the scan
    // stops once enough candidates are in hand. Only an empty full wrap
    // proves optimality.
    const int min_rows = std::min(m_, std::max(16, m_ / 8));
    for (int scanned = 0; scanned < m_; ++scanned) {
      const int i = scan_cursor_;
      scan_cursor_ = (scan_cursor_ + 1) % m_;
      const double ui = u_[i];
      const double* crow = cost_.data() + static_cast<std::size_t>(i) * n_;
      for (int j = 0; j < n_; ++j) {
        const double rc = crow[j] - ui - v_[j];
        if (rc >= -entering_tol_) continue;
        Entry e{rc, i, j};
        if (heap.size() < kMaxCandidates) {
          heap.push_back(e);
          std::push_heap(heap.begin(), heap.end());
        } else if (e < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = e;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      if (static_cast<int>(heap.size()) >= static_cast<int>(kMaxCandidates) ||
          (!heap.empty() && scanned + 1 >= min_rows)) {
        break;
      }
    }
    for (const Entry& e : heap) candidates_.push_back({e.i, e.j});
  }

  bool candidate_entering(int* out_i, int* out_j) {
    double best_rc = -entering_tol_;
    int best_i = -1, best_j = -1;
    std::size_t keep = 0;
    for (std::size_t t = 0; t < candidates_.size(); ++t) {
      const Candidate c = candidates_[t];
      const double rc = reduced_cost(c.i, c.j);
      if (rc >= -entering_tol_) continue;  // stale, drop
      candidates_[keep++] = c;
      if (rc < best_rc || (rc == best_rc && (c.i < best_i || (c.i == best_i && c.j < best_j)))) {
        best_rc = rc;
        best_i = c.i;
        best_j = c.j;
      }
    }
    candidates_.resize(keep);
    if (best_i < 0) return false;
    *out_i = best_i;
    *out_j = best_j;
    return true;
  }

  bool bland_entering(int* out_i, int* out_j) const {
    for (int i = 0; i < m_; ++i) {
      const double ui = u_[i];
      const double* crow = cost_.data() + static_cast<std::size_t>(i) * n_;
      for (int j = 0; j < n_; ++j) {
        if (crow[j] - ui - v_[j] < -entering_tol_) {
          *out_i = i;
          *out_j = j;
          return true;
        }
      }
    }
    return false;
  }

  // ---- pivoting -----------------------------------------------------------

  // Returns theta (flow shifted around the cycle).
  double pivot(int enter_i, int enter_j) {
    // Tree paths from both endpoints of the entering cell up to the root.
    path_i_.clear();
    path_j_.clear();
    for (int node = enter_i; parent_node_[node] >= 0; node = parent_node_[node]) {
      path_i_.push_back(node);
    }
    path_i_.push_back(root_of(enter_i));
    for (int node = m_ + enter_j; parent_node_[node] >= 0; node = parent_node_[node]) {
      path_j_.push_back(node);
    }
    path_j_.push_back(root_of(m_ + enter_j));

    // Lowest common ancestor by marking path_i.
    ++mark_version_;
    if (mark_.size() < static_cast<std::size_t>(m_ + n_)) mark_.resize(m_ + n_, 0);
    mark_pos_.resize(m_ + n_);
    for (std::size_t t = 0; t < path_i_.size(); ++t) {
      mark_[path_i_[t]] = mark_version_;
      mark_pos_[path_i_[t]] = static_cast<int>(t);
    }
    int lca = -1;
    std::size_t lca_j = 0;
    for (std::size_t t = 0; t < path_j_.size(); ++t) {
      if (mark_[path_j_[t]] == mark_version_) {
        lca = path_j_[t];
        lca_j = t;
        break;
      }
    }
    if (lca < 0) throw NumericError("solve_transport: internal: cycle not found");
    const int lca_i = mark_pos_[lca];

    // Cycle cells in walk order: entering, then up from the column node to
    // the LCA, then down to the row node. Signs alternate starting at +.
    cycle_cells_.clear();
    cycle_signs_.clear();
    cycle_cells_.push_back(-1);  // entering placeholder
    cycle_signs_.push_back(+1);
    int sign = -1;
    for (std::size_t t = 0; t < lca_j; ++t) {
      cycle_cells_.push_back(parent_cell_[path_j_[t]]);
      cycle_signs_.push_back(sign);
      sign = -sign;
    }
    for (int t = lca_i - 1; t >= 0; --t) {
      cycle_cells_.push_back(parent_cell_[path_i_[t]]);
      cycle_signs_.push_back(sign);
      sign = -sign;
    }

    // theta = min flow over the minus cells; leaving = lexicographic lowest.
    double theta = kInf;
    int leaving_slot = -1;
    for (std::size_t t = 0; t < cycle_cells_.size(); ++t) {
      if (cycle_signs_[t] > 0) continue;
      const int s = cycle_cells_[t];
      const double f = cell_flow_[s];
      if (f < theta ||
          (f == theta && (cell_row_[s] < cell_row_[leaving_slot] ||
                          (cell_row_[s] == cell_row_[leaving_slot] &&
                           cell_col_[s] < cell_col_[leaving_slot])))) {
        theta = f;
        leaving_slot = s;
      }
    }
    if (leaving_slot < 0) {
      throw NumericError("solve_transport: internal: unbounded pivot");
    }

    for (std::size_t t = 1; t < cycle_cells_.size(); ++t) {
      cell_flow_[cycle_cells_[t]] += cycle_signs_[t] * theta;
    }
    cell_flow_[leaving_slot] = 0.0;

    // The entering cell takes over the leaving cell's slot.
    cell_row_[leaving_slot] = enter_i;
    cell_col_[leaving_slot] = enter_j;
    cell_flow_[leaving_slot] = theta;
    rebuild_tree();
    return theta;
  }

  int root_of(int node) const {
    while (parent_node_[node] >= 0) node = parent_node_[node];
    return node;
  }

  static constexpr std::size_t kMaxCandidates = 64;

  int m_, n_;
  std::vector<double> cost_;
  std::vector<double> supply_, demand_;
  std::vector<char> banned_;
  SolveOptions options_;
  double cost_scale_ = 1.0;
  double entering_tol_ = 1e-12;

  std::vector<int> cell_row_, cell_col_;
  std::vector<double> cell_flow_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> parent_node_, parent_cell_;
  std::vector<double> u_, v_;
  std::vector<int> bfs_queue_;
  std::vector<char> seen_;
  std::vector<Candidate> candidates_;
  int scan_cursor_ = 0;
  std::vector<int> path_i_, path_j_;
  std::vector<int> cycle_cells_, cycle_signs_;
  std::vector<int> mark_, mark_pos_;
  int mark_version_ = 0;
  long pivots_ = 0;
};

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int x, int y) { parent[find(x)] = find(y); }
};

}  // namespace

TransportPlan solve_transport_raw(const Eigen::MatrixXd& cost, const Eigen::VectorXd& supply,
                                  const Eigen::VectorXd& demand,
                                  const std::vector<std::pair<int, int>>& fixed_pairs,
                                  const SolveOptions& options) {
  const int m = static_cast<int>(supply.size());
  const int n = static_cast<int>(demand.size());
  if (cost.rows() != m || cost.cols() != n) {
    throw ConfigError("solve_transport: cost matrix must be n1 x n2");
  }
  if ((supply.array() <= 0.0).any() || (demand.array() <= 0.0).any()) {
    throw ConfigError("solve_transport: marginals must be strictly positive");
  }
  if (!cost.allFinite()) throw ConfigError("solve_transport: costs must be finite");

  const double sum1 = supply.sum();
  const double sum2 = demand.sum();
  if (std::abs(sum1 - sum2) > options.balance_tol * std::max(sum1, sum2)) {
    throw NumericError(
        "solve_transport: marginal sums disagree beyond tolerance; harmonize the weights first");
  }

  // Exact balance: spread the (tiny) mismatch proportionally over demand.
  std::vector<double> a(supply.data(), supply.data() + m);
  std::vector<double> b(n);
  const double rescale = sum1 / sum2;
  for (int j = 0; j < n; ++j) b[j] = demand(j) * rescale;

  // Fixed overlap cells: assign min(w1, w2), subtract from both marginals,
  // and exclude the cell from further routing so it carries exactly that.
  std::vector<char> banned(static_cast<std::size_t>(m) * n, 0);
  std::vector<PlanEntry> fixed;
  std::vector<char> row_fixed(m, 0), col_fixed(n, 0);
  for (const auto& [k, l] : fixed_pairs) {
    if (k < 0 || k >= m || l < 0 || l >= n) throw ConfigError("solve_transport: fixed cell out of range");
    if (row_fixed[k] || col_fixed[l]) {
      throw ConfigError("solve_transport: a unit may appear in at most one fixed cell");
    }
    row_fixed[k] = col_fixed[l] = 1;
    const double f = std::min(a[k], b[l]);
    fixed.push_back({k, l, f});
    a[k] = std::max(0.0, a[k] - f);
    b[l] = std::max(0.0, b[l] - f);
    banned[static_cast<std::size_t>(k) * n + l] = 1;
  }

  TransportPlan plan;
  plan.n1 = m;
  plan.n2 = n;
  plan.fixed = fixed;
  plan.row_potential = Eigen::VectorXd::Zero(m);
  plan.col_potential = Eigen::VectorXd::Zero(n);
  const double flow_scale = std::max(sum1, 1.0);

  // Fixed cells can disconnect the allowed bipartite graph (for example a
  // 2x2 problem with both diagonal cells fixed). Each allowed component is
  // internally balanced, so solve them independently.
  Dsu dsu(m + n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!banned[static_cast<std::size_t>(i) * n + j]) dsu.unite(i, m + j);
    }
  }
  std::vector<int> comp_root;
  for (int node = 0; node < m + n; ++node) {
    const int root = dsu.find(node);
    if (std::find(comp_root.begin(), comp_root.end(), root) == comp_root.end()) {
      comp_root.push_back(root);
    }
  }

  for (int root : comp_root) {
    std::vector<int> rows, cols;
    for (int i = 0; i < m; ++i) {
      if (dsu.find(i) == root) rows.push_back(i);
    }
    for (int j = 0; j < n; ++j) {
      if (dsu.find(m + j) == root) cols.push_back(j);
    }
    double mass_a = 0.0, mass_b = 0.0;
    for (int i : rows) mass_a += a[i];
    for (int j : cols) mass_b += b[j];
    if (rows.empty() || cols.empty()) {
      // isolated node: nothing may route through it
      if (mass_a + mass_b > 1e-9 * flow_scale) {
        throw NumericError("solve_transport: residual mass is cut off by the fixed cells");
      }
      continue;
    }
    if (std::abs(mass_a - mass_b) > options.balance_tol * std::max(flow_scale, mass_a)) {
      throw NumericError("solve_transport: fixed cells leave unbalanced residual components");
    }

    const int cm = static_cast<int>(rows.size());
    const int cn = static_cast<int>(cols.size());
    Eigen::MatrixXd sub_cost(cm, cn);
    std::vector<char> sub_banned(static_cast<std::size_t>(cm) * cn, 0);
    std::vector<double> sub_a(cm), sub_b(cn);
    for (int i = 0; i < cm; ++i) {
      sub_a[i] = a[rows[i]];
      for (int j = 0; j < cn; ++j) {
        sub_cost(i, j) = cost(rows[i], cols[j]);
        sub_banned[static_cast<std::size_t>(i) * cn + j] =
            banned[static_cast<std::size_t>(rows[i]) * n + cols[j]];
      }
    }
    for (int j = 0; j < cn; ++j) sub_b[j] = b[cols[j]];
    if (mass_b > 0.0) {
      const double fix = mass_a / mass_b;
      for (double& x : sub_b) x *= fix;
    }

    TransportSimplex simplex(sub_cost, sub_a, sub_b, sub_banned, options);
    simplex.solve();
    plan.pivots += simplex.pivots();
    for (int i = 0; i < cm; ++i) plan.row_potential(rows[i]) = simplex.u()[i];
    for (int j = 0; j < cn; ++j) plan.col_potential(cols[j]) = simplex.v()[j];
    for (int s = 0; s < simplex.basis_size(); ++s) {
      const double f = simplex.cell_flow(s);
      if (f <= 0.0) continue;
      const int i = rows[simplex.cell_row(s)];
      const int j = cols[simplex.cell_col(s)];
      if (banned[static_cast<std::size_t>(i) * n + j]) {
        if (f > 1e-12 * flow_scale) {
          throw NumericError("solve_transport: internal: flow forced onto an excluded cell");
        }
        continue;
      }
      plan.entries.push_back({i, j, f});
    }
  }

  plan.entries.insert(plan.entries.end(), fixed.begin(), fixed.end());
  std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& x, const PlanEntry& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });

  double objective = 0.0;
  for (const auto& e : plan.entries) objective += e.weight * cost(e.row, e.col);
  plan.objective = objective;
  return plan;
}

TransportPlan solve_transport(const CostMatrix& cost, const HarmonizedPair& pair,
                              const OverlapInfo& overlap, const SolveOptions& options) {
  return solve_transport_raw(cost.values, pair.w1, pair.w2, overlap.pairs, options);
}

PlanCertificate verify_plan(const TransportPlan& plan, const CostMatrix& cost,
                            const Eigen::VectorXd& w1, const Eigen::VectorXd& w2,
                            const OverlapInfo& overlap) {
  PlanCertificate cert;
  const int m = static_cast<int>(w1.size());
  const int n = static_cast<int>(w2.size());
  if (cost.values.rows() != m || cost.values.cols() != n || plan.n1 != m || plan.n2 != n) {
    throw ConfigError("verify_plan: dimensions disagree");
  }
  const double cost_scale = std::max(1.0, cost.values.cwiseAbs().maxCoeff());
  const double rc_tol = 1e-9 * cost_scale;

  auto fail = [&cert](const std::string& why) {
    if (cert.failure.empty()) cert.failure = why;
  };

  // Marginals and nonnegativity.
  Eigen::VectorXd row_sum = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(n);
  cert.min_entry = plan.entries.empty() ? 0.0 : kInf;
  for (const auto& e : plan.entries) {
    if (e.row < 0 || e.row >= m || e.col < 0 || e.col >= n) {
      throw ConfigError("verify_plan: entry out of range");
    }
    row_sum(e.row) += e.weight;
    col_sum(e.col) += e.weight;
    cert.min_entry = std::min(cert.min_entry, e.weight);
  }
  if (cert.min_entry < 0.0) fail("negative matching weight");
  for (int i = 0; i < m; ++i) {
    cert.max_row_violation =
        std::max(cert.max_row_violation, std::abs(row_sum(i) - w1(i)) / w1(i));
  }
  for (int j = 0; j < n; ++j) {
    cert.max_col_violation =
        std::max(cert.max_col_violation, std::abs(col_sum(j) - w2(j)) / w2(j));
  }
  if (cert.max_row_violation > 1e-9) fail("row marginal violated");
  if (cert.max_col_violation > 1e-9) fail("column marginal violated");

  // Fixed overlap cells carry exactly min(w1, w2).
  std::unordered_map<long long, double> entry_at;
  entry_at.reserve(plan.entries.size());
  for (const auto& e : plan.entries) {
    entry_at[static_cast<long long>(e.row) * n + e.col] = e.weight;
  }
  std::vector<char> is_fixed(static_cast<std::size_t>(m) * n, 0);
  for (const auto& [k, l] : overlap.pairs) {
    is_fixed[static_cast<std::size_t>(k) * n + l] = 1;
    const double want = std::min(w1(k), w2(l));
    const auto it = entry_at.find(static_cast<long long>(k) * n + l);
    const double got = it == entry_at.end() ? 0.0 : it->second;
    cert.max_fixed_violation =
        std::max(cert.max_fixed_violation, std::abs(got - want) / std::max(1.0, want));
  }
  if (cert.max_fixed_violation > 1e-9) fail("fixed overlap cell deviates from min(w1, w2)");

  // Optimality certificate for the reduced problem: rebuild potentials from
  // the free support, then close cross-component freedom with a
  // difference-constraint pass (Bellman-Ford).
  std::vector<PlanEntry> support;
  for (const auto& e : plan.entries) {
    if (!is_fixed[static_cast<std::size_t>(e.row) * n + e.col]) support.push_back(e);
  }

  const int nodes = m + n;
  Dsu dsu(nodes);
  for (const auto& e : support) dsu.unite(e.row, m + e.col);
  std::vector<int> comp_of(nodes);
  std::vector<int> comp_ids;
  for (int x = 0; x < nodes; ++x) {
    const int root = dsu.find(x);
    auto it = std::find(comp_ids.begin(), comp_ids.end(), root);
    if (it == comp_ids.end()) {
      comp_of[x] = static_cast<int>(comp_ids.size());
      comp_ids.push_back(root);
    } else {
      comp_of[x] = static_cast<int>(it - comp_ids.begin());
    }
  }
  const int num_comp = static_cast<int>(comp_ids.size());

  // Per-component potentials via BFS over the support forest.
  std::vector<std::vector<std::pair<int, const PlanEntry*>>> adj(nodes);
  for (const auto& e : support) {
    adj[e.row].push_back({m + e.col, &e});
    adj[m + e.col].push_back({e.row, &e});
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  std::vector<char> seen(nodes, 0);
  std::vector<int> queue;
  for (int start = 0; start < nodes; ++start) {
    if (seen[start]) continue;
    seen[start] = 1;
    queue.clear();
    queue.push_back(start);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const int node = queue[head];
      for (const auto& [other, e] : adj[node]) {
        if (seen[other]) continue;
        seen[other] = 1;
        if (other >= m) {
          v(other - m) = cost.values(e->row, e->col) - u(e->row);
        } else {
          u(other) = cost.values(e->row, e->col) - v(e->col);
        }
        queue.push_back(other);
      }
    }
  }
  // Support consistency (covers cycles in the support as well).
  for (const auto& e : support) {
    cert.max_support_residual = std::max(
        cert.max_support_residual, std::abs(cost.values(e.row, e.col) - u(e.row) - v(e.col)));
  }
  if (cert.max_support_residual > rc_tol) fail("support cell with nonzero reduced cost");

  // Cross-component offsets: delta_A - delta_B <= min rc over cells from
  // rows of A to columns of B.
  std::vector<double> min_cross(static_cast<std::size_t>(num_comp) * num_comp, kInf);
  for (int i = 0; i < m; ++i) {
    const int ca = comp_of[i];
    for (int j = 0; j < n; ++j) {
      if (is_fixed[static_cast<std::size_t>(i) * n + j]) continue;
      const int cb = comp_of[m + j];
      if (ca == cb) continue;
      const double rc = cost.values(i, j) - u(i) - v(j);
      double& slot = min_cross[static_cast<std::size_t>(ca) * num_comp + cb];
      slot = std::min(slot, rc);
    }
  }
  std::vector<double> delta(num_comp, 0.0);
  const double bf_slack = 1e-12 * cost_scale;
  bool infeasible = false;
  for (int round = 0; round < num_comp && !infeasible; ++round) {
    bool changed = false;
    for (int ca = 0; ca < num_comp; ++ca) {
      for (int cb = 0; cb < num_comp; ++cb) {
        const double w = min_cross[static_cast<std::size_t>(ca) * num_comp + cb];
        if (w == kInf) continue;
        if (delta[ca] > delta[cb] + w + bf_slack) {
          delta[ca] = delta[cb] + w;
          changed = true;
          if (round == num_comp - 1) infeasible = true;
        }
      }
    }
    if (!changed) break;
  }
  if (infeasible) fail("no dual potentials certify the support (plan not optimal)");

  // Final reduced-cost sweep and duality gap.
  double min_rc = 0.0;
  for (int i = 0; i < m; ++i) {
    const double ui = u(i) + delta[comp_of[i]];
    for (int j = 0; j < n; ++j) {
      if (is_fixed[static_cast<std::size_t>(i) * n + j]) continue;
      const double rc = cost.values(i, j) - ui - (v(j) - delta[comp_of[m + j]]);
      min_rc = std::min(min_rc, rc);
    }
  }
  cert.min_reduced_cost = min_rc;
  if (min_rc < -rc_tol) fail("negative reduced cost: plan not optimal");

  double primal_free = 0.0;
  for (const auto& e : support) primal_free += e.weight * cost.values(e.row, e.col);
  Eigen::VectorXd a = w1, b = w2;
  for (const auto& [k, l] : overlap.pairs) {
    const double f = std::min(w1(k), w2(l));
    a(k) -= f;
    b(l) -= f;
  }
  double dual_free = 0.0;
  for (int i = 0; i < m; ++i) dual_free += a(i) * (u(i) + delta[comp_of[i]]);
  for (int j = 0; j < n; ++j) dual_free += b(j) * (v(j) - delta[comp_of[m + j]]);
  cert.duality_gap = std::abs(primal_free - dual_free) / std::max(1.0, std::abs(primal_free));
  if (cert.duality_gap > 1e-9) fail("duality gap exceeds tolerance");

  cert.pass = cert.failure.empty();
  return cert;
}

void save_plan(const TransportPlan& plan, const SampleFrame& recipient,
               const SampleFrame& donor, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(plan.entries.size());
  for (const auto& e : plan.entries) {
    rows.push_back({recipient.ids[e.row], donor.ids[e.col], format_double(e.weight)});
  }
  write_csv(path, {"recipient_id", "donor_id", "weight"}, rows);
}

TransportPlan load_plan(const std::string& path, const SampleFrame& recipient,
                        const SampleFrame& donor, const OverlapInfo& overlap) {
  CsvTable table = read_csv(path);
  const int rid = table.column("recipient_id");
  const int did = table.column("donor_id");
  const int wcol = table.column("weight");
  if (rid < 0 || did < 0 || wcol < 0) {
    throw ConfigError(path + ": plan file needs recipient_id,donor_id,weight columns");
  }
  std::unordered_map<std::string, int> rpos, dpos;
  for (int k = 0; k < recipient.n(); ++k) rpos[recipient.ids[k]] = k;
  for (int l = 0; l < donor.n(); ++l) dpos[donor.ids[l]] = l;

  TransportPlan plan;
  plan.n1 = recipient.n();
  plan.n2 = donor.n();
  std::unordered_map<long long, bool> seen_cell;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto ri = rpos.find(trim(row[rid]));
    const auto di = dpos.find(trim(row[did]));
    if (ri == rpos.end()) {
      throw DataError(path + ": row " + std::to_string(r + 1) + ": unknown recipient id '" +
                      row[rid] + "'");
    }
    if (di == dpos.end()) {
      throw DataError(path + ": row " + std::to_string(r + 1) + ": unknown donor id '" +
                      row[did] + "'");
    }
    const auto w = parse_double(row[wcol]);
    if (!w || !(*w > 0.0)) {
      throw DataError(path + ": row " + std::to_string(r + 1) + ": weight must be > 0");
    }
    const long long key = static_cast<long long>(ri->second) * plan.n2 + di->second;
    if (seen_cell.count(key)) {
      throw DataError(path + ": row " + std::to_string(r + 1) + ": duplicate cell");
    }
    seen_cell[key] = true;
    plan.entries.push_back({ri->second, di->second, *w});
  }
  std::sort(plan.entries.begin(), plan.entries.end(), [](const PlanEntry& x, const PlanEntry& y) {
    return x.row != y.row ? x.row < y.row : x.col < y.col;
  });
  for (const auto& [k, l] : overlap.pairs) {
    const long long key = static_cast<long long>(k) * plan.n2 + l;
    const auto it = seen_cell.find(key);
    if (it != seen_cell.end()) {
      for (const auto& e : plan.entries) {
        if (e.row == k && e.col == l) {
          plan.fixed.push_back(e);
          break;
        }
      }
    }
  }
  return plan;
}

}  // namespace statfuse
