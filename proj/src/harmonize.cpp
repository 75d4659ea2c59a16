#include "statfuse/harmonize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "statfuse/errors.hpp"

namespace statfuse {

double alpha_star(int n1, int n2, int n12, bool* degenerate) {
  if (n1 < 1 || n2 < 1) throw ConfigError("alpha_star: sample sizes must be >= 1");
  if (n12 < 0 || n12 > std::min(n1, n2)) {
    throw ConfigError("alpha_star: overlap size out of range");
  }
  if (degenerate) *degenerate = false;
  const int denom = n1 + n2 - 2 * n12;
  if (denom == 0) {
    // S1 = S2 = overlap: any mix gives the same totals only if v1 = v2,
    // which is not guaranteed, so the caller is told.
    if (degenerate) *degenerate = true;
    return 0.5;
  }
  return static_cast<double>(n1 - n12) / static_cast<double>(denom);
}

double alpha_opt(double var1, double var2, double cov12) {
  if (var1 <= 0.0 || var2 <= 0.0) throw ConfigError("alpha_opt: variances must be positive");
  const double denom = var1 + var2 - cov12;
  if (denom == 0.0) throw NumericError("alpha_opt: zero denominator");
  double alpha = (var2 - cov12) / denom;
  return std::clamp(alpha, 0.0, 1.0);
}

CompositeTotals composite_totals(const SampleFrame& recipient, const SampleFrame& donor,
                                 double alpha) {
  if (recipient.p() != donor.p()) throw ConfigError("composite_totals: x dimension mismatch");
  CompositeTotals totals;
  totals.x_hat_star = alpha * (recipient.x.transpose() * recipient.weights) +
                      (1.0 - alpha) * (donor.x.transpose() * donor.weights);
  totals.n_hat_star = alpha * recipient.weights.sum() + (1.0 - alpha) * donor.weights.sum();
  return totals;
}

namespace {

double max_rel_residual(const Eigen::VectorXd& residual, const Eigen::VectorXd& targets) {
  double worst = 0.0;
  for (int j = 0; j < residual.size(); ++j) {
    worst = std::max(worst, std::abs(residual(j)) / std::max(1.0, std::abs(targets(j))));
  }
  return worst;
}

// Dual objective; +inf signals exp overflow so the line search backs off.
double dual_objective(const Eigen::VectorXd& v, const Eigen::MatrixXd& a,
                      const Eigen::VectorXd& targets, const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd exponent = a * lambda;
  double total = 0.0;
  for (int k = 0; k < v.size(); ++k) {
    if (exponent(k) > 700.0) return std::numeric_limits<double>::infinity();
    total += v(k) * std::exp(exponent(k));
  }
  return total - targets.dot(lambda);
}

// Greedy maximal independent column set (modified Gram-Schmidt with one
// re-orthogonalization pass). Keeps the earliest independent columns, so a
// duplicated constraint is dropped at its second appearance.
std::vector<int> independent_columns(const Eigen::MatrixXd& m, double rel_threshold) {
  std::vector<int> kept;
  std::vector<Eigen::VectorXd> basis;
  for (int j = 0; j < m.cols(); ++j) {
    Eigen::VectorXd u = m.col(j);
    const double original_norm = u.norm();
    for (const auto& b : basis) u -= b.dot(u) * b;
    for (const auto& b : basis) u -= b.dot(u) * b;
    if (u.norm() > rel_threshold * std::max(original_norm, 1.0)) {
      basis.push_back(u.normalized());
      kept.push_back(j);
    }
  }
  return kept;
}

}  // namespace

Eigen::VectorXd kl_calibrate(const Eigen::VectorXd& v, const Eigen::MatrixXd& design,
                             const Eigen::VectorXd& targets, const KlOptions& options,
                             KlReport* report) {
  const int n = static_cast<int>(v.size());
  if (design.rows() != n) throw ConfigError("kl_calibrate: design rows must match weights");
  if (design.cols() != targets.size()) {
    throw ConfigError("kl_calibrate: one target per design column required");
  }
  if ((v.array() <= 0.0).any()) throw ConfigError("kl_calibrate: initial weights must be > 0");
  if (!targets.allFinite()) throw ConfigError("kl_calibrate: targets must be finite");

  KlReport local;
  KlReport& rep = report ? *report : local;
  rep = KlReport{};

  // Collinear columns make the Newton system singular; keep a maximal
  // independent set and drop the rest together with their targets.
  const std::vector<int> kept = independent_columns(design, options.pivot_threshold);
  Eigen::MatrixXd a;
  Eigen::VectorXd t;
  if (static_cast<int>(kept.size()) < design.cols()) {
    std::vector<bool> is_kept(design.cols(), false);
    for (int j : kept) is_kept[j] = true;
    for (int j = 0; j < design.cols(); ++j) {
      if (!is_kept[j]) rep.dropped_columns.push_back(j);
    }
    a.resize(n, static_cast<int>(kept.size()));
    t.resize(static_cast<int>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
      a.col(static_cast<int>(j)) = design.col(kept[j]);
      t(static_cast<int>(j)) = targets(kept[j]);
    }
  } else {
    a = design;
    t = targets;
  }
  const int m = static_cast<int>(a.cols());

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd w = v;
  Eigen::VectorXd residual = a.transpose() * w - t;
  double phi = dual_objective(v, a, t, lambda);
  rep.objective_trace.push_back(phi);
  rep.max_rel_residual = max_rel_residual(residual, t);
  if (rep.max_rel_residual <= options.polish_tolerance) {
    return w;  // already calibrated, zero iterations beyond the residual check
  }

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::MatrixXd hessian = a.transpose() * w.asDiagonal() * a;

    // Step halving on the dual. Near the solution the dual improvement sinks
    // below float resolution, so a step that halves the residual is also
    // accepted (Newton is quadratically contracting there). If the plain
    // Newton direction fails (ill-conditioned Hessian when a few weights
    // dominate), retry with increasing Levenberg damping, which bends the
    // step toward steepest descent.
    Eigen::VectorXd candidate;
    double phi_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    const double diag_scale = hessian.trace() / m;
    for (int damping = 0; damping < 8 && !accepted; ++damping) {
      Eigen::MatrixXd damped = hessian;
      if (damping > 0) {
        const double mu = diag_scale * std::pow(10.0, damping - 9.0);
        damped += mu * Eigen::MatrixXd::Identity(m, m);
      }
      const Eigen::VectorXd step = damped.ldlt().solve(-residual);
      if (!step.allFinite()) continue;
      double scale = 1.0;
      for (int halving = 0; halving < 40; ++halving) {
        candidate = lambda + scale * step;
        phi_new = dual_objective(v, a, t, candidate);
        if (phi_new < phi) {
          accepted = true;
          break;
        }
        if (std::isfinite(phi_new)) {
          const Eigen::VectorXd w_cand = v.array() * (a * candidate).array().exp();
          const double resid_cand = max_rel_residual(a.transpose() * w_cand - t, t);
          if (resid_cand <= 0.5 * rep.max_rel_residual) {
            accepted = true;
            break;
          }
        }
        scale *= 0.5;
      }
    }
    if (!accepted) {
      throw NumericError(
          "kl_calibrate: no descent step at relative residual " +
          std::to_string(rep.max_rel_residual) +
          "; the targets may be unattainable from these units (weights must stay positive)");
    }

    lambda = candidate;
    phi = std::min(phi, phi_new);
    w = v.array() * (a * lambda).array().exp();
    residual = a.transpose() * w - t;
    const double previous = rep.max_rel_residual;
    rep.iterations = iter;
    rep.objective_trace.push_back(phi_new);
    rep.max_rel_residual = max_rel_residual(residual, t);
    if (rep.max_rel_residual <= options.polish_tolerance) return w;
    // contract met and the quadratic phase has run out of float headroom
    if (rep.max_rel_residual <= options.tolerance &&
        rep.max_rel_residual > 0.25 * previous) {
      return w;
    }
  }

  if (rep.max_rel_residual <= options.tolerance) return w;
  throw NumericError("kl_calibrate: no convergence after " +
                     std::to_string(options.max_iterations) +
                     " iterations, worst relative residual " +
                     std::to_string(rep.max_rel_residual));
}

namespace {

Eigen::MatrixXd augmented_design(const SampleFrame& frame) {
  Eigen::MatrixXd design(frame.n(), frame.p() + 1);
  design.leftCols(frame.p()) = frame.x;
  design.col(frame.p()).setOnes();
  return design;
}

}  // namespace

HarmonizedPair harmonize_pair(const SampleFrame& recipient, const SampleFrame& donor,
                              const OverlapInfo& overlap, const KlOptions& options) {
  HarmonizedPair pair;
  pair.alpha = alpha_star(recipient.n(), donor.n(), overlap.n12(), &pair.alpha_degenerate);
  CompositeTotals totals = composite_totals(recipient, donor, pair.alpha);
  pair.x_hat_star = totals.x_hat_star;
  pair.n_hat_star = totals.n_hat_star;

  Eigen::VectorXd targets(recipient.p() + 1);
  targets.head(recipient.p()) = totals.x_hat_star;
  targets(recipient.p()) = totals.n_hat_star;

  KlReport r1, r2;
  pair.w1 = kl_calibrate(recipient.weights, augmented_design(recipient), targets, options, &r1);
  pair.w2 = kl_calibrate(donor.weights, augmented_design(donor), targets, options, &r2);
  pair.recipient_report = {r1.iterations, r1.max_rel_residual, r1.dropped_columns};
  pair.donor_report = {r2.iterations, r2.max_rel_residual, r2.dropped_columns};
  return pair;
}

}  // namespace statfuse
