#include "statfuse/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "statfuse/distance.hpp"
#include "statfuse/errors.hpp"

namespace statfuse {

std::string representation_name(Representation rep) {
  switch (rep) {
    case Representation::kPairwise: return "pairwise";
    case Representation::kPredictedS1: return "pred-s1";
    case Representation::kImputedS1: return "imp-s1";
    case Representation::kPredictedS2: return "pred-s2";
    case Representation::kImputedS2: return "imp-s2";
  }
  return "?";
}

Prediction predict(const TransportPlan& plan, const HarmonizedPair& pair,
                   const SampleFrame& recipient, const SampleFrame& donor,
                   ImputeDirection direction) {
  Prediction out;
  if (direction == ImputeDirection::kS1) {
    out.x_hat = Eigen::MatrixXd::Zero(plan.n1, donor.p());
    out.vars_hat = Eigen::MatrixXd::Zero(plan.n1, donor.extra_dim());
    for (const auto& e : plan.entries) {
      const double share = e.weight / pair.w1(e.row);
      out.x_hat.row(e.row) += share * donor.x.row(e.col);
      if (donor.extra_dim() > 0) out.vars_hat.row(e.row) += share * donor.extra.row(e.col);
    }
  } else {
    out.x_hat = Eigen::MatrixXd::Zero(plan.n2, recipient.p());
    out.vars_hat = Eigen::MatrixXd::Zero(plan.n2, recipient.extra_dim());
    for (const auto& e : plan.entries) {
      const double share = e.weight / pair.w2(e.col);
      out.x_hat.row(e.col) += share * recipient.x.row(e.row);
      if (recipient.extra_dim() > 0) out.vars_hat.row(e.col) += share * recipient.extra.row(e.row);
    }
  }
  return out;
}

FusedFile build_fused(Representation rep, const TransportPlan& plan, const HarmonizedPair& pair,
                      const SampleFrame& recipient, const SampleFrame& donor) {
  FusedFile fused;
  fused.representation = rep;
  fused.n_hat_star = pair.n_hat_star;
  switch (rep) {
    case Representation::kPairwise: {
      const std::size_t rows = plan.entries.size();
      fused.x.resize(rows, recipient.p());
      fused.x_match.resize(rows, donor.p());
      fused.y.resize(rows, recipient.extra_dim());
      fused.z.resize(rows, donor.extra_dim());
      fused.weights.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const PlanEntry& e = plan.entries[r];
        fused.ids.push_back(recipient.ids[e.row]);
        fused.match_ids.push_back(donor.ids[e.col]);
        fused.x.row(r) = recipient.x.row(e.row);
        fused.x_match.row(r) = donor.x.row(e.col);
        fused.y.row(r) = recipient.extra.row(e.row);
        fused.z.row(r) = donor.extra.row(e.col);
        fused.weights(r) = e.weight;
      }
      break;
    }
    case Representation::kPredictedS1: {
      Prediction pred = predict(plan, pair, recipient, donor, ImputeDirection::kS1);
      fused.ids = recipient.ids;
      fused.x = recipient.x;
      fused.x_match = pred.x_hat;
      fused.y = recipient.extra;
      fused.z = pred.vars_hat;
      fused.weights = pair.w1;
      break;
    }
    case Representation::kPredictedS2: {
      Prediction pred = predict(plan, pair, recipient, donor, ImputeDirection::kS2);
      fused.ids = donor.ids;
      fused.x = donor.x;
      fused.x_match = pred.x_hat;
      fused.y = pred.vars_hat;
      fused.z = donor.extra;
      fused.weights = pair.w2;
      break;
    }
    default:
      throw ConfigError("build_fused: imputed representations need a seed; use build_imputed_fused");
  }
  return fused;
}

FusedFile build_imputed_fused(Representation rep, const TransportPlan& plan,
                              const HarmonizedPair& pair, const SampleFrame& recipient,
                              const SampleFrame& donor, std::uint64_t seed) {
  if (rep != Representation::kImputedS1 && rep != Representation::kImputedS2) {
    return build_fused(rep, plan, pair, recipient, donor);
  }
  FusedFile fused;
  fused.representation = rep;
  fused.n_hat_star = pair.n_hat_star;
  fused.seed = seed;
  fused.seeded = true;
  const bool s1 = rep == Representation::kImputedS1;
  const ImputeDirection dir = s1 ? ImputeDirection::kS1 : ImputeDirection::kS2;
  ImputationDesign design = build_design(plan, pair, recipient, donor, dir);
  ImputationOutcome outcome = select_balanced(design, seed);
  const SampleFrame& source = s1 ? donor : recipient;
  ImputedValues values = impute_from_outcome(outcome, source);
  if (s1) {
    fused.ids = recipient.ids;
    fused.x = recipient.x;
    fused.x_match = values.x;
    fused.y = recipient.extra;
    fused.z = values.extra;
    fused.weights = pair.w1;
    for (int k = 0; k < plan.n1; ++k) fused.match_ids.push_back(donor.ids[outcome.selected[k]]);
  } else {
    fused.ids = donor.ids;
    fused.x = donor.x;
    fused.x_match = values.x;
    fused.y = values.extra;
    fused.z = donor.extra;
    fused.weights = pair.w2;
    for (int l = 0; l < plan.n2; ++l) fused.match_ids.push_back(recipient.ids[outcome.selected[l]]);
  }
  return fused;
}

Eigen::VectorXd weighted_mean(const FusedFile& fused, VariableBlock block) {
  const Eigen::MatrixXd& values = block == VariableBlock::kY ? fused.y : fused.z;
  const double total = fused.weights.sum();
  if (total <= 0.0) throw ConfigError("weighted_mean: nonpositive total weight");
  return values.transpose() * fused.weights / total;
}

namespace {

void require_one_hot(const Eigen::MatrixXd& block, const char* which) {
  for (int i = 0; i < block.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < block.cols(); ++j) {
      const double v = block(i, j);
      if (v < -1e-9 || v > 1.0 + 1e-9) {
        throw ConfigError(std::string("contingency: ") + which +
                          " block is not one-hot (entry outside [0,1]); "
                          "load the variable as categorical to one-hot encode it");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ConfigError(std::string("contingency: ") + which +
                        " block rows must sum to 1; "
                        "load the variable as categorical to one-hot encode it");
    }
  }
}

}  // namespace

JointEstimate contingency(const FusedFile& fused) {
  require_one_hot(fused.y, "y");
  require_one_hot(fused.z, "z");
  JointEstimate est;
  est.kind = JointEstimate::Kind::kContingency;
  est.representation = fused.representation;
  est.n_hat_star = fused.n_hat_star;
  est.value = fused.y.transpose() * fused.weights.asDiagonal() * fused.z;
  return est;
}

JointEstimate covariance_yz(const FusedFile& fused) {
  JointEstimate est;
  est.kind = JointEstimate::Kind::kCovariance;
  est.representation = fused.representation;
  est.n_hat_star = fused.n_hat_star;
  const Eigen::VectorXd ymean = weighted_mean(fused, VariableBlock::kY);
  const Eigen::VectorXd zmean = weighted_mean(fused, VariableBlock::kZ);
  const Eigen::MatrixXd yc = fused.y.rowwise() - ymean.transpose();
  const Eigen::MatrixXd zc = fused.z.rowwise() - zmean.transpose();
  est.value = yc.transpose() * fused.weights.asDiagonal() * zc / fused.n_hat_star;
  return est;
}

Eigen::MatrixXd renssen_beta(const SampleFrame& frame, const Eigen::VectorXd& weights,
                             bool* ridged) {
  if (weights.size() != frame.n()) throw ConfigError("renssen_beta: weight length mismatch");
  const Eigen::MatrixXd xtwx = frame.x.transpose() * weights.asDiagonal() * frame.x;
  const Eigen::MatrixXd xtwe = frame.x.transpose() * weights.asDiagonal() * frame.extra;
  if (ridged) *ridged = false;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtwx);
  lu.setThreshold(1e-10);
  if (lu.rank() == xtwx.rows()) {
    return xtwx.ldlt().solve(xtwe).transpose();
  }
  if (ridged) *ridged = true;
  const double ridge = 1e-8 * std::max(xtwx.trace() / xtwx.rows(), 1.0);
  const Eigen::MatrixXd patched =
      xtwx + ridge * Eigen::MatrixXd::Identity(xtwx.rows(), xtwx.cols());
  return patched.ldlt().solve(xtwe).transpose();
}

Eigen::MatrixXd renssen_contingency(const HarmonizedPair& pair, const SampleFrame& recipient,
                                    const SampleFrame& donor, const Eigen::MatrixXd& beta_y,
                                    const Eigen::MatrixXd& beta_z) {
  const Eigen::MatrixXd mix =
      pair.alpha * (recipient.x.transpose() * pair.w1.asDiagonal() * recipient.x) +
      (1.0 - pair.alpha) * (donor.x.transpose() * pair.w2.asDiagonal() * donor.x);
  return beta_y * mix * beta_z.transpose();
}

Eigen::MatrixXd renssen_covariance(const HarmonizedPair& pair, const SampleFrame& recipient,
                                   const SampleFrame& donor) {
  const Eigen::MatrixXd beta_y = renssen_beta(recipient, pair.w1);
  const Eigen::MatrixXd beta_z = renssen_beta(donor, pair.w2);
  const Eigen::MatrixXd omega = pooled_covariance(recipient, donor, pair);
  return beta_y * omega * beta_z.transpose();
}

QualityReport quality_diagnostic(const TransportPlan& plan, const HarmonizedPair& pair,
                                 const SampleFrame& recipient, const SampleFrame& donor,
                                 const CostMatrix& cost) {
  QualityReport report;
  const Prediction pred = predict(plan, pair, recipient, donor, ImputeDirection::kS1);
  const Eigen::MatrixXd diff = recipient.x - pred.x_hat;
  const double wsum = pair.w1.sum();
  report.rmse_per_x.resize(recipient.p());
  for (int j = 0; j < recipient.p(); ++j) {
    report.rmse_per_x(j) = std::sqrt(diff.col(j).cwiseAbs2().dot(pair.w1) / wsum);
  }

  std::vector<std::pair<double, double>> dist;  // (distance, plan weight)
  double mass = 0.0, mean = 0.0;
  for (const auto& e : plan.entries) {
    const double d = cost.values(e.row, e.col);
    dist.push_back({d, e.weight});
    mass += e.weight;
    mean += e.weight * d;
  }
  if (!dist.empty()) {
    std::sort(dist.begin(), dist.end());
    report.mean_distance = mean / mass;
    report.min_distance = dist.front().first;
    report.max_distance = dist.back().first;
    double cum = 0.0;
    for (const auto& [d, w] : dist) {
      cum += w;
      if (cum >= 0.5 * mass) {
        report.median_distance = d;
        break;
      }
    }
  }
  return report;
}

}  // namespace statfuse
