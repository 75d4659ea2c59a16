#include "statfuse/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "statfuse/balance.hpp"
#include "statfuse/csv.hpp"
#include "statfuse/distance.hpp"
#include "statfuse/errors.hpp"
#include "statfuse/estimate.hpp"
#include "statfuse/frame.hpp"
#include "statfuse/harmonize.hpp"
#include "statfuse/manifest.hpp"
#include "statfuse/sim.hpp"
#include "statfuse/transport.hpp"

namespace statfuse {

namespace {

struct FrameArgs {
  std::string recipient_path;
  std::string donor_path;
  std::string id_col = "id";
  std::vector<std::string> x_cols;
  std::vector<std::string> y_cols;
  std::vector<std::string> z_cols;
  std::string weight_col = "weight";

  SampleFrame load_recipient() const {
    return load_frame(recipient_path, {id_col, x_cols, y_cols, weight_col}, Role::kRecipient);
  }
  SampleFrame load_donor() const {
    return load_frame(donor_path, {id_col, x_cols, z_cols, weight_col}, Role::kDonor);
  }
  void record(std::vector<std::pair<std::string, std::string>>& config) const {
    config.emplace_back("recipient", recipient_path);
    config.emplace_back("donor", donor_path);
    config.emplace_back("id-col", id_col);
    config.emplace_back("x-cols", join(x_cols));
    config.emplace_back("y-cols", join(y_cols));
    config.emplace_back("z-cols", join(z_cols));
    config.emplace_back("weight-col", weight_col);
  }
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ",";
      out += items[i];
    }
    return out;
  }
};

void add_frame_options(CLI::App* cmd, FrameArgs& args, bool need_y, bool need_z) {
  cmd->add_option("--recipient", args.recipient_path, "Recipient sample CSV (S1)")->required();
  cmd->add_option("--donor", args.donor_path, "Donor sample CSV (S2)")->required();
  cmd->add_option("--id-col", args.id_col, "Unit identifier column")->capture_default_str();
  cmd->add_option("--x-cols", args.x_cols, "Matching variable columns")
      ->required()
      ->delimiter(',');
  auto* y = cmd->add_option("--y-cols", args.y_cols, "Recipient-only variable columns")
                ->delimiter(',');
  auto* z = cmd->add_option("--z-cols", args.z_cols, "Donor-only variable columns")
                ->delimiter(',');
  if (need_y) y->required();
  if (need_z) z->required();
  cmd->add_option("--weight-col", args.weight_col, "Initial weight column")
      ->capture_default_str();
}

Metric parse_metric(const std::string& name) {
  if (name == "euclidean") return Metric::kEuclidean;
  if (name == "mahalanobis") return Metric::kMahalanobis;
  throw ConfigError("unknown metric '" + name + "' (euclidean|mahalanobis)");
}

CostForm parse_cost_form(const std::string& name) {
  if (name == "d") return CostForm::kDistance;
  if (name == "d2") return CostForm::kSquaredDistance;
  throw ConfigError("unknown cost form '" + name + "' (d|d2)");
}

Representation parse_representation(const std::string& name) {
  if (name == "pairwise") return Representation::kPairwise;
  if (name == "pred-s1") return Representation::kPredictedS1;
  if (name == "imp-s1") return Representation::kImputedS1;
  if (name == "pred-s2") return Representation::kPredictedS2;
  if (name == "imp-s2") return Representation::kImputedS2;
  throw ConfigError("unknown representation '" + name +
                    "' (pairwise|pred-s1|imp-s1|pred-s2|imp-s2)");
}

// Merge `--config file` (plain key=value lines, # comments) under the
// explicit flags: a key contributes `--key value` only when the flag is not
// already present, so the command line always wins.
std::vector<std::string> merge_config_file(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file path");
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                 args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw ConfigError("cannot open config file: " + config_path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(config_path + ":" + std::to_string(line_no) +
                        ": expected key=value");
    }
    pairs.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }

  // insert after the subcommand token (first non-flag argument)
  std::size_t insert_at = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (!args[i].empty() && args[i][0] != '-') {
      insert_at = i + 1;
      break;
    }
  }
  for (const auto& [key, value] : pairs) {
    const std::string flag = "--" + key;
    bool given = false;
    for (std::size_t i = 1; i < args.size(); ++i) {
      if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) given = true;
    }
    if (given) continue;
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), {flag, value});
    insert_at += 2;
  }
  return args;
}

void emit_manifest(const std::string& subcommand,
                   std::vector<std::pair<std::string, std::string>> config,
                   const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs) {
  RunManifest manifest;
  manifest.subcommand = subcommand;
  manifest.config = std::move(config);
  for (const auto& path : inputs) manifest.inputs.push_back({path, sha256_file(path)});
  for (const auto& path : outputs) manifest.outputs.push_back({path, sha256_file(path)});
  write_manifest(manifest, outputs.front() + ".manifest.json");
}

void write_weights_csv(const std::string& path, const SampleFrame& frame,
                       const Eigen::VectorXd& weights) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(frame.n());
  for (int i = 0; i < frame.n(); ++i) {
    rows.push_back({frame.ids[i], format_double(weights(i))});
  }
  write_csv(path, {"id", "weight"}, rows);
}

nlohmann::ordered_json calibration_json(const char* which, const HarmonizedPair& pair,
                                        const CalibrationSummary& summary) {
  nlohmann::ordered_json j;
  j["frame"] = which;
  j["alpha_star"] = pair.alpha;
  j["alpha_degenerate"] = pair.alpha_degenerate;
  j["n_hat_star"] = pair.n_hat_star;
  j["iterations"] = summary.iterations;
  j["max_rel_residual"] = summary.max_rel_residual;
  j["dropped_columns"] = summary.dropped_columns;
  return j;
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_harmonize(const FrameArgs& frames, const std::vector<std::string>& out_weights,
                  const std::string& report_path) {
  if (out_weights.size() != 2) {
    throw ConfigError("--out-weights takes exactly two paths: w1.csv,w2.csv");
  }
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);

  write_weights_csv(out_weights[0], recipient, pair.w1);
  write_weights_csv(out_weights[1], donor, pair.w2);

  std::string report_lines = calibration_json("recipient", pair, pair.recipient_report).dump() +
                             "\n" +
                             calibration_json("donor", pair, pair.donor_report).dump() + "\n";
  if (report_path.empty()) {
    std::cout << report_lines;
  } else {
    std::ofstream out(report_path, std::ios::binary);
    out << report_lines;
  }

  std::vector<std::pair<std::string, std::string>> config;
  frames.record(config);
  config.emplace_back("out-weights", out_weights[0] + "," + out_weights[1]);
  std::vector<std::string> outputs = {out_weights[0], out_weights[1]};
  if (!report_path.empty()) outputs.push_back(report_path);
  emit_manifest("harmonize", std::move(config), {frames.recipient_path, frames.donor_path},
                outputs);
  return 0;
}

int cmd_match(const FrameArgs& frames, const std::string& metric_name,
              const std::string& cost_name, const std::string& out_path) {
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  const CostMatrix cost =
      cost_matrix(recipient, donor, pair, parse_metric(metric_name), parse_cost_form(cost_name));
  const TransportPlan plan = solve_transport(cost, pair, overlap);
  save_plan(plan, recipient, donor, out_path);

  const PlanCertificate cert = verify_plan(plan, cost, pair.w1, pair.w2, overlap);
  std::cout << "plan: " << plan.entries.size() << " cells (" << plan.fixed.size()
            << " fixed), objective " << format_double(plan.objective) << ", pivots "
            << plan.pivots << ", certificate " << (cert.pass ? "pass" : "FAIL") << "\n";
  if (!cert.pass) throw NumericError("match: plan failed self-certification: " + cert.failure);

  std::vector<std::pair<std::string, std::string>> config;
  frames.record(config);
  config.emplace_back("metric", metric_name);
  config.emplace_back("cost", cost_name);
  config.emplace_back("out", out_path);
  emit_manifest("match", std::move(config), {frames.recipient_path, frames.donor_path},
                {out_path});
  return 0;
}

int cmd_predict(const FrameArgs& frames, const std::string& plan_path,
                const std::string& direction, const std::string& out_path) {
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  const TransportPlan plan = load_plan(plan_path, recipient, donor, overlap);

  const bool s1 = direction == "s1";
  if (!s1 && direction != "s2") throw ConfigError("--direction must be s1 or s2");
  const Prediction pred = predict(plan, pair, recipient, donor,
                                  s1 ? ImputeDirection::kS1 : ImputeDirection::kS2);
  const SampleFrame& target = s1 ? recipient : donor;
  const SampleFrame& source = s1 ? donor : recipient;
  const Eigen::VectorXd& weights = s1 ? pair.w1 : pair.w2;

  std::vector<std::string> header = {"id"};
  for (const auto& name : source.x_names) header.push_back(name + "_hat");
  for (const auto& name : source.extra_names) header.push_back(name + "_hat");
  header.push_back("weight");
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < target.n(); ++i) {
    std::vector<std::string> row = {target.ids[i]};
    for (int j = 0; j < pred.x_hat.cols(); ++j) row.push_back(format_double(pred.x_hat(i, j)));
    for (int j = 0; j < pred.vars_hat.cols(); ++j) {
      row.push_back(format_double(pred.vars_hat(i, j)));
    }
    row.push_back(format_double(weights(i)));
    rows.push_back(std::move(row));
  }
  write_csv(out_path, header, rows);

  std::vector<std::pair<std::string, std::string>> config;
  frames.record(config);
  config.emplace_back("plan", plan_path);
  config.emplace_back("direction", direction);
  config.emplace_back("out", out_path);
  emit_manifest("predict", std::move(config),
                {frames.recipient_path, frames.donor_path, plan_path}, {out_path});
  return 0;
}

int cmd_impute(const FrameArgs& frames, const std::string& plan_path, std::uint64_t seed,
               const std::string& direction, const std::string& out_path) {
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  const TransportPlan plan = load_plan(plan_path, recipient, donor, overlap);

  const bool s1 = direction == "s1";
  if (!s1 && direction != "s2") throw ConfigError("--direction must be s1 or s2");
  const FusedFile fused = build_imputed_fused(
      s1 ? Representation::kImputedS1 : Representation::kImputedS2, plan, pair, recipient, donor,
      seed);

  const SampleFrame& target = s1 ? recipient : donor;
  const SampleFrame& source = s1 ? donor : recipient;
  std::vector<std::string> header = {"id"};
  for (const auto& name : target.x_names) header.push_back(name);
  for (const auto& name : target.extra_names) header.push_back(name);
  for (const auto& name : source.x_names) header.push_back(name + "_imp");
  for (const auto& name : source.extra_names) header.push_back(name + "_imp");
  header.push_back(s1 ? "donor_id" : "recipient_id");
  header.push_back("weight");

  const Eigen::MatrixXd& own_extra = s1 ? fused.y : fused.z;
  const Eigen::MatrixXd& imp_extra = s1 ? fused.z : fused.y;
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < target.n(); ++i) {
    std::vector<std::string> row = {fused.ids[i]};
    for (int j = 0; j < fused.x.cols(); ++j) row.push_back(format_double(fused.x(i, j)));
    for (int j = 0; j < own_extra.cols(); ++j) row.push_back(format_double(own_extra(i, j)));
    for (int j = 0; j < fused.x_match.cols(); ++j) {
      row.push_back(format_double(fused.x_match(i, j)));
    }
    for (int j = 0; j < imp_extra.cols(); ++j) row.push_back(format_double(imp_extra(i, j)));
    row.push_back(fused.match_ids[i]);
    row.push_back(format_double(fused.weights(i)));
    rows.push_back(std::move(row));
  }
  write_csv(out_path, header, rows);

  std::vector<std::pair<std::string, std::string>> config;
  frames.record(config);
  config.emplace_back("plan", plan_path);
  config.emplace_back("seed", std::to_string(seed));
  config.emplace_back("direction", direction);
  config.emplace_back("out", out_path);
  emit_manifest("impute", std::move(config),
                {frames.recipient_path, frames.donor_path, plan_path}, {out_path});
  return 0;
}

int cmd_estimate(const FrameArgs& frames, const std::string& plan_path, const std::string& kind,
                 const std::string& rep_name, std::optional<std::uint64_t> seed,
                 const std::string& out_path) {
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  const TransportPlan plan = load_plan(plan_path, recipient, donor, overlap);

  const Representation rep = parse_representation(rep_name);
  FusedFile fused;
  if (rep == Representation::kImputedS1 || rep == Representation::kImputedS2) {
    if (!seed) throw ConfigError("--seed is required for imputed representations");
    fused = build_imputed_fused(rep, plan, pair, recipient, donor, *seed);
  } else {
    fused = build_fused(rep, plan, pair, recipient, donor);
  }

  const std::vector<std::string>& y_names = recipient.extra_names;
  const std::vector<std::string>& z_names = donor.extra_names;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header;
  if (kind == "mean") {
    header = {"variable", "value"};
    const Eigen::VectorXd ymean = weighted_mean(fused, VariableBlock::kY);
    const Eigen::VectorXd zmean = weighted_mean(fused, VariableBlock::kZ);
    for (int j = 0; j < ymean.size(); ++j) {
      rows.push_back({"y:" + y_names[j], format_double(ymean(j))});
    }
    for (int j = 0; j < zmean.size(); ++j) {
      rows.push_back({"z:" + z_names[j], format_double(zmean(j))});
    }
  } else if (kind == "contingency" || kind == "covariance") {
    header = {"y", "z", "value"};
    const JointEstimate est = kind == "contingency" ? contingency(fused) : covariance_yz(fused);
    for (int i = 0; i < est.value.rows(); ++i) {
      for (int j = 0; j < est.value.cols(); ++j) {
        rows.push_back({y_names[i], z_names[j], format_double(est.value(i, j))});
      }
    }
  } else {
    throw ConfigError("--kind must be mean, contingency or covariance");
  }
  write_csv(out_path, header, rows);

  std::vector<std::pair<std::string, std::string>> config;
  frames.record(config);
  config.emplace_back("plan", plan_path);
  config.emplace_back("kind", kind);
  config.emplace_back("representation", rep_name);
  if (seed) config.emplace_back("seed", std::to_string(*seed));
  config.emplace_back("out", out_path);
  emit_manifest("estimate", std::move(config),
                {frames.recipient_path, frames.donor_path, plan_path}, {out_path});
  return 0;
}

int cmd_verify(const FrameArgs& frames, const std::string& plan_path,
               const std::string& metric_name, const std::string& cost_name) {
  const SampleFrame recipient = frames.load_recipient();
  const SampleFrame donor = frames.load_donor();
  const OverlapInfo overlap = detect_overlap(recipient, donor);
  const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
  const CostMatrix cost =
      cost_matrix(recipient, donor, pair, parse_metric(metric_name), parse_cost_form(cost_name));
  const TransportPlan plan = load_plan(plan_path, recipient, donor, overlap);
  const PlanCertificate cert = verify_plan(plan, cost, pair.w1, pair.w2, overlap);

  nlohmann::ordered_json j;
  j["pass"] = cert.pass;
  j["max_row_violation"] = cert.max_row_violation;
  j["max_col_violation"] = cert.max_col_violation;
  j["max_fixed_violation"] = cert.max_fixed_violation;
  j["min_reduced_cost"] = cert.min_reduced_cost;
  j["max_support_residual"] = cert.max_support_residual;
  j["duality_gap"] = cert.duality_gap;
  if (!cert.pass) j["failure"] = cert.failure;
  std::cout << j.dump() << "\n";
  return cert.pass ? 0 : 2;
}

int cmd_simulate(GaussianSpec spec, const std::string& truth_name, const std::string& out_path) {
  if (truth_name == "finite-pop") {
    spec.truth_finite_population = true;
  } else if (truth_name != "analytic") {
    throw ConfigError("--truth must be analytic or finite-pop");
  }
  const McReport report = run_monte_carlo(spec);

  std::vector<std::vector<std::string>> rows;
  auto emit = [&rows](const char* method, const MseDecomposition& d) {
    for (int i = 0; i < d.mse.rows(); ++i) {
      for (int j = 0; j < d.mse.cols(); ++j) {
        rows.push_back({method, std::to_string(i + 1), std::to_string(j + 1),
                        format_double(d.bias2(i, j)), format_double(d.variance(i, j)),
                        format_double(d.mse(i, j))});
      }
    }
  };
  emit("opt", report.opt);
  emit("bal", report.bal);
  emit("ren", report.ren);
  write_csv(out_path, {"method", "cell_row", "cell_col", "bias2", "variance", "mse"}, rows);

  std::cout << "simulate-gaussian: " << report.replicates_done << " replicates ("
            << report.replicates_failed << " failed), truth "
            << (spec.truth_finite_population ? "finite-pop" : "analytic") << "\n";

  std::vector<std::pair<std::string, std::string>> config = {
      {"population", std::to_string(spec.population_size)},
      {"n1", std::to_string(spec.n1)},
      {"n2", std::to_string(spec.n2)},
      {"replicates", std::to_string(spec.replicates)},
      {"seed", std::to_string(spec.seed)},
      {"truth", truth_name},
      {"out", out_path},
  };
  emit_manifest("simulate-gaussian", std::move(config), {}, {out_path});
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"statfuse: statistical matching of weighted survey samples"};
  app.require_subcommand(1);

  // harmonize
  FrameArgs harm_frames;
  std::vector<std::string> out_weights;
  std::string harm_report;
  auto* harmonize = app.add_subcommand("harmonize", "Calibrate both weight systems to shared totals");
  std::string config_doc;
  harmonize->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(harmonize, harm_frames, false, false);
  harmonize->add_option("--out-weights", out_weights, "Output weight CSVs: w1.csv,w2.csv")
      ->required()
      ->delimiter(',');
  harmonize->add_option("--report", harm_report, "Write the JSON-lines run report here");

  // match
  FrameArgs match_frames;
  std::string match_metric = "mahalanobis", match_cost = "d", match_out;
  auto* match = app.add_subcommand("match", "Harmonize and solve the optimal matching");
  match->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(match, match_frames, false, false);
  match->add_option("--metric", match_metric, "euclidean|mahalanobis")->capture_default_str();
  match->add_option("--cost", match_cost, "Cost form: d|d2")->capture_default_str();
  match->add_option("--out", match_out, "Output plan CSV")->required();

  // predict
  FrameArgs pred_frames;
  std::string pred_plan, pred_direction = "s1", pred_out;
  auto* pred = app.add_subcommand("predict", "Weighted-average predictions from a plan");
  pred->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(pred, pred_frames, false, false);
  pred->add_option("--plan", pred_plan, "Plan CSV from `match`")->required();
  pred->add_option("--direction", pred_direction, "s1|s2")->capture_default_str();
  pred->add_option("--out", pred_out, "Output CSV")->required();

  // impute
  FrameArgs imp_frames;
  std::string imp_plan, imp_direction = "s1", imp_out;
  std::uint64_t imp_seed = 0;
  auto* impute = app.add_subcommand("impute", "One balanced donor per unit from a plan");
  impute->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(impute, imp_frames, false, false);
  impute->add_option("--plan", imp_plan, "Plan CSV from `match`")->required();
  impute->add_option("--seed", imp_seed, "Sampling seed (required: runs must be reproducible)")
      ->required();
  impute->add_option("--direction", imp_direction, "s1|s2")->capture_default_str();
  impute->add_option("--out", imp_out, "Output fused CSV")->required();

  // estimate
  FrameArgs est_frames;
  std::string est_plan, est_kind, est_rep = "pairwise", est_out;
  std::optional<std::uint64_t> est_seed;
  auto* estimate = app.add_subcommand("estimate", "Joint estimators from a plan");
  estimate->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(estimate, est_frames, false, false);
  estimate->add_option("--plan", est_plan, "Plan CSV from `match`")->required();
  estimate->add_option("--kind", est_kind, "mean|contingency|covariance")->required();
  estimate->add_option("--representation", est_rep, "pairwise|pred-s1|imp-s1|pred-s2|imp-s2")
      ->capture_default_str();
  estimate->add_option("--seed", est_seed, "Seed for imputed representations");
  estimate->add_option("--out", est_out, "Output CSV")->required();

  // verify
  FrameArgs ver_frames;
  std::string ver_plan, ver_metric = "mahalanobis", ver_cost = "d";
  auto* verify = app.add_subcommand("verify", "Re-certify a stored plan");
  verify->add_option("--config", config_doc, "Key=value config file (flags win)");
  add_frame_options(verify, ver_frames, false, false);
  verify->add_option("--plan", ver_plan, "Plan CSV to certify")->required();
  verify->add_option("--metric", ver_metric, "euclidean|mahalanobis")->capture_default_str();
  verify->add_option("--cost", ver_cost, "Cost form: d|d2")->capture_default_str();

  // simulate-gaussian
  GaussianSpec spec = default_gaussian_spec();
  std::string sim_truth = "analytic", sim_out;
  std::vector<double> sim_mu, sim_sigma, sim_by, sim_bz;
  auto* simulate = app.add_subcommand("simulate-gaussian",
                                      "Monte Carlo estimator comparison on a synthetic population");
  simulate->add_option("--config", config_doc, "Key=value config file (flags win)");
  simulate->add_option("--population", spec.population_size, "Population size N")
      ->capture_default_str();
  simulate->add_option("--n1", spec.n1, "Recipient sample size")->capture_default_str();
  simulate->add_option("--n2", spec.n2, "Donor sample size")->capture_default_str();
  simulate->add_option("--replicates", spec.replicates, "Replicates")->capture_default_str();
  simulate->add_option("--seed", spec.seed, "Master seed (required: runs must be reproducible)")
      ->required();
  simulate->add_option("--threads", spec.threads, "Worker threads (0 = all cores)")
      ->capture_default_str();
  simulate->add_option("--truth", sim_truth, "analytic|finite-pop")->capture_default_str();
  simulate->add_option("--mu-x", sim_mu, "Mean of x (p values)")->delimiter(',');
  simulate->add_option("--sigma-xx", sim_sigma, "Covariance of x, row-major (p*p values)")
      ->delimiter(',');
  simulate->add_option("--b-y", sim_by, "y coefficients, row-major (q*p values)")->delimiter(',');
  simulate->add_option("--b-z", sim_bz, "z coefficients, row-major (r*p values)")->delimiter(',');
  simulate->add_option("--out", sim_out, "Output report CSV")->required();

  try {
    const std::vector<std::string> merged = merge_config_file(argc, argv);
    std::vector<const char*> cargv;
    cargv.reserve(merged.size());
    for (const auto& s : merged) cargv.push_back(s.c_str());
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "statfuse: error: " << e.what() << "\n";
    std::cerr << "run 'statfuse --help' or 'statfuse <subcommand> --help' for usage\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "statfuse: error: config: " << e.what() << "\n";
    return 1;
  }

  try {
    if (harmonize->parsed()) return cmd_harmonize(harm_frames, out_weights, harm_report);
    if (match->parsed()) return cmd_match(match_frames, match_metric, match_cost, match_out);
    if (pred->parsed()) return cmd_predict(pred_frames, pred_plan, pred_direction, pred_out);
    if (impute->parsed()) return cmd_impute(imp_frames, imp_plan, imp_seed, imp_direction, imp_out);
    if (estimate->parsed()) {
      return cmd_estimate(est_frames, est_plan, est_kind, est_rep, est_seed, est_out);
    }
    if (verify->parsed()) return cmd_verify(ver_frames, ver_plan, ver_metric, ver_cost);
    if (simulate->parsed()) {
      if (!sim_mu.empty()) {
        spec.mu_x = Eigen::Map<Eigen::VectorXd>(sim_mu.data(), static_cast<int>(sim_mu.size()));
      }
      const int p = static_cast<int>(spec.mu_x.size());
      auto reshape = [p](std::vector<double>& flat, const char* flag) {
        if (flat.size() % p != 0) {
          throw ConfigError(std::string(flag) + ": expected a multiple of p=" +
                            std::to_string(p) + " values");
        }
        const int rows = static_cast<int>(flat.size()) / p;
        Eigen::MatrixXd m(rows, p);
        for (int i = 0; i < rows; ++i) {
          for (int j = 0; j < p; ++j) m(i, j) = flat[static_cast<std::size_t>(i) * p + j];
        }
        return m;
      };
      if (!sim_sigma.empty()) spec.sigma_xx = reshape(sim_sigma, "--sigma-xx");
      if (!sim_by.empty()) spec.b_y = reshape(sim_by, "--b-y");
      if (!sim_bz.empty()) spec.b_z = reshape(sim_bz, "--b-z");
      return cmd_simulate(spec, sim_truth, sim_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "statfuse: error: config: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "statfuse: error: data: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "statfuse: error: numeric: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace statfuse
