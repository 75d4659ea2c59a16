#include "statfuse/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>
#include <thread>

#include "statfuse/distance.hpp"
#include "statfuse/errors.hpp"
#include "statfuse/estimate.hpp"
#include "statfuse/harmonize.hpp"
#include "statfuse/transport.hpp"

namespace statfuse {

GaussianSpec default_gaussian_spec() {
  GaussianSpec spec;
  spec.mu_x = Eigen::VectorXd::Zero(3);
  spec.sigma_xx.resize(3, 3);
  spec.sigma_xx << 7.364, 2.579, -0.475,
                   2.579, 5.694, -0.021,
                  -0.475, -0.021, 7.864;
  spec.b_y.resize(2, 3);
  spec.b_y << 0.2, -0.3, 1.0,
              1.2, 0.4, -0.5;
  spec.b_z.resize(2, 3);
  spec.b_z << -0.4, 1.0, -0.3,
              -1.4, 0.3, -0.6;
  return spec;
}

Population generate_population(const GaussianSpec& spec, std::uint64_t seed) {
  const int n = spec.population_size;
  const int p = static_cast<int>(spec.mu_x.size());
  if (spec.sigma_xx.rows() != p || spec.sigma_xx.cols() != p) {
    throw ConfigError("generate_population: sigma_xx must match mu_x dimension");
  }
  if (spec.b_y.cols() != p || spec.b_z.cols() != p) {
    throw ConfigError("generate_population: coefficient matrices must have p columns");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(spec.sigma_xx);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("generate_population: sigma_xx is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();

  Philox4x32 rng(seed, 0x706f70756c617465ull);
  Population pop;
  pop.x.resize(n, p);
  pop.y.resize(n, spec.b_y.rows());
  pop.z.resize(n, spec.b_z.rows());
  Eigen::VectorXd standard(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) standard(j) = rng.next_normal();
    pop.x.row(i) = (spec.mu_x + chol * standard).transpose();
    for (int j = 0; j < pop.y.cols(); ++j) {
      pop.y(i, j) = spec.b_y.row(j).dot(pop.x.row(i)) + rng.next_normal();
    }
    for (int j = 0; j < pop.z.cols(); ++j) {
      pop.z(i, j) = spec.b_z.row(j).dot(pop.x.row(i)) + rng.next_normal();
    }
  }
  return pop;
}

std::vector<int> srswor(int population_size, int n, Philox4x32& rng) {
  if (n < 1 || n > population_size) {
    throw ConfigError("srswor: need 1 <= n <= N, got n=" + std::to_string(n) +
                      ", N=" + std::to_string(population_size));
  }
  std::vector<int> pool(population_size);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(population_size - i)));
    std::swap(pool[i], pool[j]);
  }
  std::vector<int> chosen(pool.begin(), pool.begin() + n);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SampleFrame population_frame(const Population& pop, const std::vector<int>& positions, Role role) {
  const int n = static_cast<int>(positions.size());
  const double weight = static_cast<double>(pop.size()) / n;
  const Eigen::MatrixXd& extra_src = role == Role::kRecipient ? pop.y : pop.z;

  std::vector<std::string> ids;
  ids.reserve(n);
  Eigen::MatrixXd x(n, pop.x.cols());
  Eigen::MatrixXd extra(n, extra_src.cols());
  for (int i = 0; i < n; ++i) {
    ids.push_back(std::to_string(positions[i]));
    x.row(i) = pop.x.row(positions[i]);
    extra.row(i) = extra_src.row(positions[i]);
  }
  return make_frame(role, std::move(ids), std::move(x), std::move(extra),
                    Eigen::VectorXd::Constant(n, weight));
}

MseDecomposition mse_decompose(const std::vector<Eigen::MatrixXd>& estimates,
                               const Eigen::MatrixXd& truth) {
  if (estimates.empty()) throw ConfigError("mse_decompose: no estimates");
  const double r = static_cast<double>(estimates.size());
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
  for (const auto& e : estimates) {
    if (e.rows() != truth.rows() || e.cols() != truth.cols()) {
      throw ConfigError("mse_decompose: estimate shape mismatch");
    }
    mean += e;
  }
  mean /= r;

  MseDecomposition d;
  d.bias2 = (mean - truth).cwiseAbs2();
  d.variance = Eigen::MatrixXd::Zero(truth.rows(), truth.cols());
  for (const auto& e : estimates) d.variance += (e - mean).cwiseAbs2();
  d.variance /= r;  // population convention, so MSE = B + V exactly
  d.mse = d.bias2 + d.variance;
  return d;
}

namespace {

struct ReplicateResult {
  Eigen::MatrixXd opt, bal, ren;
  bool failed = false;
  std::string error;
};

ReplicateResult run_replicate(const GaussianSpec& spec, const Population& pop,
                              Philox4x32 rng) {
  ReplicateResult result;
  try {
    Philox4x32 rng_s1 = rng.substream(1);
    Philox4x32 rng_s2 = rng.substream(2);
    Philox4x32 rng_bal = rng.substream(3);

    const SampleFrame recipient =
        population_frame(pop, srswor(pop.size(), spec.n1, rng_s1), Role::kRecipient);
    const SampleFrame donor =
        population_frame(pop, srswor(pop.size(), spec.n2, rng_s2), Role::kDonor);

    const OverlapInfo overlap = detect_overlap(recipient, donor);
    const HarmonizedPair pair = harmonize_pair(recipient, donor, overlap);
    const CostMatrix cost = cost_matrix(recipient, donor, pair);
    const TransportPlan plan = solve_transport(cost, pair, overlap);

    const FusedFile pairwise =
        build_fused(Representation::kPairwise, plan, pair, recipient, donor);
    result.opt = covariance_yz(pairwise).value;

    const FusedFile imputed = build_imputed_fused(Representation::kImputedS1, plan, pair,
                                                  recipient, donor, rng_bal.next_u64());
    result.bal = covariance_yz(imputed).value;

    result.ren = renssen_covariance(pair, recipient, donor);
  } catch (const std::exception& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

}  // namespace

McReport run_monte_carlo(const GaussianSpec& spec) {
  if (spec.replicates < 1) throw ConfigError("run_monte_carlo: replicates must be >= 1");
  const Population pop = generate_population(spec, spec.seed);

  McReport report;
  if (spec.truth_finite_population) {
    const Eigen::VectorXd ymean = pop.y.colwise().mean();
    const Eigen::VectorXd zmean = pop.z.colwise().mean();
    report.truth = (pop.y.rowwise() - ymean.transpose()).transpose() *
                   (pop.z.rowwise() - zmean.transpose()) / pop.size();
  } else {
    report.truth = spec.b_y * spec.sigma_xx * spec.b_z.transpose();
  }

  const Philox4x32 master(spec.seed);
  std::vector<ReplicateResult> results(spec.replicates);
  std::atomic<int> next{0};
  int thread_count = spec.threads > 0 ? spec.threads
                                      : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min(thread_count, spec.replicates));

  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= spec.replicates) return;
      results[r] = run_replicate(spec, pop, master.substream(static_cast<std::uint64_t>(r) + 1));
    }
  };
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::vector<Eigen::MatrixXd> opt, bal, ren;
  std::string first_error;
  for (const auto& r : results) {
    if (r.failed) {
      ++report.replicates_failed;
      if (first_error.empty()) first_error = r.error;
      continue;
    }
    opt.push_back(r.opt);
    bal.push_back(r.bal);
    ren.push_back(r.ren);
  }
  report.replicates_done = static_cast<int>(opt.size());
  if (report.replicates_done == 0 ||
      report.replicates_failed > 0.01 * static_cast<double>(spec.replicates)) {
    throw NumericError("run_monte_carlo: " + std::to_string(report.replicates_failed) + "/" +
                       std::to_string(spec.replicates) + " replicates failed; first error: " +
                       first_error);
  }
  report.opt = mse_decompose(opt, report.truth);
  report.bal = mse_decompose(bal, report.truth);
  report.ren = mse_decompose(ren, report.truth);
  return report;
}

}  // namespace statfuse
