#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "statfuse/cli.hpp"
#include "statfuse/csv.hpp"
#include "test_util.hpp"

using statfuse::run_cli;
using statfuse_test::read_file;
using statfuse_test::temp_dir;
using statfuse_test::write_file;

namespace {

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"statfuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// 6 recipients, 10 donors, ids r3/r4 shared with the donor file
void write_sample_files(const std::filesystem::path& dir) {
  write_file(dir / "r.csv",
             "id,x1,x2,y,w\n"
             "r1,0.1,1.2,a,10\n"
             "r2,0.4,0.8,b,12\n"
             "r3,1.1,0.3,a,9\n"
             "r4,-0.6,1.9,c,11\n"
             "r5,0.9,-0.4,b,10\n"
             "r6,-1.2,0.5,a,8\n");
  write_file(dir / "d.csv",
             "id,x1,x2,z,w\n"
             "d1,0.2,1.0,4.5,6\n"
             "d2,0.6,0.7,3.1,7\n"
             "r3,1.0,0.4,5.2,6\n"
             "r4,-0.5,1.8,2.2,5\n"
             "d5,1.0,-0.2,4.4,6\n"
             "d6,-1.0,0.6,3.3,7\n"
             "d7,0.3,0.2,2.9,6\n"
             "d8,-0.2,-0.3,3.8,5\n"
             "d9,0.8,1.1,4.1,6\n"
             "d10,-0.9,1.4,2.6,6\n");
}

std::vector<std::string> frame_flags(const std::filesystem::path& dir) {
  return {"--recipient", (dir / "r.csv").string(), "--donor", (dir / "d.csv").string(),
          "--x-cols",    "x1,x2",                  "--y-cols", "y",
          "--z-cols",    "z",                      "--weight-col", "w"};
}

std::vector<std::string> with(std::vector<std::string> base,
                              const std::vector<std::string>& extra) {
  base.insert(base.end(), extra.begin(), extra.end());
  return base;
}

}  // namespace

TEST_CASE("match produces a plan, a manifest, and verify certifies it") {
  auto dir = temp_dir("cli_match");
  write_sample_files(dir);
  const std::string plan = (dir / "plan.csv").string();
  REQUIRE(cli(with({"match"}, with(frame_flags(dir), {"--out", plan}))) == 0);
  CHECK(std::filesystem::exists(plan));
  CHECK(std::filesystem::exists(plan + ".manifest.json"));

  CHECK(cli(with({"verify"}, with(frame_flags(dir), {"--plan", plan}))) == 0);

  // manifest carries checksums for both inputs and the output
  const std::string manifest = read_file(plan + ".manifest.json");
  CHECK(manifest.find("\"subcommand\": \"match\"") != std::string::npos);
  CHECK(manifest.find("r.csv") != std::string::npos);
  CHECK(manifest.find("plan.csv") != std::string::npos);
}

TEST_CASE("missing or unknown flags exit 1 with a named diagnostic") {
  auto dir = temp_dir("cli_missing");
  write_sample_files(dir);
  auto args = frame_flags(dir);
  // without --weight-col the default name 'weight' is not in these files
  args.resize(args.size() - 2);
  CHECK(cli(with({"harmonize"}, with(args, {"--out-weights",
                                            (dir / "w1.csv").string() + "," +
                                                (dir / "w2.csv").string()}))) == 1);
  // unknown flag
  CHECK(cli(with({"match"}, with(frame_flags(dir), {"--out", (dir / "p.csv").string(),
                                                    "--no-such-flag"}))) == 1);
  // missing required --out
  CHECK(cli(with({"match"}, frame_flags(dir))) == 1);
}

TEST_CASE("harmonize writes weight files that calibrate both frames") {
  auto dir = temp_dir("cli_harmonize");
  write_sample_files(dir);
  const std::string w1 = (dir / "w1.csv").string();
  const std::string w2 = (dir / "w2.csv").string();
  REQUIRE(cli(with({"harmonize"},
                   with(frame_flags(dir), {"--out-weights", w1 + "," + w2, "--report",
                                           (dir / "report.jsonl").string()}))) == 0);
  statfuse::CsvTable t1 = statfuse::read_csv(w1);
  statfuse::CsvTable t2 = statfuse::read_csv(w2);
  CHECK(t1.rows.size() == 6);
  CHECK(t2.rows.size() == 10);
  const std::string report = read_file(dir / "report.jsonl");
  CHECK(report.find("\"frame\":\"recipient\"") != std::string::npos);
  CHECK(report.find("\"alpha_star\":") != std::string::npos);
}

TEST_CASE("predict and impute read a stored plan and write fused files") {
  auto dir = temp_dir("cli_fuse");
  write_sample_files(dir);
  const std::string plan = (dir / "plan.csv").string();
  REQUIRE(cli(with({"match"}, with(frame_flags(dir), {"--out", plan}))) == 0);

  const std::string pred = (dir / "pred.csv").string();
  REQUIRE(cli(with({"predict"}, with(frame_flags(dir), {"--plan", plan, "--out", pred}))) == 0);
  statfuse::CsvTable p = statfuse::read_csv(pred);
  CHECK(p.rows.size() == 6);
  CHECK(p.column("x1_hat") >= 0);
  CHECK(p.column("z_hat") >= 0);

  const std::string fused = (dir / "fused.csv").string();
  REQUIRE(cli(with({"impute"}, with(frame_flags(dir),
                                    {"--plan", plan, "--seed", "42", "--out", fused}))) == 0);
  statfuse::CsvTable f = statfuse::read_csv(fused);
  CHECK(f.rows.size() == 6);
  CHECK(f.column("donor_id") >= 0);
  CHECK(f.column("z_imp") >= 0);

  // impute without a seed must fail: reproducibility is not optional
  CHECK(cli(with({"impute"}, with(frame_flags(dir), {"--plan", plan, "--out", fused}))) == 1);
}

TEST_CASE("identical seeds give byte-identical outputs") {
  auto dir = temp_dir("cli_determinism");
  write_sample_files(dir);
  const std::string plan = (dir / "plan.csv").string();
  REQUIRE(cli(with({"match"}, with(frame_flags(dir), {"--out", plan}))) == 0);

  const std::string f1 = (dir / "fused1.csv").string();
  const std::string f2 = (dir / "fused2.csv").string();
  REQUIRE(cli(with({"impute"}, with(frame_flags(dir),
                                    {"--plan", plan, "--seed", "7", "--out", f1}))) == 0);
  REQUIRE(cli(with({"impute"}, with(frame_flags(dir),
                                    {"--plan", plan, "--seed", "7", "--out", f2}))) == 0);
  CHECK(read_file(f1) == read_file(f2));
  CHECK(read_file(f1 + ".manifest.json") != "");

  const std::string f3 = (dir / "fused3.csv").string();
  REQUIRE(cli(with({"impute"}, with(frame_flags(dir),
                                    {"--plan", plan, "--seed", "8", "--out", f3}))) == 0);
  CHECK(read_file(f1) != read_file(f3));
}

TEST_CASE("estimate writes means, contingencies and covariances") {
  auto dir = temp_dir("cli_estimate");
  write_sample_files(dir);
  const std::string plan = (dir / "plan.csv").string();
  REQUIRE(cli(with({"match"}, with(frame_flags(dir), {"--out", plan}))) == 0);

  const std::string mean = (dir / "mean.csv").string();
  REQUIRE(cli(with({"estimate"}, with(frame_flags(dir),
                                      {"--plan", plan, "--kind", "mean", "--out", mean}))) == 0);
  statfuse::CsvTable m = statfuse::read_csv(mean);
  CHECK(m.rows.size() == 4);  // y has 3 one-hot levels, z is 1 column

  // y is categorical but z is continuous: a y-z contingency must fail
  CHECK(cli(with({"estimate"}, with(frame_flags(dir), {"--plan", plan, "--kind", "contingency",
                                                       "--out", (dir / "c.csv").string()}))) ==
        1);

  const std::string cov = (dir / "cov.csv").string();
  REQUIRE(cli(with({"estimate"},
                   with(frame_flags(dir), {"--plan", plan, "--kind", "covariance",
                                           "--representation", "pred-s1", "--out", cov}))) == 0);
  statfuse::CsvTable c = statfuse::read_csv(cov);
  CHECK(c.rows.size() == 3);  // 3 y levels x 1 z column

  // imputed representation without a seed
  CHECK(cli(with({"estimate"},
                 with(frame_flags(dir), {"--plan", plan, "--kind", "covariance",
                                         "--representation", "imp-s1", "--out", cov}))) == 1);
  CHECK(cli(with({"estimate"},
                 with(frame_flags(dir), {"--plan", plan, "--kind", "covariance",
                                         "--representation", "imp-s1", "--seed", "3", "--out",
                                         cov}))) == 0);
}

TEST_CASE("simulate-gaussian smoke run emits the report and is reproducible") {
  auto dir = temp_dir("cli_sim");
  const std::string out1 = (dir / "rep1.csv").string();
  const std::string out2 = (dir / "rep2.csv").string();
  std::vector<std::string> base = {"simulate-gaussian", "--population", "400", "--n1", "40",
                                   "--n2",              "120",          "--replicates", "4",
                                   "--seed",            "99",           "--threads", "2"};
  REQUIRE(cli(with(base, {"--out", out1})) == 0);
  REQUIRE(cli(with(base, {"--out", out2})) == 0);
  CHECK(read_file(out1) == read_file(out2));

  statfuse::CsvTable report = statfuse::read_csv(out1);
  CHECK(report.rows.size() == 12);  // 3 methods x 4 cells
  CHECK(report.header == std::vector<std::string>{"method", "cell_row", "cell_col", "bias2",
                                                  "variance", "mse"});
}

TEST_CASE("config file supplies defaults, flags win") {
  auto dir = temp_dir("cli_config");
  write_sample_files(dir);
  write_file(dir / "run.cfg", "replicates=3\npopulation=300\nn1=30\nn2=90\nthreads=2\n");
  const std::string out = (dir / "rep.csv").string();
  REQUIRE(cli({"simulate-gaussian", "--config", (dir / "run.cfg").string(), "--seed", "5",
               "--replicates", "2", "--out", out}) == 0);
  // flags win: 2 replicates, not 3 (visible through determinism of output)
  const std::string out_direct = (dir / "rep_direct.csv").string();
  REQUIRE(cli({"simulate-gaussian", "--population", "300", "--n1", "30", "--n2", "90",
               "--threads", "2", "--seed", "5", "--replicates", "2", "--out", out_direct}) == 0);
  CHECK(read_file(out) == read_file(out_direct));
}
