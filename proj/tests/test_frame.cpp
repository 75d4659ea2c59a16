#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "statfuse/csv.hpp"
#include "statfuse/errors.hpp"
#include "statfuse/frame.hpp"
#include "test_util.hpp"

using namespace statfuse;
using statfuse_test::random_frame;
using statfuse_test::temp_dir;
using statfuse_test::write_file;

TEST_CASE("load_frame parses a plain numeric file") {
  auto dir = temp_dir("frame_basic");
  write_file(dir / "s.csv", "id,x1,w\n1,0.5,10\n2,1.5,12\n3,-2,9\n");
  SampleFrame frame = load_frame((dir / "s.csv").string(), {"id", {"x1"}, {}, "w"},
                                 Role::kRecipient);
  CHECK(frame.n() == 3);
  CHECK(frame.p() == 1);
  CHECK(frame.extra_dim() == 0);
  CHECK(frame.x(2, 0) == -2.0);
  CHECK(frame.weights(1) == 12.0);
}

TEST_CASE("load_frame rejects nonpositive weights naming the row") {
  auto dir = temp_dir("frame_weight");
  write_file(dir / "s.csv", "id,x1,w\n1,0.5,10\n2,1.5,0\n3,-2,9\n");
  try {
    load_frame((dir / "s.csv").string(), {"id", {"x1"}, {}, "w"}, Role::kRecipient);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("weight must be > 0") != std::string::npos);
  }
}

TEST_CASE("load_frame one-hot expands categorical extra columns") {
  auto dir = temp_dir("frame_onehot");
  write_file(dir / "s.csv", "id,x1,grp,w\n1,0.5,b,10\n2,1.5,a,12\n3,-2,c,9\n4,0,a,3\n");
  SampleFrame frame = load_frame((dir / "s.csv").string(), {"id", {"x1"}, {"grp"}, "w"},
                                 Role::kDonor);
  REQUIRE(frame.extra_dim() == 3);
  CHECK(frame.extra_names == std::vector<std::string>{"grp=a", "grp=b", "grp=c"});
  REQUIRE(frame.encodings.size() == 1);
  CHECK(frame.encodings[0].levels == std::vector<std::string>{"a", "b", "c"});
  for (int i = 0; i < frame.n(); ++i) {
    CHECK(frame.extra.row(i).sum() == 1.0);  // exactly one level per row
  }
  CHECK(frame.extra(1, 0) == 1.0);  // row 2 is level a
}

TEST_CASE("load_frame error cases") {
  auto dir = temp_dir("frame_errors");
  write_file(dir / "dup.csv", "id,x1,w\n1,0.5,10\n1,1.5,2\n");
  CHECK_THROWS_AS(load_frame((dir / "dup.csv").string(), {"id", {"x1"}, {}, "w"},
                             Role::kRecipient),
                  DataError);
  write_file(dir / "ok.csv", "id,x1,w\n1,0.5,10\n");
  CHECK_THROWS_AS(load_frame((dir / "ok.csv").string(), {"id", {"x2"}, {}, "w"},
                             Role::kRecipient),
                  ConfigError);
  write_file(dir / "nan.csv", "id,x1,w\n1,nanana,10\n");
  CHECK_THROWS_AS(load_frame((dir / "nan.csv").string(), {"id", {"x1"}, {}, "w"},
                             Role::kRecipient),
                  DataError);
  write_file(dir / "missing.csv", "id,x1,y,w\n1,0.5,,10\n");
  CHECK_THROWS_AS(load_frame((dir / "missing.csv").string(), {"id", {"x1"}, {"y"}, "w"},
                             Role::kRecipient),
                  DataError);
}

TEST_CASE("save then load round-trips every field") {
  auto dir = temp_dir("frame_roundtrip");
  Philox4x32 rng(7);
  SampleFrame frame = random_frame(rng, 23, 3, 2, Role::kRecipient);
  save_frame(frame, (dir / "out.csv").string(), "w");
  SampleFrame again = load_frame((dir / "out.csv").string(),
                                 {"id", frame.x_names, frame.extra_names, "w"},
                                 Role::kRecipient);
  CHECK(again.ids == frame.ids);
  CHECK((again.x - frame.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((again.extra - frame.extra).cwiseAbs().maxCoeff() == 0.0);
  CHECK((again.weights - frame.weights).cwiseAbs().maxCoeff() == 0.0);

  save_frame(again, (dir / "out2.csv").string(), "w");
  CHECK(statfuse_test::read_file(dir / "out.csv") == statfuse_test::read_file(dir / "out2.csv"));
}

TEST_CASE("detect_overlap on disjoint and nested id sets") {
  auto make = [](std::vector<std::string> ids, Role role) {
    const int n = static_cast<int>(ids.size());
    return make_frame(role, std::move(ids), Eigen::MatrixXd::Zero(n, 1),
                      Eigen::MatrixXd(n, 0), Eigen::VectorXd::Ones(n));
  };
  SUBCASE("disjoint") {
    OverlapInfo info = detect_overlap(make({"1", "2", "3"}, Role::kRecipient),
                                      make({"4", "5"}, Role::kDonor));
    CHECK(info.n12() == 0);
  }
  SUBCASE("containment keeps paired positions") {
    OverlapInfo info = detect_overlap(make({"1", "2", "3"}, Role::kRecipient),
                                      make({"2", "3"}, Role::kDonor));
    REQUIRE(info.n12() == 2);
    CHECK(info.pairs[0] == std::pair<int, int>{1, 0});
    CHECK(info.pairs[1] == std::pair<int, int>{2, 1});
  }
  SUBCASE("order does not matter") {
    OverlapInfo info = detect_overlap(make({"a", "b"}, Role::kRecipient),
                                      make({"b", "a"}, Role::kDonor));
    CHECK(info.n12() == 2);
  }
  SUBCASE("ids compared after trimming") {
    OverlapInfo info = detect_overlap(make({" a ", "b"}, Role::kRecipient),
                                      make({"a"}, Role::kDonor));
    CHECK(info.n12() == 1);
  }
}

TEST_CASE("detect_overlap is symmetric in n12") {
  Philox4x32 rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const int n1 = 1 + static_cast<int>(rng.below(20));
    const int n2 = 1 + static_cast<int>(rng.below(20));
    auto ids = [&rng](int n, int universe) {
      std::set<std::string> unique;
      while (static_cast<int>(unique.size()) < n) {
        unique.insert("u" + std::to_string(rng.below(static_cast<std::uint64_t>(universe))));
      }
      return std::vector<std::string>(unique.begin(), unique.end());
    };
    SampleFrame a = make_frame(Role::kRecipient, ids(n1, 30), Eigen::MatrixXd::Zero(n1, 1),
                               Eigen::MatrixXd(n1, 0), Eigen::VectorXd::Ones(n1));
    SampleFrame b = make_frame(Role::kDonor, ids(n2, 30), Eigen::MatrixXd::Zero(n2, 1),
                               Eigen::MatrixXd(n2, 0), Eigen::VectorXd::Ones(n2));
    CHECK(detect_overlap(a, b).n12() == detect_overlap(b, a).n12());
  }
}

TEST_CASE("detect_overlap rejects mismatched x dimensions") {
  SampleFrame a = make_frame(Role::kRecipient, {"1"}, Eigen::MatrixXd::Zero(1, 2),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  SampleFrame b = make_frame(Role::kDonor, {"1"}, Eigen::MatrixXd::Zero(1, 3),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  CHECK_THROWS_AS(detect_overlap(a, b), ConfigError);
}
