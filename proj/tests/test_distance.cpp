#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "statfuse/distance.hpp"
#include "statfuse/harmonize.hpp"
#include "test_util.hpp"

using namespace statfuse;
using statfuse_test::random_frame;

namespace {

HarmonizedPair harmonized(const SampleFrame& r, const SampleFrame& d) {
  return harmonize_pair(r, d, detect_overlap(r, d));
}

}  // namespace

TEST_CASE("pooled_covariance is zero without dispersion") {
  SampleFrame r = make_frame(Role::kRecipient, {"a"}, Eigen::MatrixXd::Constant(1, 1, 3.0),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  SampleFrame d = make_frame(Role::kDonor, {"b"}, Eigen::MatrixXd::Constant(1, 1, 3.0),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  HarmonizedPair pair = harmonized(r, d);
  CHECK(pooled_covariance(r, d, pair)(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("pooled_covariance hand instance: two units each side") {
  SampleFrame r = make_frame(Role::kRecipient, {"a", "b"}, Eigen::MatrixXd::Zero(2, 1),
                             Eigen::MatrixXd(2, 0), Eigen::VectorXd::Ones(2));
  SampleFrame d = make_frame(Role::kDonor, {"c", "e"}, Eigen::MatrixXd::Constant(2, 1, 2.0),
                             Eigen::MatrixXd(2, 0), Eigen::VectorXd::Ones(2));
  HarmonizedPair pair;
  pair.alpha = 0.5;
  pair.w1 = r.weights;
  pair.w2 = d.weights;
  pair.x_hat_star = Eigen::VectorXd::Constant(1, 2.0);  // 0.5*0 + 0.5*4
  pair.n_hat_star = 2.0;
  CHECK(pooled_covariance(r, d, pair)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pooled_covariance is invariant to a common weight rescaling") {
  Philox4x32 rng(12);
  SampleFrame r = random_frame(rng, 20, 2, 0, Role::kRecipient);
  SampleFrame d = random_frame(rng, 35, 2, 0, Role::kDonor);
  HarmonizedPair pair = harmonized(r, d);
  Eigen::MatrixXd omega = pooled_covariance(r, d, pair);

  HarmonizedPair scaled = pair;
  scaled.w1 *= 3.0;
  scaled.w2 *= 3.0;
  scaled.n_hat_star *= 3.0;
  scaled.x_hat_star *= 3.0;
  Eigen::MatrixXd omega_scaled = pooled_covariance(r, d, scaled);
  CHECK((omega - omega_scaled).cwiseAbs().maxCoeff() <= 1e-12 * omega.cwiseAbs().maxCoeff());
}

TEST_CASE("mahalanobis with identity metric is euclidean") {
  Philox4x32 rng(13);
  SampleFrame r = random_frame(rng, 8, 3, 0, Role::kRecipient);
  SampleFrame d = random_frame(rng, 9, 3, 0, Role::kDonor);
  CostMatrix maha = mahalanobis_matrix(r, d, Eigen::MatrixXd::Identity(3, 3));
  for (int k = 0; k < r.n(); ++k) {
    for (int l = 0; l < d.n(); ++l) {
      const double euclid = (r.x.row(k) - d.x.row(l)).norm();
      CHECK(maha.values(k, l) == doctest::Approx(euclid).epsilon(1e-7));
    }
  }
}

TEST_CASE("mahalanobis scalar case: omega 4, gap 4 gives distance 2") {
  SampleFrame r = make_frame(Role::kRecipient, {"a"}, Eigen::MatrixXd::Zero(1, 1),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  SampleFrame d = make_frame(Role::kDonor, {"b"}, Eigen::MatrixXd::Constant(1, 1, 4.0),
                             Eigen::MatrixXd(1, 0), Eigen::VectorXd::Ones(1));
  CostMatrix cost = mahalanobis_matrix(r, d, Eigen::MatrixXd::Constant(1, 1, 4.0));
  CHECK(cost.values(0, 0) == doctest::Approx(2.0).epsilon(1e-7));
  CostMatrix squared =
      mahalanobis_matrix(r, d, Eigen::MatrixXd::Constant(1, 1, 4.0), CostForm::kSquaredDistance);
  CHECK(squared.values(0, 0) == doctest::Approx(4.0).epsilon(1e-7));
}

TEST_CASE("identical rows have exactly zero distance") {
  Philox4x32 rng(14);
  SampleFrame r = random_frame(rng, 6, 2, 0, Role::kRecipient);
  SampleFrame d = r;
  d.role = Role::kDonor;
  HarmonizedPair pair = harmonized(r, d);
  CostMatrix cost = cost_matrix(r, d, pair);
  for (int k = 0; k < r.n(); ++k) {
    CHECK(cost.values(k, k) == 0.0);
    for (int l = 0; l < d.n(); ++l) CHECK(cost.values(k, l) >= 0.0);
  }
}

TEST_CASE("mahalanobis distances are invariant under affine maps of x") {
  Philox4x32 rng(15);
  for (int rep = 0; rep < 5; ++rep) {
    SampleFrame r = random_frame(rng, 15, 3, 0, Role::kRecipient);
    SampleFrame d = random_frame(rng, 25, 3, 0, Role::kDonor);
    HarmonizedPair pair = harmonized(r, d);
    CostMatrix base = cost_matrix(r, d, pair);

    // random invertible map plus shift, applied to both samples
    Eigen::MatrixXd map(3, 3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) map(i, j) = rng.next_normal();
    }
    map += 3.0 * Eigen::MatrixXd::Identity(3, 3);  // keep it well-conditioned
    Eigen::VectorXd shift(3);
    for (int i = 0; i < 3; ++i) shift(i) = rng.next_normal();

    SampleFrame rt = r, dt = d;
    rt.x = (r.x * map.transpose()).rowwise() + shift.transpose();
    dt.x = (d.x * map.transpose()).rowwise() + shift.transpose();
    HarmonizedPair pair_t = harmonized(rt, dt);
    CostMatrix moved = cost_matrix(rt, dt, pair_t);
    const double scale = std::max(1.0, base.values.maxCoeff());
    CHECK((moved.values - base.values).cwiseAbs().maxCoeff() / scale <= 1e-8);
  }
}

TEST_CASE("collinear x columns survive through the ridge") {
  Philox4x32 rng(16);
  SampleFrame r = random_frame(rng, 10, 2, 0, Role::kRecipient);
  SampleFrame d = random_frame(rng, 12, 2, 0, Role::kDonor);
  // make column 1 a copy of column 0 in both frames
  r.x.col(1) = r.x.col(0);
  d.x.col(1) = d.x.col(0);
  HarmonizedPair pair = harmonized(r, d);
  CostMatrix cost = cost_matrix(r, d, pair);
  CHECK(cost.values.allFinite());
  CHECK(cost.values.minCoeff() >= 0.0);
}
