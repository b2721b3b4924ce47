#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "asynclong/smoothing.hpp"
#include "support/oracles.hpp"

using namespace asynclong;

TEST_CASE("nw_mean basics") {
  SECTION("constant values give the constant back") {
    std::vector<double> t{0.1, 0.35, 0.6, 0.61};
    Eigen::MatrixXd v = Eigen::MatrixXd::Constant(4, 1, 3.25);
    for (double t0 : {0.2, 0.5, 0.6})
      CHECK(nw_mean(t, v, t0, KernelSpec(0.5))(0) == Catch::Approx(3.25).epsilon(1e-14));
  }
  SECTION("two points equidistant from t0 average") {
    std::vector<double> t{0.4, 0.6};
    Eigen::MatrixXd v(2, 1);
    v << 0.0, 2.0;
    CHECK(nw_mean(t, v, 0.5, KernelSpec(0.3))(0) == Catch::Approx(1.0).epsilon(1e-14));
  }
  SECTION("derived two-point example") {
    std::vector<double> t{0.1, 0.2};
    Eigen::MatrixXd v(2, 1);
    v << 1.0, 3.0;
    // equal kernel weights at distance 0.05 either side cancel in the ratio
    CHECK(nw_mean(t, v, 0.15, KernelSpec(0.2))(0) == Catch::Approx(2.0).epsilon(1e-14));
  }
  SECTION("empty window reports the point and bandwidth") {
    std::vector<double> t{0.1, 0.2};
    Eigen::MatrixXd v(2, 1);
    v << 1.0, 3.0;
    try {
      nw_mean(t, v, 0.9, KernelSpec(0.05));
      FAIL("expected EmptyWindowError");
    } catch (const EmptyWindowError& e) {
      CHECK(e.t0 == 0.9);
      CHECK(e.h == 0.05);
    }
  }
  SECTION("a point exactly at distance h carries zero weight") {
    std::vector<double> t{0.5};
    Eigen::MatrixXd v(1, 1);
    v << 7.0;
    CHECK_THROWS_AS(nw_mean(t, v, 0.25, KernelSpec(0.25)), EmptyWindowError);
  }
}

TEST_CASE("single time point smooths to itself") {
  const std::vector<double> t{0.37};
  const auto row = local_linear_weights(t, 0, KernelSpec(0.1));
  REQUIRE(row.neighbors.size() == 1);
  CHECK(row.neighbors[0] == 0);
  CHECK(row.weights[0] == 1.0);
}

TEST_CASE("smoother rows are normalized") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> t(40);
  for (auto& x : t) x = unif(rng);
  const KernelSpec k(0.15);
  const LocalLinearSmoother sm(t, k);
  for (long i = 0; i < 40; ++i) {
    const auto row = sm.row(i);
    double sum = 0.0;
    for (double w : row.weights) sum += w;
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("row matches the dense oracle") {
  const std::vector<double> t{0.0, 0.1, 0.2};
  const double h = 0.15;
  const Eigen::MatrixXd s = oracle::dense_smoother_matrix(t, h);
  for (long i = 0; i < 3; ++i) {
    const auto row = local_linear_weights(t, i, KernelSpec(h));
    Eigen::RowVectorXd as_dense = Eigen::RowVectorXd::Zero(3);
    for (std::size_t r = 0; r < row.neighbors.size(); ++r)
      as_dense(row.neighbors[r]) = row.weights[r];
    for (long j = 0; j < 3; ++j) CHECK(as_dense(j) == Catch::Approx(s(i, j)).margin(1e-12));
  }
}

TEST_CASE("annihilator removes constants") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> t(25);
  for (auto& x : t) x = unif(rng);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(25, 1, 4.0);
  const Eigen::MatrixXd out = apply_annihilator(t, KernelSpec(0.2), ones);
  CHECK(out.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("annihilator is column-wise linear") {
  std::mt19937 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> t(20);
  for (auto& x : t) x = unif(rng);
  Eigen::MatrixXd cols(20, 2);
  for (long i = 0; i < 20; ++i) cols(i, 0) = cols(i, 1) = normal(rng);
  const Eigen::MatrixXd out = apply_annihilator(t, KernelSpec(0.25), cols);
  CHECK((out.col(0) - out.col(1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("annihilator matches the dense oracle on random input") {
  std::mt19937 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> t(20);
  for (auto& x : t) x = unif(rng);
  Eigen::MatrixXd cols(20, 2);
  for (long i = 0; i < 20; ++i)
    for (long c = 0; c < 2; ++c) cols(i, c) = normal(rng);
  const double h = 0.2;
  const Eigen::MatrixXd expect =
      (Eigen::MatrixXd::Identity(20, 20) - oracle::dense_smoother_matrix(t, h)) * cols;
  const Eigen::MatrixXd got = apply_annihilator(t, KernelSpec(h), cols);
  CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pruned computation equals dense computation") {
  std::mt19937 rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int rep = 0; rep < 6; ++rep) {
    const long m = 40 + 30 * rep;  // up to 190
    std::vector<double> t(m);
    for (auto& x : t) x = unif(rng);
    Eigen::MatrixXd cols(m, 2);
    for (long i = 0; i < m; ++i)
      for (long c = 0; c < 2; ++c) cols(i, c) = normal(rng);
    const double h = 0.05 + 0.05 * (rep % 3);
    const Eigen::MatrixXd expect =
        (Eigen::MatrixXd::Identity(m, m) - oracle::dense_smoother_matrix(t, h)) * cols;
    const Eigen::MatrixXd got = apply_annihilator(t, KernelSpec(h), cols);
    CHECK((expect - got).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("coincident times fall back to local-constant weights") {
  // two observations at the same instant, isolated from the rest
  const std::vector<double> t{0.5, 0.5, 0.9};
  const auto row = local_linear_weights(t, 0, KernelSpec(0.1));
  REQUIRE(row.neighbors.size() == 2);
  CHECK(row.weights[0] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(row.weights[1] == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("local-linear level reproduces a line") {
  // exact line: the local-linear level estimate is exact for linear data
  std::vector<double> t{0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> v(5);
  for (int i = 0; i < 5; ++i) v[i] = 2.0 - 3.0 * t[i];
  const double a0 = local_linear_level(t, v, 0.3, KernelSpec(0.25));
  CHECK(a0 == Catch::Approx(2.0 - 3.0 * 0.3).margin(1e-12));
}
