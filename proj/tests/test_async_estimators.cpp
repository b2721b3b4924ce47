#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "asynclong/async_estimators.hpp"
#include "support/oracles.hpp"

using namespace asynclong;

namespace {

LongitudinalDataset exact_joint_dataset(std::mt19937& rng, long n) {
  // Z observed exactly at the sync times, Y = 1 + 2 X - Z
  auto d = oracle::random_dataset(rng, n, 1, 1);
  for (auto& s : d.subjects) {
    s.async_times = s.sync_times;
    s.async_covariates.resize(s.n_sync(), 1);
    for (long j = 0; j < s.n_sync(); ++j) {
      s.async_covariates(j, 0) = std::sin(9.0 * s.sync_times[j]);
      s.responses[j] = 1.0 + 2.0 * s.sync_covariates(j, 0) - s.async_covariates(j, 0);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("pair enumeration matches brute force") {
  std::mt19937 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = oracle::random_dataset(rng, 4, 1, 1);
    for (double h : {0.02, 0.1, 0.5, 1.5}) {
      const auto pairs = enumerate_pairs(d, KernelSpec(h));
      long expected = 0;
      for (const auto& s : d.subjects) expected += oracle::pair_count(s, h);
      CHECK(static_cast<long>(pairs.size()) == expected);
      for (const auto& pw : pairs) {
        CHECK(std::abs(pw.gap) < h);
        CHECK(pw.weight > 0.0);
      }
    }
  }
}

TEST_CASE("two-step with zero residuals returns zero") {
  std::mt19937 rng(11);
  auto d = oracle::random_dataset(rng, 6, 1, 1);
  const Eigen::VectorXd beta = (Eigen::VectorXd(1) << 2.0).finished();
  for (auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j)
      s.responses[j] = 2.0 * s.sync_covariates(j, 0);  // no intercept, no Z, no noise
  std::vector<Eigen::VectorXd> omega(d.subjects.size());
  for (std::size_t i = 0; i < d.subjects.size(); ++i)
    omega[i] = Eigen::VectorXd::Zero(d.subjects[i].n_sync());
  const auto step2 = fit_residuals_on_async(d, omega, KernelSpec(0.3));
  CHECK(step2.theta.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a single pair cannot identify intercept and slope") {
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  SubjectRecord s;
  s.id = "s1";
  s.sync_times = {0.5};
  s.responses = {2.0};
  s.sync_covariates = Eigen::MatrixXd{{0.0}};
  s.async_times = {0.45};
  s.async_covariates = Eigen::MatrixXd{{1.0}};
  d.subjects = {s};
  std::vector<Eigen::VectorXd> omega{(Eigen::VectorXd(1) << 2.0).finished()};
  CHECK_THROWS_AS(fit_residuals_on_async(d, omega, KernelSpec(0.2)), SingularityError);
}

TEST_CASE("step-2 solves the weighted normal equations (hand oracle)") {
  // two pairs with distinct Z values: a well-posed 2x2 weighted system
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  SubjectRecord s;
  s.id = "s1";
  s.sync_times = {0.3, 0.5};
  s.responses = {1.0, 2.0};
  s.sync_covariates = Eigen::MatrixXd{{0.0}, {0.0}};
  s.async_times = {0.32, 0.45};
  s.async_covariates = Eigen::MatrixXd{{-1.0}, {1.0}};
  d.subjects = {s};
  std::vector<Eigen::VectorXd> omega{(Eigen::VectorXd(2) << 1.0, 2.0).finished()};

  const double h = 0.1;
  const auto step2 = fit_residuals_on_async(d, omega, KernelSpec(h));

  // hand accumulation over the pairs with |t - s| < h
  auto kh = [h](double u) { return kernel_eval(u / h) / h; };
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  for (long j = 0; j < 2; ++j)
    for (long k = 0; k < 2; ++k) {
      const double w = kh(s.sync_times[j] - s.async_times[k]);
      if (w <= 0.0) continue;
      const Eigen::Vector2d zt(1.0, s.async_covariates(k, 0));
      a += w * zt * zt.transpose();
      b += w * zt * omega[0](j);
    }
  const Eigen::VectorXd expect = oracle::linear_solve(a, b);
  CHECK((step2.theta - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-step raw residuals keep the intercept") {
  // exact model Y = 1 + 2 X - Z with Z constant over time per subject: the
  // step-2 intercept absorbs alpha
  std::mt19937 rng(13);
  auto d = oracle::random_dataset(rng, 30, 1, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& s : d.subjects) {
    const double z = normal(rng);
    s.async_covariates.setConstant(z);
    for (long j = 0; j < s.n_sync(); ++j)
      s.responses[j] = 1.0 + 2.0 * s.sync_covariates(j, 0) - z;
  }
  const auto rep = fit_two_step(d, Step1Method::Centering, KernelSpec(0.3), KernelSpec(0.5));
  // centering recovers beta exactly here (Y - mean model is exactly linear in
  // centered X within subject? not exactly: finite-sample smoothing error),
  // so only loose checks on alpha/gamma
  CHECK(rep.estimates(0) == Catch::Approx(1.0).margin(0.2));
  CHECK(rep.estimates(2) == Catch::Approx(-1.0).margin(0.2));
  CHECK(rep.param_names == std::vector<std::string>{"alpha", "x1", "z1"});
  CHECK(rep.bandwidths.size() == 2);
}

TEST_CASE("simultaneous fit is exact on synchronized pairs") {
  // async grid equals the sync grid and h is small enough that only the
  // coincident pairs carry weight
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  std::mt19937 rng(19);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 8; ++i) {
    SubjectRecord s;
    s.id = "s" + std::to_string(i);
    s.sync_times = {0.1 + 0.02 * i, 0.5 + 0.02 * i, 0.9 - 0.005 * i};
    s.async_times = s.sync_times;
    s.sync_covariates.resize(3, 1);
    s.async_covariates.resize(3, 1);
    s.responses.resize(3);
    for (long j = 0; j < 3; ++j) {
      s.sync_covariates(j, 0) = normal(rng);
      s.async_covariates(j, 0) = normal(rng);
      s.responses[j] = 1.0 + 2.0 * s.sync_covariates(j, 0) - s.async_covariates(j, 0);
    }
    d.subjects.push_back(s);
  }
  const auto rep = fit_simultaneous(d, KernelSpec(1e-4));
  CHECK(rep.estimates(0) == Catch::Approx(1.0).margin(1e-8));
  CHECK(rep.estimates(1) == Catch::Approx(2.0).margin(1e-8));
  CHECK(rep.estimates(2) == Catch::Approx(-1.0).margin(1e-8));
}

TEST_CASE("simultaneous fit equals the pair-enumeration oracle") {
  std::mt19937 rng(23);
  const auto d = oracle::random_dataset(rng, 6, 1, 1);
  const double h = 0.3;
  const auto rep = fit_simultaneous(d, KernelSpec(h));

  auto kh = [h](double u) { return kernel_eval(u / h) / h; };
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (const auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j)
      for (long k = 0; k < s.n_async(); ++k) {
        const double w = kh(s.sync_times[j] - s.async_times[k]);
        if (w <= 0.0) continue;
        const Eigen::Vector3d wt(1.0, s.sync_covariates(j, 0), s.async_covariates(k, 0));
        a += w * wt * wt.transpose();
        b += w * wt * s.responses[j];
      }
  const Eigen::VectorXd expect = oracle::linear_solve(a, b);
  CHECK((rep.estimates - expect).cwiseAbs().maxCoeff() < 1e-10);

  // normal-equation residual at the returned estimate
  const Eigen::VectorXd u = b - a * rep.estimates;
  CHECK(u.cwiseAbs().maxCoeff() <= 1e-8 * (1.0 + b.cwiseAbs().maxCoeff()));
}

TEST_CASE("simultaneous fit with no pairs in support errors") {
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  SubjectRecord s;
  s.id = "s";
  s.sync_times = {0.1};
  s.responses = {1.0};
  s.sync_covariates = Eigen::MatrixXd{{1.0}};
  s.async_times = {0.9};
  s.async_covariates = Eigen::MatrixXd{{1.0}};
  d.subjects = {s};
  CHECK_THROWS_AS(fit_simultaneous(d, KernelSpec(0.1)), NumericalError);
}

TEST_CASE("lvcf alignment basics") {
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  SubjectRecord s;
  s.id = "s";
  s.sync_times = {0.2, 0.5};
  s.responses = {1.0, 2.0};
  s.sync_covariates = Eigen::MatrixXd{{0.1}, {0.2}};
  s.async_times = {0.1, 0.4};
  s.async_covariates = Eigen::MatrixXd{{10.0}, {40.0}};
  d.subjects = {s};

  SECTION("each response takes the latest prior Z") {
    const auto aligned = lvcf_align(d);
    REQUIRE(aligned.rows.size() == 2);
    CHECK(aligned.dropped == 0);
    CHECK(aligned.rows[0].async_k == 0);  // 0.2 <- 0.1
    CHECK(aligned.rows[1].async_k == 1);  // 0.5 <- 0.4
  }
  SECTION("responses before any Z are dropped and counted") {
    d.subjects[0].sync_times = {0.05, 0.5};
    const auto aligned = lvcf_align(d);
    REQUIRE(aligned.rows.size() == 1);
    CHECK(aligned.dropped == 1);
  }
  SECTION("a Z exactly at the response time is used") {
    d.subjects[0].async_times = {0.2, 0.4};
    const auto aligned = lvcf_align(d);
    REQUIRE(aligned.rows.size() == 2);
    CHECK(aligned.rows[0].async_k == 0);
  }
}

TEST_CASE("lvcf alignment matches brute-force predecessor search") {
  std::mt19937 rng(29);
  for (int rep = 0; rep < 200; ++rep) {
    const auto d = oracle::random_dataset(rng, 3, 1, 1);
    const auto aligned = lvcf_align(d);
    std::size_t r = 0;
    long dropped = 0;
    for (std::size_t i = 0; i < d.subjects.size(); ++i) {
      const auto& s = d.subjects[i];
      for (long j = 0; j < s.n_sync(); ++j) {
        const long k = oracle::lvcf_predecessor(s.async_times, s.sync_times[j]);
        if (k < 0) {
          ++dropped;
          continue;
        }
        REQUIRE(r < aligned.rows.size());
        CHECK(aligned.rows[r].subject == static_cast<int>(i));
        CHECK(aligned.rows[r].sync_j == j);
        CHECK(aligned.rows[r].async_k == k);
        ++r;
      }
    }
    CHECK(r == aligned.rows.size());
    CHECK(dropped == aligned.dropped);
  }
}

TEST_CASE("lvcf fit is exact when Z is synchronous") {
  std::mt19937 rng(31);
  const auto d = exact_joint_dataset(rng, 6);
  const auto rep = fit_lvcf(d);
  CHECK(rep.estimates(0) == Catch::Approx(1.0).margin(1e-10));
  CHECK(rep.estimates(1) == Catch::Approx(2.0).margin(1e-10));
  CHECK(rep.estimates(2) == Catch::Approx(-1.0).margin(1e-10));
  CHECK(rep.dropped == 0);
}

TEST_CASE("lvcf fit equals the elimination oracle on aligned rows") {
  std::mt19937 rng(37);
  const auto d = oracle::random_dataset(rng, 8, 1, 1);
  const auto rep = fit_lvcf(d);

  std::vector<Eigen::Vector3d> rows;
  std::vector<double> ys;
  for (const auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j) {
      const long k = oracle::lvcf_predecessor(s.async_times, s.sync_times[j]);
      if (k < 0) continue;
      rows.push_back({1.0, s.sync_covariates(j, 0), s.async_covariates(k, 0)});
      ys.push_back(s.responses[j]);
    }
  Eigen::MatrixXd design(rows.size(), 3);
  Eigen::VectorXd y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    design.row(r) = rows[r];
    y(r) = ys[r];
  }
  const Eigen::VectorXd expect = oracle::normal_equations_solve(design, y);
  CHECK((rep.estimates - expect).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("centering+lvcf with zero residuals returns zero step-2 estimates") {
  std::mt19937 rng(41);
  auto d = oracle::random_dataset(rng, 8, 1, 1);
  // Y exactly linear in X with no intercept: centering residuals ~ 0
  for (auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j) s.responses[j] = 2.0 * s.sync_covariates(j, 0);
  const auto rep = fit_centering_lvcf(d, KernelSpec(0.4));
  // centered fit is exact, so alpha-hat and gamma-hat are numerically zero
  CHECK(std::abs(rep.estimates(0)) < 1e-9);
  CHECK(std::abs(rep.estimates(2)) < 1e-9);
}

TEST_CASE("centering+lvcf equals the two-oracle composition") {
  std::mt19937 rng(43);
  const auto d = oracle::random_dataset(rng, 6, 1, 1);
  const double h1 = 0.3;
  const auto rep = fit_centering_lvcf(d, KernelSpec(h1));

  // oracle step 1: centering by brute-force NW and elimination
  const auto pooled = pool_sync(d);
  Eigen::MatrixXd values(pooled.m(), 2);
  values.col(0) = pooled.y;
  values.col(1) = pooled.x.col(0);
  Eigen::MatrixXd means(pooled.m(), 2);
  for (long i = 0; i < pooled.m(); ++i) {
    Eigen::RowVector2d num = Eigen::RowVector2d::Zero();
    double mass = 0.0;
    for (long j = 0; j < pooled.m(); ++j) {
      const double w = kernel_eval((pooled.times[j] - pooled.times[i]) / h1) / h1;
      mass += w;
      num += w * values.row(j);
    }
    means.row(i) = num / mass;
  }
  const Eigen::VectorXd yc = pooled.y - means.col(0);
  const Eigen::MatrixXd xc = pooled.x - means.col(1);
  const Eigen::VectorXd beta = oracle::normal_equations_solve(xc, yc);

  // oracle step 2: OLS of raw residuals on (1, Z_carried)
  std::vector<Eigen::Vector2d> rows;
  std::vector<double> ys;
  long row = 0;
  for (const auto& s : d.subjects)
    for (long j = 0; j < s.n_sync(); ++j, ++row) {
      const long k = oracle::lvcf_predecessor(s.async_times, s.sync_times[j]);
      if (k < 0) continue;
      rows.push_back({1.0, s.async_covariates(k, 0)});
      ys.push_back(pooled.y(row) - pooled.x(row, 0) * beta(0));
    }
  Eigen::MatrixXd design(rows.size(), 2);
  Eigen::VectorXd y2(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    design.row(r) = rows[r];
    y2(r) = ys[r];
  }
  const Eigen::VectorXd theta2 = oracle::normal_equations_solve(design, y2);

  CHECK(rep.estimates(1) == Catch::Approx(beta(0)).margin(1e-10));
  CHECK(rep.estimates(0) == Catch::Approx(theta2(0)).margin(1e-10));
  CHECK(rep.estimates(2) == Catch::Approx(theta2(1)).margin(1e-10));
}

TEST_CASE("two-step gamma is invariant to covariate shifts") {
  std::mt19937 rng(47);
  auto d = oracle::random_dataset(rng, 10, 1, 1);
  auto shifted = d;
  for (auto& s : shifted.subjects) s.sync_covariates.array() += 4.0;
  const KernelSpec h1(0.3), h2(0.2);
  const auto a = fit_two_step(d, Step1Method::Centering, h1, h2);
  const auto b = fit_two_step(shifted, Step1Method::Centering, h1, h2);
  CHECK(std::abs(a.estimates(2) - b.estimates(2)) < 1e-8);
}

TEST_CASE("two-step covariance blocks carry both steps") {
  std::mt19937 rng(53);
  const auto d = oracle::random_dataset(rng, 10, 1, 1);
  const auto rep = fit_two_step(d, Step1Method::Centering, KernelSpec(0.3), KernelSpec(0.25));
  const auto step1 = fit_centering(d, KernelSpec(0.3));
  CHECK(rep.covariance(1, 1) == step1.report.covariance(0, 0));
  CHECK(rep.covariance(0, 1) == 0.0);  // no cross-step covariance reported
  CHECK(rep.covariance(1, 2) == 0.0);
  CHECK(rep.std_errors(1) == step1.report.std_errors(0));
}

TEST_CASE("empty per-subject grids do not disturb the fits") {
  std::mt19937 rng(61);
  auto d = oracle::random_dataset(rng, 8, 1, 1);
  auto with_empty = d;
  SubjectRecord no_sync;  // async-only subject: excluded from synchronous fits
  no_sync.id = "nosync";
  no_sync.sync_covariates = Eigen::MatrixXd(0, 1);
  no_sync.async_times = {0.4};
  no_sync.async_covariates = Eigen::MatrixXd{{1.0}};
  SubjectRecord no_async;  // sync-only subject: excluded from pair sums
  no_async.id = "noasync";
  no_async.sync_times = {0.5};
  no_async.responses = {1.0};
  no_async.sync_covariates = Eigen::MatrixXd{{0.5}};
  no_async.async_covariates = Eigen::MatrixXd(0, 1);
  with_empty.subjects.push_back(no_sync);

  const KernelSpec h1(0.3), h2(0.25);
  // async-only subject leaves the synchronous fit unchanged
  CHECK(fit_centering(with_empty, h1).report.estimates ==
        fit_centering(d, h1).report.estimates);
  CHECK(fit_plm(with_empty, h1).report.estimates == fit_plm(d, h1).report.estimates);

  // a sync-only subject contributes no pairs to the simultaneous fit
  auto with_noasync = d;
  with_noasync.subjects.push_back(no_async);
  CHECK(enumerate_pairs(with_noasync, h2).size() == enumerate_pairs(d, h2).size());
}

TEST_CASE("async sandwich covariances are symmetric positive semidefinite") {
  std::mt19937 rng(67);
  const auto d = oracle::random_dataset(rng, 12, 1, 1);
  const KernelSpec h1(0.3), h2(0.25);
  for (const FitReport& rep :
       {fit_two_step(d, Step1Method::Centering, h1, h2), fit_simultaneous(d, h2), fit_lvcf(d),
        fit_centering_lvcf(d, h1)}) {
    const Eigen::MatrixXd& c = rep.covariance;
    const double scale = c.cwiseAbs().maxCoeff();
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() <= 1e-8 * scale);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * scale);
  }
}
