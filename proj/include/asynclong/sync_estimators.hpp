#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "asynclong/dataset.hpp"
#include "asynclong/fit_report.hpp"
#include "asynclong/kernel.hpp"
#include "asynclong/linalg.hpp"
#include "asynclong/smoothing.hpp"

namespace asynclong {

// Per-subject (time, residual) pairs from a synchronous fit.
struct ResidualSet {
  std::vector<std::vector<std::pair<double, double>>> by_subject;
};

struct SyncFit {
  FitReport report;
  ResidualSet residuals;
};

namespace detail {

inline std::vector<std::string> covariate_names(const std::string& prefix, int count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (int j = 1; j <= count; ++j) names.push_back(prefix + std::to_string(j));
  return names;
}

// Sum over subjects of (sum_j x_ij e_ij)^{x2}: the meat of a subject-clustered
// sandwich.
inline Eigen::MatrixXd clustered_meat(const Eigen::MatrixXd& design, const Eigen::VectorXd& resid,
                                      const std::vector<std::pair<long, long>>& cluster_rows) {
  const long d = design.cols();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd u(d);
  for (const auto& [lo, hi] : cluster_rows) {
    if (hi <= lo) continue;
    u.setZero();
    for (long r = lo; r < hi; ++r) u += design.row(r).transpose() * resid(r);
    meat.noalias() += u * u.transpose();
  }
  return meat;
}

inline ResidualSet residuals_by_subject(const LongitudinalDataset& d, const PooledSync& pooled,
                                        const Eigen::VectorXd& resid) {
  ResidualSet rs;
  rs.by_subject.resize(d.subjects.size());
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto [lo, hi] = pooled.rows_of_subject[i];
    rs.by_subject[i].reserve(hi - lo);
    for (long r = lo; r < hi; ++r)
      rs.by_subject[i].emplace_back(pooled.times[r], resid(r));
  }
  return rs;
}

inline FitReport clustered_ols(const PooledSync& pooled, const Eigen::MatrixXd& design,
                               const std::vector<std::string>& names, const Eigen::VectorXd& y,
                               const std::string& method) {
  DesignQr qr(design, names, max_column_norm(design));
  FitReport rep;
  rep.method = method;
  rep.param_names = names;
  rep.estimates = qr.solve(y);
  const Eigen::VectorXd resid = y - design * rep.estimates;
  rep.covariance = sandwich(qr, clustered_meat(design, resid, pooled.rows_of_subject));
  rep.observations_used = pooled.m();
  rep.finalize();
  return rep;
}

}  // namespace detail

// Pooled least squares of Y on (1, X), omitting Z entirely. Subject-clustered
// sandwich covariance.
inline FitReport fit_naive(const LongitudinalDataset& d) {
  const PooledSync pooled = pool_sync(d);
  const long m = pooled.m();
  Eigen::MatrixXd design(m, d.p + 1);
  design.col(0).setOnes();
  design.rightCols(d.p) = pooled.x;
  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("x", d.p)) names.push_back(nm);
  return detail::clustered_ols(pooled, design, names, pooled.y, "naive");
}

// Partial linear model: local-linear annihilator (I - S) applied to the pooled
// response and design, then least squares. Covariance D^{-1} V D^{-1} with V
// built from per-subject residual blocks.
inline SyncFit fit_plm(const LongitudinalDataset& d, const KernelSpec& k) {
  const PooledSync pooled = pool_sync(d);
  const long m = pooled.m();
  Eigen::MatrixXd combined(m, d.p + 1);
  combined.leftCols(d.p) = pooled.x;
  combined.col(d.p) = pooled.y;

  const LocalLinearSmoother smoother(pooled.times, k);
  const Eigen::MatrixXd annihilated = smoother.annihilate(combined);
  const Eigen::MatrixXd g = annihilated.leftCols(d.p);
  const Eigen::VectorXd gy = annihilated.col(d.p);

  const auto names = detail::covariate_names("x", d.p);
  DesignQr qr(g, names, max_column_norm(pooled.x));

  SyncFit fit;
  fit.report.method = "plm";
  fit.report.param_names = names;
  fit.report.estimates = qr.solve(gy);
  const Eigen::VectorXd eps = gy - g * fit.report.estimates;  // (I-S)(Y - X beta)
  fit.report.covariance = sandwich(qr, detail::clustered_meat(g, eps, pooled.rows_of_subject));
  fit.report.bandwidths = {k.bandwidth};
  fit.report.observations_used = m;
  fit.report.finalize();
  fit.residuals = detail::residuals_by_subject(d, pooled, eps);
  return fit;
}

// Fitted non-parametric intercept of the partial linear model on a regular
// grid, given the fitted slope.
inline std::vector<std::pair<double, double>> plm_intercept_curve(const LongitudinalDataset& d,
                                                                  const KernelSpec& k,
                                                                  const Eigen::VectorXd& beta,
                                                                  int grid_size = 101) {
  const PooledSync pooled = pool_sync(d);
  const Eigen::VectorXd level = pooled.y - pooled.x * beta;
  std::vector<double> values(level.data(), level.data() + level.size());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    const double t0 = grid_size > 1 ? static_cast<double>(g) / (grid_size - 1) : 0.0;
    double a0;
    try {
      a0 = local_linear_level(pooled.times, values, t0, k);
    } catch (const EmptyWindowError&) {
      a0 = std::numeric_limits<double>::quiet_NaN();
    }
    curve.emplace_back(t0, a0);
  }
  return curve;
}

// Centering estimator: subtract pooled Nadaraya-Watson means from Y and X at
// each observation, regress the centered response on the centered design.
inline SyncFit fit_centering(const LongitudinalDataset& d, const KernelSpec& k) {
  const PooledSync pooled = pool_sync(d);
  const long m = pooled.m();
  Eigen::MatrixXd values(m, d.p + 1);
  values.col(0) = pooled.y;
  values.rightCols(d.p) = pooled.x;

  const NwSmoother nw(pooled.times, values, k);
  const Eigen::MatrixXd means = nw.at_sample_times();
  const Eigen::VectorXd yc = pooled.y - means.col(0);
  const Eigen::MatrixXd xc = pooled.x - means.rightCols(d.p);

  const auto names = detail::covariate_names("x", d.p);
  DesignQr qr(xc, names, max_column_norm(pooled.x));

  SyncFit fit;
  fit.report.method = "centering";
  fit.report.param_names = names;
  fit.report.estimates = qr.solve(yc);
  const Eigen::VectorXd resid = yc - xc * fit.report.estimates;
  fit.report.covariance = sandwich(qr, detail::clustered_meat(xc, resid, pooled.rows_of_subject));
  fit.report.bandwidths = {k.bandwidth};
  fit.report.observations_used = m;
  fit.report.finalize();
  fit.residuals = detail::residuals_by_subject(d, pooled, resid);
  return fit;
}

// Gold-standard pooled fit of Y on (1, X, Z) when Z is observed on the
// synchronous grid (simulation only).
inline FitReport fit_pooled_full(const LongitudinalDataset& d) {
  for (const auto& s : d.subjects)
    if (s.async_times != s.sync_times)
      throw DataError("fit_pooled_full: subject '" + s.id +
                      "' does not have Z on the synchronous grid");
  const PooledSync pooled = pool_sync(d);
  const long m = pooled.m();
  Eigen::MatrixXd design(m, 1 + d.p + d.q);
  design.col(0).setOnes();
  design.middleCols(1, d.p) = pooled.x;
  {
    long row = 0;
    for (const auto& s : d.subjects)
      for (long j = 0; j < s.n_sync(); ++j, ++row)
        design.row(row).tail(d.q) = s.async_covariates.row(j);
  }
  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("x", d.p)) names.push_back(nm);
  for (const auto& nm : detail::covariate_names("z", d.q)) names.push_back(nm);
  return detail::clustered_ols(pooled, design, names, pooled.y, "full");
}

enum class ScreenMode { Separate, Joint };

struct ScreenRow {
  std::string z_name;
  std::string x_name;
  double estimate;
  double se;
  double p_value;
};

struct ScreenTable {
  std::vector<ScreenRow> rows;
  long pairs_used = 0;
  long dropped = 0;
};

// Diagnostic regressions of each asynchronous component on the synchronous
// covariates, pairing by last-value-carried-forward of X onto the
// asynchronous grid. Separate mode: q x p univariate regressions; joint mode:
// each Z component on all X components at once.
inline ScreenTable screen_correlation(const LongitudinalDataset& d, ScreenMode mode) {
  std::vector<double> pair_x;  // row-major p per pair
  std::vector<double> pair_z;  // row-major q per pair
  std::vector<std::pair<long, long>> cluster_rows;
  long dropped = 0;
  long rows = 0;
  for (const auto& s : d.subjects) {
    const long lo = rows;
    for (long kk = 0; kk < s.n_async(); ++kk) {
      // latest synchronous time <= s_ik
      const auto it = std::upper_bound(s.sync_times.begin(), s.sync_times.end(),
                                       s.async_times[kk]);
      if (it == s.sync_times.begin()) {
        ++dropped;
        continue;
      }
      const long j = (it - s.sync_times.begin()) - 1;
      for (int c = 0; c < d.p; ++c) pair_x.push_back(s.sync_covariates(j, c));
      for (int r = 0; r < d.q; ++r) pair_z.push_back(s.async_covariates(kk, r));
      ++rows;
    }
    if (rows > lo) cluster_rows.emplace_back(lo, rows);
  }
  if (rows == 0) throw DataError("screen_correlation: no aligned pairs");

  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      pair_x.data(), rows, d.p);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> zm(
      pair_z.data(), rows, d.q);

  const auto xnames = detail::covariate_names("x", d.p);
  const auto znames = detail::covariate_names("z", d.q);

  ScreenTable table;
  table.pairs_used = rows;
  table.dropped = dropped;

  auto run = [&](const Eigen::MatrixXd& design, const std::vector<std::string>& names,
                 const Eigen::VectorXd& y, const std::string& z_name,
                 const std::vector<int>& report_cols) {
    DesignQr qr(design, names, max_column_norm(design));
    const Eigen::VectorXd coef = qr.solve(y);
    const Eigen::VectorXd resid = y - design * coef;
    const Eigen::MatrixXd cov =
        sandwich(qr, detail::clustered_meat(design, resid, cluster_rows));
    for (int c : report_cols) {
      const double se = cov(c, c) > 0.0 ? std::sqrt(cov(c, c)) : 0.0;
      table.rows.push_back({z_name, names[c], coef(c), se, normal_p_value(coef(c), se)});
    }
  };

  for (int r = 0; r < d.q; ++r) {
    const Eigen::VectorXd zr = zm.col(r);
    if (mode == ScreenMode::Separate) {
      for (int c = 0; c < d.p; ++c) {
        Eigen::MatrixXd design(rows, 2);
        design.col(0).setOnes();
        design.col(1) = xm.col(c);
        run(design, {"alpha", xnames[c]}, zr, znames[r], {1});
      }
    } else {
      Eigen::MatrixXd design(rows, 1 + d.p);
      design.col(0).setOnes();
      design.rightCols(d.p) = xm;
      std::vector<std::string> names{"alpha"};
      names.insert(names.end(), xnames.begin(), xnames.end());
      std::vector<int> cols;
      for (int c = 0; c < d.p; ++c) cols.push_back(1 + c);
      run(design, names, zr, znames[r], cols);
    }
  }
  return table;
}

}  // namespace asynclong
