#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <string>
#include <vector>

#include "asynclong/dataset.hpp"
#include "asynclong/fit_report.hpp"
#include "asynclong/kernel.hpp"
#include "asynclong/linalg.hpp"
#include "asynclong/sync_estimators.hpp"

namespace asynclong {

// One kernel-weighted (t_ij, s_ik) pair inside the bandwidth window.
struct PairWeight {
  int subject;
  long sync_j;
  long async_k;
  double gap;     // t_ij - s_ik
  double weight;  // K_h(gap)
};

// Visits every within-subject pair with |t_ij - s_ik| < h via a sliding
// window over the ascending async grid; O(M_i + L_i + pairs in support).
template <class F>
void for_each_pair(const SubjectRecord& s, double h, F&& f) {
  const long len = s.n_async();
  long klo = 0, khi = 0;
  for (long j = 0; j < s.n_sync(); ++j) {
    const double t = s.sync_times[j];
    while (klo < len && s.async_times[klo] <= t - h) ++klo;
    if (khi < klo) khi = klo;
    while (khi < len && s.async_times[khi] < t + h) ++khi;
    for (long kk = klo; kk < khi; ++kk) f(j, kk, t - s.async_times[kk]);
  }
}

inline std::vector<PairWeight> enumerate_pairs(const LongitudinalDataset& d,
                                               const KernelSpec& k) {
  std::vector<PairWeight> pairs;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    for_each_pair(d.subjects[i], k.bandwidth, [&](long j, long kk, double gap) {
      pairs.push_back({static_cast<int>(i), j, kk, gap, k(gap)});
    });
  }
  return pairs;
}

namespace detail {

// Square symmetric bread accumulated directly (kernel-weighted Gram), with
// the same condition/scale guards as the row-design path.
class GramSolver {
 public:
  GramSolver(const Eigen::MatrixXd& a, const std::vector<std::string>& names,
             double cond_limit = 1e12)
      : qr_(a), d_(a.cols()) {
    const Eigen::VectorXd diag = qr_.matrixR().diagonal().head(d_).cwiseAbs();
    const double max_pivot = d_ > 0 ? diag.maxCoeff() : 0.0;
    const double abs_floor = 1e-14 * std::max(a.cwiseAbs().maxCoeff(), 1e-300) * d_;
    std::vector<std::string> offending;
    for (long k = 0; k < d_; ++k)
      if (diag(k) <= abs_floor || diag(k) * cond_limit < max_pivot)
        offending.push_back(k < static_cast<long>(names.size())
                                ? names[qr_.colsPermutation().indices()(k)]
                                : "column " + std::to_string(k));
    if (!offending.empty())
      throw SingularityError("singular kernel-weighted system", offending);
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return qr_.solve(b); }

  Eigen::MatrixXd sandwich(const Eigen::MatrixXd& meat) const {
    Eigen::MatrixXd half = qr_.solve(meat);
    Eigen::MatrixXd cov = qr_.solve(half.transpose());
    return 0.5 * (cov + cov.transpose());
  }

 private:
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  long d_;
};

}  // namespace detail

// Kernel-weighted regression of step-1 residuals on (1, Z) over all
// within-subject pairs; theta = (alpha, gamma).
struct KernelResidualFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd covariance;
  long pairs = 0;
  double kernel_mass = 0.0;
};

// `omega[i]` holds subject i's residual at each synchronous observation.
inline KernelResidualFit fit_residuals_on_async(const LongitudinalDataset& d,
                                                const std::vector<Eigen::VectorXd>& omega,
                                                const KernelSpec& k) {
  const int dz = d.q + 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dz, dz);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dz);
  Eigen::VectorXd zt(dz);
  double mass = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto& s = d.subjects[i];
    for_each_pair(s, k.bandwidth, [&](long j, long kk, double gap) {
      const double w = k(gap);
      zt(0) = 1.0;
      zt.tail(d.q) = s.async_covariates.row(kk);
      a.noalias() += w * zt * zt.transpose();
      b.noalias() += w * zt * omega[i](j);
      mass += w;
      ++pairs;
    });
  }
  if (!(mass > 0.0))
    throw NumericalError("bandwidth too small for asynchrony gap: zero kernel mass over pairs");

  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("z", d.q)) names.push_back(nm);
  detail::GramSolver solver(a, names);

  KernelResidualFit fit;
  fit.theta = solver.solve(b);
  fit.pairs = pairs;
  fit.kernel_mass = mass;

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(dz, dz);
  Eigen::VectorXd u(dz);
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto& s = d.subjects[i];
    u.setZero();
    for_each_pair(s, k.bandwidth, [&](long j, long kk, double gap) {
      const double w = k(gap);
      zt(0) = 1.0;
      zt.tail(d.q) = s.async_covariates.row(kk);
      u.noalias() += w * zt * (omega[i](j) - zt.dot(fit.theta));
    });
    meat.noalias() += u * u.transpose();
  }
  fit.covariance = solver.sandwich(meat);
  return fit;
}

namespace detail {

inline std::vector<Eigen::VectorXd> raw_residuals(const LongitudinalDataset& d,
                                                  const Eigen::VectorXd& beta) {
  std::vector<Eigen::VectorXd> omega(d.subjects.size());
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto& s = d.subjects[i];
    omega[i] = Eigen::Map<const Eigen::VectorXd>(s.responses.data(), s.n_sync()) -
               s.sync_covariates * beta;
  }
  return omega;
}

// Assembles the (alpha, x..., z...) report of a two-step method: the x block
// carries the step-1 covariance, the (alpha, z) block the step-2 covariance,
// no cross-covariance.
inline FitReport combine_two_step(const LongitudinalDataset& d, const std::string& method,
                                  const FitReport& step1, const Eigen::VectorXd& theta2,
                                  const Eigen::MatrixXd& cov2, std::vector<double> bandwidths,
                                  long pairs, long dropped) {
  FitReport rep;
  rep.method = method;
  rep.param_names = {"alpha"};
  for (const auto& nm : covariate_names("x", d.p)) rep.param_names.push_back(nm);
  for (const auto& nm : covariate_names("z", d.q)) rep.param_names.push_back(nm);

  const long dim = 1 + d.p + d.q;
  rep.estimates.resize(dim);
  rep.estimates(0) = theta2(0);
  rep.estimates.segment(1, d.p) = step1.estimates;
  rep.estimates.tail(d.q) = theta2.tail(d.q);

  rep.covariance = Eigen::MatrixXd::Zero(dim, dim);
  rep.covariance(0, 0) = cov2(0, 0);
  rep.covariance.block(1, 1, d.p, d.p) = step1.covariance;
  rep.covariance.block(1 + d.p, 1 + d.p, d.q, d.q) = cov2.bottomRightCorner(d.q, d.q);
  rep.covariance.block(0, 1 + d.p, 1, d.q) = cov2.block(0, 1, 1, d.q);
  rep.covariance.block(1 + d.p, 0, d.q, 1) = cov2.block(1, 0, d.q, 1);

  rep.bandwidths = std::move(bandwidths);
  rep.observations_used = step1.observations_used;
  rep.pairs_used = pairs;
  rep.dropped = dropped;
  rep.finalize();
  return rep;
}

}  // namespace detail

enum class Step1Method { Plm, Centering };

// Two-step estimator: synchronous fit of beta (PLM or centering), then
// kernel-weighted regression of the raw residuals Y - X'beta on (1, Z) over
// all within-subject pairs.
inline FitReport fit_two_step(const LongitudinalDataset& d, Step1Method method,
                              const KernelSpec& h1, const KernelSpec& h2) {
  const SyncFit step1 =
      method == Step1Method::Plm ? fit_plm(d, h1) : fit_centering(d, h1);
  const auto omega = detail::raw_residuals(d, step1.report.estimates);
  const KernelResidualFit step2 = fit_residuals_on_async(d, omega, h2);
  const std::string tag = method == Step1Method::Plm ? "plm+ks" : "centering+ks";
  return detail::combine_two_step(d, tag, step1.report, step2.theta, step2.covariance,
                                  {h1.bandwidth, h2.bandwidth}, step2.pairs, 0);
}

// Simultaneous kernel-weighted estimating equation over within-subject pairs
// with design (1, X(t), Z(s)).
inline FitReport fit_simultaneous(const LongitudinalDataset& d, const KernelSpec& k) {
  const int dim = 1 + d.p + d.q;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd wt(dim);
  double mass = 0.0;
  long pairs = 0;
  long m = 0;
  for (const auto& s : d.subjects) {
    m += s.n_sync();
    for_each_pair(s, k.bandwidth, [&](long j, long kk, double gap) {
      const double w = k(gap);
      wt(0) = 1.0;
      wt.segment(1, d.p) = s.sync_covariates.row(j);
      wt.tail(d.q) = s.async_covariates.row(kk);
      a.noalias() += w * wt * wt.transpose();
      b.noalias() += w * wt * s.responses[j];
      mass += w;
      ++pairs;
    });
  }
  if (!(mass > 0.0))
    throw NumericalError("bandwidth too small for asynchrony gap: zero kernel mass over pairs");

  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("x", d.p)) names.push_back(nm);
  for (const auto& nm : detail::covariate_names("z", d.q)) names.push_back(nm);
  detail::GramSolver solver(a, names);

  FitReport rep;
  rep.method = "ks";
  rep.param_names = names;
  rep.estimates = solver.solve(b);

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd u(dim);
  for (const auto& s : d.subjects) {
    u.setZero();
    for_each_pair(s, k.bandwidth, [&](long j, long kk, double gap) {
      const double w = k(gap);
      wt(0) = 1.0;
      wt.segment(1, d.p) = s.sync_covariates.row(j);
      wt.tail(d.q) = s.async_covariates.row(kk);
      u.noalias() += w * wt * (s.responses[j] - wt.dot(rep.estimates));
    });
    meat.noalias() += u * u.transpose();
  }
  rep.covariance = solver.sandwich(meat);
  rep.bandwidths = {k.bandwidth};
  rep.observations_used = m;
  rep.pairs_used = pairs;
  rep.finalize();
  return rep;
}

// Last value carried forward: each synchronous observation is paired with the
// subject's latest asynchronous observation at or before it; observations
// with no predecessor are dropped.
struct LvcfRow {
  int subject;
  long sync_j;
  long async_k;
};

struct LvcfAlignment {
  std::vector<LvcfRow> rows;
  long dropped = 0;
};

inline LvcfAlignment lvcf_align(const LongitudinalDataset& d) {
  LvcfAlignment out;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto& s = d.subjects[i];
    for (long j = 0; j < s.n_sync(); ++j) {
      const auto it =
          std::upper_bound(s.async_times.begin(), s.async_times.end(), s.sync_times[j]);
      if (it == s.async_times.begin()) {
        ++out.dropped;
        continue;
      }
      out.rows.push_back({static_cast<int>(i), j, (it - s.async_times.begin()) - 1});
    }
  }
  return out;
}

namespace detail {

inline std::vector<std::pair<long, long>> cluster_runs(const std::vector<LvcfRow>& rows) {
  std::vector<std::pair<long, long>> runs;
  long lo = 0;
  for (long r = 1; r <= static_cast<long>(rows.size()); ++r) {
    if (r == static_cast<long>(rows.size()) || rows[r].subject != rows[lo].subject) {
      runs.emplace_back(lo, r);
      lo = r;
    }
  }
  return runs;
}

}  // namespace detail

// Pooled least squares of Y on (1, X, Z_carried) over the LVCF alignment.
inline FitReport fit_lvcf(const LongitudinalDataset& d) {
  const LvcfAlignment aligned = lvcf_align(d);
  if (aligned.rows.empty()) throw DataError("fit_lvcf: empty LVCF alignment");
  const long rows = static_cast<long>(aligned.rows.size());
  const long dim = 1 + d.p + d.q;
  Eigen::MatrixXd design(rows, dim);
  Eigen::VectorXd y(rows);
  for (long r = 0; r < rows; ++r) {
    const auto& row = aligned.rows[r];
    const auto& s = d.subjects[row.subject];
    design(r, 0) = 1.0;
    design.row(r).segment(1, d.p) = s.sync_covariates.row(row.sync_j);
    design.row(r).tail(d.q) = s.async_covariates.row(row.async_k);
    y(r) = s.responses[row.sync_j];
  }
  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("x", d.p)) names.push_back(nm);
  for (const auto& nm : detail::covariate_names("z", d.q)) names.push_back(nm);

  DesignQr qr(design, names, max_column_norm(design));
  FitReport rep;
  rep.method = "lvcf";
  rep.param_names = names;
  rep.estimates = qr.solve(y);
  const Eigen::VectorXd resid = y - design * rep.estimates;
  rep.covariance =
      sandwich(qr, detail::clustered_meat(design, resid, detail::cluster_runs(aligned.rows)));
  rep.observations_used = rows;
  rep.dropped = aligned.dropped;
  rep.finalize();
  return rep;
}

// Two-step with LVCF in the second step: centering fit of beta, then OLS of
// the raw residuals on (1, Z_carried) over retained observations.
inline FitReport fit_centering_lvcf(const LongitudinalDataset& d, const KernelSpec& h1) {
  const SyncFit step1 = fit_centering(d, h1);
  const auto omega = detail::raw_residuals(d, step1.report.estimates);

  const LvcfAlignment aligned = lvcf_align(d);
  if (aligned.rows.empty()) throw DataError("fit_centering_lvcf: empty LVCF alignment");
  const long rows = static_cast<long>(aligned.rows.size());
  Eigen::MatrixXd design(rows, 1 + d.q);
  Eigen::VectorXd y(rows);
  for (long r = 0; r < rows; ++r) {
    const auto& row = aligned.rows[r];
    design(r, 0) = 1.0;
    design.row(r).tail(d.q) = d.subjects[row.subject].async_covariates.row(row.async_k);
    y(r) = omega[row.subject](row.sync_j);
  }
  std::vector<std::string> names{"alpha"};
  for (const auto& nm : detail::covariate_names("z", d.q)) names.push_back(nm);

  DesignQr qr(design, names, max_column_norm(design));
  const Eigen::VectorXd theta2 = qr.solve(y);
  const Eigen::VectorXd resid = y - design * theta2;
  const Eigen::MatrixXd cov2 =
      sandwich(qr, detail::clustered_meat(design, resid, detail::cluster_runs(aligned.rows)));

  return detail::combine_two_step(d, "centering+lvcf", step1.report, theta2, cov2,
                                  {h1.bandwidth}, rows, aligned.dropped);
}

// Kernel-weighted squared prediction error of a fitted (beta, alpha, gamma)
// over all within-subject pairs of `d`.
struct PairPredictionError {
  double num = 0.0;
  double den = 0.0;
  long pairs = 0;
};

inline PairPredictionError pair_prediction_error(const LongitudinalDataset& d,
                                                 const Eigen::VectorXd& beta,
                                                 const Eigen::VectorXd& theta2,
                                                 const KernelSpec& k) {
  PairPredictionError pe;
  for (const auto& s : d.subjects) {
    for_each_pair(s, k.bandwidth, [&](long j, long kk, double gap) {
      const double w = k(gap);
      const double pred = s.sync_covariates.row(j).dot(beta) + theta2(0) +
                          s.async_covariates.row(kk).dot(theta2.tail(theta2.size() - 1));
      const double e = s.responses[j] - pred;
      pe.num += w * e * e;
      pe.den += w;
      ++pe.pairs;
    });
  }
  return pe;
}

}  // namespace asynclong
