#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "asynclong/errors.hpp"

namespace asynclong {

// One subject's two observation grids: the synchronous grid carries the
// response Y and covariates X, the asynchronous grid carries Z. The grids
// may have different lengths and need not intersect.
struct SubjectRecord {
  std::string id;
  std::vector<double> sync_times;   // ascending, in [0, 1]
  std::vector<double> responses;    // Y at sync_times
  Eigen::MatrixXd sync_covariates;  // M_i x p, rows X(t_ij)
  std::vector<double> async_times;  // ascending, in [0, 1]
  Eigen::MatrixXd async_covariates; // L_i x q, rows Z(s_ik)

  long n_sync() const { return static_cast<long>(sync_times.size()); }
  long n_async() const { return static_cast<long>(async_times.size()); }

  friend bool operator==(const SubjectRecord& a, const SubjectRecord& b) {
    return a.id == b.id && a.sync_times == b.sync_times && a.responses == b.responses &&
           a.sync_covariates == b.sync_covariates && a.async_times == b.async_times &&
           a.async_covariates == b.async_covariates;
  }
};

// Affine map applied to raw times on ingestion: normalized = (t - offset) / scale.
struct TimeRescale {
  double offset = 0.0;
  double scale = 1.0;
  bool applied = false;
};

struct LongitudinalDataset {
  std::vector<SubjectRecord> subjects;
  int p = 0;  // synchronous covariate dimension
  int q = 0;  // asynchronous covariate dimension
  TimeRescale time_rescale;

  long n() const { return static_cast<long>(subjects.size()); }
  long total_sync_obs() const {
    long m = 0;
    for (const auto& s : subjects) m += s.n_sync();
    return m;
  }
  long total_async_obs() const {
    long l = 0;
    for (const auto& s : subjects) l += s.n_async();
    return l;
  }

  friend bool operator==(const LongitudinalDataset& a, const LongitudinalDataset& b) {
    return a.subjects == b.subjects && a.p == b.p && a.q == b.q;
  }
};

struct Violation {
  std::string subject_id;  // empty for dataset-level violations
  std::string field;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

namespace detail {

inline bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] > v[i - 1])) return false;
  return true;
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

inline bool within_unit(const std::vector<double>& v) {
  for (double x : v)
    if (x < 0.0 || x > 1.0) return false;
  return true;
}

}  // namespace detail

// Report-only check of every dataset invariant; never mutates the input.
inline ValidationReport validate_dataset(const LongitudinalDataset& d) {
  ValidationReport report;
  if (d.subjects.empty())
    report.push_back({"", "subjects", "dataset has no subjects"});

  for (const auto& s : d.subjects) {
    if (!detail::strictly_increasing(s.sync_times))
      report.push_back({s.id, "sync_times", "times not increasing"});
    if (!detail::strictly_increasing(s.async_times))
      report.push_back({s.id, "async_times", "times not increasing"});
    if (!detail::within_unit(s.sync_times))
      report.push_back({s.id, "sync_times", "times outside [0, 1]"});
    if (!detail::within_unit(s.async_times))
      report.push_back({s.id, "async_times", "times outside [0, 1]"});
    if (static_cast<long>(s.responses.size()) != s.n_sync())
      report.push_back({s.id, "responses", "length does not match sync_times"});
    if (s.sync_covariates.rows() != s.n_sync())
      report.push_back({s.id, "sync_covariates", "row count does not match sync_times"});
    if (s.async_covariates.rows() != s.n_async())
      report.push_back({s.id, "async_covariates", "row count does not match async_times"});
    if (s.sync_covariates.cols() != d.p)
      report.push_back({s.id, "sync_covariates", "dimension mismatch"});
    if (s.async_covariates.cols() != d.q)
      report.push_back({s.id, "async_covariates", "dimension mismatch"});
    if (!detail::all_finite(s.sync_times) || !detail::all_finite(s.async_times) ||
        !detail::all_finite(s.responses) || !detail::all_finite(s.sync_covariates) ||
        !detail::all_finite(s.async_covariates))
      report.push_back({s.id, "values", "non-finite entry"});
  }

  if (d.total_sync_obs() < static_cast<long>(d.p) + 2)
    report.push_back({"", "subjects",
                      "too few synchronous observations for identifiability (m < p + 2)"});
  return report;
}

inline void require_valid(const LongitudinalDataset& d) {
  auto report = validate_dataset(d);
  if (!report.empty()) {
    const auto& v = report.front();
    throw DataError("invalid dataset: subject '" + v.subject_id + "' field '" + v.field +
                    "': " + v.message +
                    (report.size() > 1 ? " (+" + std::to_string(report.size() - 1) + " more)"
                                       : ""));
  }
}

// Synchronous observations of all subjects concatenated in input order
// (subjects with an empty synchronous grid contribute nothing).
struct PooledSync {
  std::vector<double> times;    // length m
  Eigen::VectorXd y;            // length m
  Eigen::MatrixXd x;            // m x p
  std::vector<int> subject_of;  // length m, index into dataset.subjects
  std::vector<std::pair<long, long>> rows_of_subject;  // per subject: [lo, hi)

  long m() const { return static_cast<long>(times.size()); }
};

inline PooledSync pool_sync(const LongitudinalDataset& d) {
  PooledSync pooled;
  const long m = d.total_sync_obs();
  pooled.times.reserve(m);
  pooled.y.resize(m);
  pooled.x.resize(m, d.p);
  pooled.subject_of.reserve(m);
  pooled.rows_of_subject.reserve(d.subjects.size());
  long row = 0;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    const auto& s = d.subjects[i];
    const long lo = row;
    for (long j = 0; j < s.n_sync(); ++j, ++row) {
      pooled.times.push_back(s.sync_times[j]);
      pooled.y(row) = s.responses[j];
      pooled.x.row(row) = s.sync_covariates.row(j);
      pooled.subject_of.push_back(static_cast<int>(i));
    }
    pooled.rows_of_subject.emplace_back(lo, row);
  }
  return pooled;
}

}  // namespace asynclong
