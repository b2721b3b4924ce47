#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "asynclong/errors.hpp"
#include "asynclong/kernel.hpp"

namespace asynclong {

// Ascending copy of a time vector plus the permutation back to input order.
struct SortedTimes {
  std::vector<double> values;
  std::vector<int> order;  // values[k] = raw[order[k]]

  static SortedTimes build(std::span<const double> raw) {
    SortedTimes st;
    st.order.resize(raw.size());
    std::iota(st.order.begin(), st.order.end(), 0);
    std::sort(st.order.begin(), st.order.end(),
              [&](int a, int b) { return raw[a] < raw[b]; });
    st.values.resize(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) st.values[k] = raw[st.order[k]];
    return st;
  }

  // Indices [lo, hi) of sorted values strictly inside (center - radius, center + radius).
  std::pair<long, long> window(double center, double radius) const {
    const auto lo = std::upper_bound(values.begin(), values.end(), center - radius);
    const auto hi = std::lower_bound(values.begin(), values.end(), center + radius);
    return {lo - values.begin(), hi - values.begin()};
  }
};

// Nadaraya-Watson mean of `values` rows at t0: sum K_h(t - t0) v / sum K_h(t - t0),
// pooled over all rows. Throws EmptyWindowError on zero total kernel mass.
inline Eigen::RowVectorXd nw_mean(std::span<const double> sample_times,
                                  const Eigen::MatrixXd& sample_values, double t0,
                                  const KernelSpec& k) {
  if (static_cast<long>(sample_times.size()) != sample_values.rows())
    throw std::invalid_argument("nw_mean: one value row per sample time required");
  const double h = k.bandwidth;
  Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(sample_values.cols());
  double mass = 0.0;
  for (std::size_t j = 0; j < sample_times.size(); ++j) {
    const double w = k(sample_times[j] - t0);
    if (w > 0.0) {
      mass += w;
      num += w * sample_values.row(j);
    }
  }
  if (!(mass > 0.0)) throw EmptyWindowError(t0, h);
  return num / mass;
}

// Batch Nadaraya-Watson smoother over a fixed pooled sample; evaluation at the
// sample's own times uses a sliding window over the sorted grid.
class NwSmoother {
 public:
  NwSmoother(std::span<const double> times, Eigen::MatrixXd values, const KernelSpec& k)
      : sorted_(SortedTimes::build(times)), values_(std::move(values)), k_(k) {
    if (static_cast<long>(times.size()) != values_.rows())
      throw std::invalid_argument("NwSmoother: one value row per time required");
  }

  Eigen::RowVectorXd at(double t0) const {
    const auto [lo, hi] = sorted_.window(t0, k_.bandwidth);
    Eigen::RowVectorXd num = Eigen::RowVectorXd::Zero(values_.cols());
    double mass = 0.0;
    for (long idx = lo; idx < hi; ++idx) {
      const double w = k_(sorted_.values[idx] - t0);
      mass += w;
      num += w * values_.row(sorted_.order[idx]);
    }
    if (!(mass > 0.0)) throw EmptyWindowError(t0, k_.bandwidth);
    return num / mass;
  }

  // Means evaluated at every sample time, returned in input order.
  Eigen::MatrixXd at_sample_times() const {
    const long m = values_.rows();
    Eigen::MatrixXd out(m, values_.cols());
    for (long pos = 0; pos < m; ++pos) {
      const double t0 = sorted_.values[pos];
      out.row(sorted_.order[pos]) = at(t0);
    }
    return out;
  }

 private:
  SortedTimes sorted_;
  Eigen::MatrixXd values_;
  KernelSpec k_;
};

// One row of the local-linear smoother matrix S:
//   s_ij = w_ij / sum_j w_ij,  w_ij = K_h(d_ij) {q_{i,2} - d_ij q_{i,1}},
//   d_ij = T*_i - T*_j,        q_{i,l} = sum_j K_h(d_ij) d_ij^l.
struct SmootherRow {
  long target = 0;
  std::vector<int> neighbors;       // j with |T*_i - T*_j| < h, input-order indices
  std::vector<double> raw_weights;  // w_ij
  std::vector<double> weights;      // s_ij
};

class LocalLinearSmoother {
 public:
  LocalLinearSmoother(std::span<const double> times, const KernelSpec& k)
      : times_(times.begin(), times.end()), sorted_(SortedTimes::build(times)), k_(k) {
    if (times_.empty()) throw std::invalid_argument("LocalLinearSmoother: times must be nonempty");
  }

  long size() const { return static_cast<long>(times_.size()); }

  void row_into(long i, SmootherRow& out) const {
    if (i < 0 || i >= size()) throw std::invalid_argument("smoother row index out of range");
    const double center = times_[i];
    const auto [lo, hi] = sorted_.window(center, k_.bandwidth);
    out.target = i;
    out.neighbors.clear();
    out.raw_weights.clear();
    out.weights.clear();

    double q0 = 0.0, q1 = 0.0, q2 = 0.0;
    for (long idx = lo; idx < hi; ++idx) {
      const double d = center - sorted_.values[idx];
      const double kap = k_(d);
      out.neighbors.push_back(sorted_.order[idx]);
      out.raw_weights.push_back(kap);  // kappa for now, finished below
      q0 += kap;
      q1 += kap * d;
      q2 += kap * d * d;
    }
    if (!(q0 > 0.0)) throw DegenerateSmootherRowError(i);

    double denom = 0.0;
    for (std::size_t r = 0; r < out.neighbors.size(); ++r) {
      const double d = center - sorted_.values[lo + static_cast<long>(r)];
      const double w = out.raw_weights[r] * (q2 - d * q1);
      out.raw_weights[r] = w;
      denom += w;
    }

    if (q2 == 0.0 || denom <= 1e-12 * q0 * q2) {
      // Zero time spread inside the window (all support at T*_i): the
      // local-linear denominator q0 q2 - q1^2 vanishes and the row collapses
      // to the local-constant (Nadaraya-Watson) limit.
      out.weights.resize(out.neighbors.size());
      long idx = lo;
      for (std::size_t r = 0; r < out.neighbors.size(); ++r, ++idx)
        out.weights[r] = k_(center - sorted_.values[idx]) / q0;
      return;
    }
    out.weights.resize(out.neighbors.size());
    for (std::size_t r = 0; r < out.neighbors.size(); ++r)
      out.weights[r] = out.raw_weights[r] / denom;
  }

  SmootherRow row(long i) const {
    SmootherRow r;
    row_into(i, r);
    return r;
  }

  // (I - S) * columns, computed row by row without materializing S.
  Eigen::MatrixXd annihilate(const Eigen::MatrixXd& columns) const {
    if (columns.rows() != size())
      throw std::invalid_argument("annihilate: one row per time required");
    Eigen::MatrixXd out(columns.rows(), columns.cols());
    SmootherRow row;
    Eigen::RowVectorXd acc(columns.cols());
    for (long i = 0; i < size(); ++i) {
      row_into(i, row);
      acc.setZero();
      for (std::size_t r = 0; r < row.neighbors.size(); ++r)
        acc += row.weights[r] * columns.row(row.neighbors[r]);
      out.row(i) = columns.row(i) - acc;
    }
    return out;
  }

 private:
  std::vector<double> times_;
  SortedTimes sorted_;
  KernelSpec k_;
};

inline SmootherRow local_linear_weights(std::span<const double> times, long i,
                                        const KernelSpec& k) {
  return LocalLinearSmoother(times, k).row(i);
}

inline Eigen::MatrixXd apply_annihilator(std::span<const double> times, const KernelSpec& k,
                                         const Eigen::MatrixXd& columns) {
  return LocalLinearSmoother(times, k).annihilate(columns);
}

// Local-linear level estimate a0(t0) of pooled values at an arbitrary point,
// i.e. the intercept of the kernel-weighted line fit. Falls back to the
// local-constant mean on zero time spread.
inline double local_linear_level(std::span<const double> times, std::span<const double> values,
                                 double t0, const KernelSpec& k) {
  if (times.size() != values.size())
    throw std::invalid_argument("local_linear_level: size mismatch");
  double q0 = 0.0, q1 = 0.0, q2 = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double d = t0 - times[j];
    const double kap = k(d);
    q0 += kap;
    q1 += kap * d;
    q2 += kap * d * d;
  }
  if (!(q0 > 0.0)) throw EmptyWindowError(t0, k.bandwidth);
  double num = 0.0, denom = 0.0;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const double d = t0 - times[j];
    const double w = k(d) * (q2 - d * q1);
    num += w * values[j];
    denom += w;
  }
  if (q2 == 0.0 || denom <= 1e-12 * q0 * q2) {
    num = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j) num += k(t0 - times[j]) * values[j];
    return num / q0;
  }
  return num / denom;
}

}  // namespace asynclong
