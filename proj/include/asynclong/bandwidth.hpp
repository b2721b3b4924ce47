#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "asynclong/async_estimators.hpp"
#include "asynclong/dataset.hpp"
#include "asynclong/rng.hpp"
#include "asynclong/sync_estimators.hpp"

namespace asynclong {

struct BandwidthGrid {
  std::vector<double> values;  // ascending, in (0, 1]
  std::string provenance;
  int folds = 5;
  std::uint64_t seed = 0;
};

// Geometrically spaced grid from n^{lo_exp} to n^{hi_exp}, endpoints included.
inline BandwidthGrid power_grid(long n, double lo_exp, double hi_exp, int size) {
  if (!(lo_exp < hi_exp)) throw std::invalid_argument("power_grid: need lo_exp < hi_exp");
  if (hi_exp > 0.0) throw std::invalid_argument("power_grid: exponents must be <= 0");
  if (size < 2) throw std::invalid_argument("power_grid: need size >= 2");
  if (n < 2) throw std::invalid_argument("power_grid: need n >= 2");
  BandwidthGrid grid;
  grid.values.reserve(size);
  for (int i = 0; i < size; ++i) {
    const double e = lo_exp + (hi_exp - lo_exp) * i / (size - 1);
    grid.values.push_back(std::pow(static_cast<double>(n), e));
  }
  grid.provenance = "power(n=" + std::to_string(n) + ", " + std::to_string(lo_exp) + ".." +
                    std::to_string(hi_exp) + ")";
  return grid;
}

// Linear-interpolation percentile (position p * (N - 1) on the sorted sample).
inline double interpolated_percentile(std::vector<double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(sorted.begin(), sorted.end());
  const double pos = p * (sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - lo;
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Grid with endpoints 2 (Q3 - Q1) n^{lo_exp} and 2 (Q3 - Q1) n^{hi_exp}, where
// the quartiles are taken over the pooled sync + async observation times.
inline BandwidthGrid quartile_scaled_grid(const LongitudinalDataset& d, double lo_exp,
                                          double hi_exp, int size) {
  std::vector<double> times;
  for (const auto& s : d.subjects) {
    times.insert(times.end(), s.sync_times.begin(), s.sync_times.end());
    times.insert(times.end(), s.async_times.begin(), s.async_times.end());
  }
  if (times.empty()) throw DataError("quartile_scaled_grid: no observation times");
  const double q1 = interpolated_percentile(times, 0.25);
  const double q3 = interpolated_percentile(times, 0.75);
  const double iqr = q3 - q1;
  if (!(iqr > 0.0)) throw DataError("quartile_scaled_grid: zero interquartile range");

  BandwidthGrid grid = power_grid(d.n(), lo_exp, hi_exp, size);
  for (double& h : grid.values) h *= 2.0 * iqr;
  grid.provenance = "quartile(iqr=" + std::to_string(iqr) + ") * " + grid.provenance;
  return grid;
}

enum class CvMethod { TwoStep, Simultaneous };

struct CvCurve {
  std::vector<double> grid;
  std::vector<double> avg_pe;               // mean of unflagged fold errors, NaN if none
  std::vector<std::vector<double>> fold_pe; // [grid point][fold], NaN where flagged
  std::vector<char> flagged;                // any flagged cell at this bandwidth
  std::vector<std::vector<int>> fold_subjects;
  double selected_h = std::numeric_limits<double>::quiet_NaN();
  long selected_index = -1;
};

namespace detail {

inline LongitudinalDataset subset_dataset(const LongitudinalDataset& d,
                                          const std::vector<int>& keep) {
  LongitudinalDataset out;
  out.p = d.p;
  out.q = d.q;
  out.time_rescale = d.time_rescale;
  out.subjects.reserve(keep.size());
  for (int i : keep) out.subjects.push_back(d.subjects[i]);
  return out;
}

}  // namespace detail

// Kernel-smoothed K-fold cross-validation: subjects are partitioned by a
// seeded permutation (canonical order by id first), the estimator is fit
// without one fold, and the held-out squared prediction error is kernel
// weighted with the candidate bandwidth itself. For the two-step method only
// the second step varies with h; the step-1 coefficient is a centering fit
// done once per fold at h1 = n_train^{-0.6}.
inline CvCurve cv_bandwidth(const LongitudinalDataset& d, const BandwidthGrid& grid,
                            CvMethod method, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cv_bandwidth: need folds >= 2");
  if (grid.values.empty()) throw std::invalid_argument("cv_bandwidth: empty grid");
  const long n = d.n();
  if (n < folds) throw std::invalid_argument("cv_bandwidth: fewer subjects than folds");

  // Canonical order by subject id, then a seeded Fisher-Yates permutation.
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::sort(perm.begin(), perm.end(), [&](int a, int b) {
    const auto& ia = d.subjects[a].id;
    const auto& ib = d.subjects[b].id;
    return ia != ib ? ia < ib : a < b;
  });
  Rng rng = make_stream(seed, 0);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[i], perm[j]);
  }

  CvCurve curve;
  curve.grid = grid.values;
  curve.fold_subjects.assign(folds, {});
  for (long i = 0; i < n; ++i) curve.fold_subjects[i % folds].push_back(perm[i]);

  const long g = static_cast<long>(grid.values.size());
  curve.fold_pe.assign(g, std::vector<double>(folds, std::numeric_limits<double>::quiet_NaN()));
  curve.flagged.assign(g, 0);
  curve.avg_pe.assign(g, std::numeric_limits<double>::quiet_NaN());

  // Per-fold training state reused across the grid.
  std::vector<LongitudinalDataset> train(folds), heldout(folds);
  std::vector<Eigen::VectorXd> step1_beta(folds);
  std::vector<std::vector<Eigen::VectorXd>> omega(folds);
  std::vector<char> step1_ok(folds, 1);
  for (int k = 0; k < folds; ++k) {
    std::vector<int> keep;
    for (int f = 0; f < folds; ++f)
      if (f != k)
        keep.insert(keep.end(), curve.fold_subjects[f].begin(), curve.fold_subjects[f].end());
    train[k] = detail::subset_dataset(d, keep);
    heldout[k] = detail::subset_dataset(d, curve.fold_subjects[k]);
    if (method == CvMethod::TwoStep) {
      try {
        const double h1 = std::pow(static_cast<double>(train[k].n()), -0.6);
        const SyncFit fit = fit_centering(train[k], KernelSpec(h1));
        step1_beta[k] = fit.report.estimates;
        omega[k] = detail::raw_residuals(train[k], step1_beta[k]);
      } catch (const std::exception&) {
        step1_ok[k] = 0;
      }
    }
  }

  for (long gi = 0; gi < g; ++gi) {
    const KernelSpec kh(grid.values[gi]);
    for (int k = 0; k < folds; ++k) {
      if (method == CvMethod::TwoStep && !step1_ok[k]) {
        curve.flagged[gi] = 1;
        continue;
      }
      try {
        Eigen::VectorXd beta, theta2;
        if (method == CvMethod::TwoStep) {
          const KernelResidualFit step2 = fit_residuals_on_async(train[k], omega[k], kh);
          beta = step1_beta[k];
          theta2 = step2.theta;
        } else {
          const FitReport fit = fit_simultaneous(train[k], kh);
          beta = fit.estimates.segment(1, d.p);
          theta2.resize(1 + d.q);
          theta2(0) = fit.estimates(0);
          theta2.tail(d.q) = fit.estimates.tail(d.q);
        }
        const PairPredictionError pe = pair_prediction_error(heldout[k], beta, theta2, kh);
        if (!(pe.den > 0.0)) {
          curve.flagged[gi] = 1;
          continue;
        }
        curve.fold_pe[gi][k] = pe.num / pe.den;
      } catch (const std::exception&) {
        curve.flagged[gi] = 1;
      }
    }
    double sum = 0.0;
    int used = 0;
    for (int k = 0; k < folds; ++k) {
      if (std::isfinite(curve.fold_pe[gi][k])) {
        sum += curve.fold_pe[gi][k];
        ++used;
      }
    }
    if (used > 0) curve.avg_pe[gi] = sum / used;
  }

  for (long gi = 0; gi < g; ++gi) {
    if (curve.flagged[gi] || !std::isfinite(curve.avg_pe[gi])) continue;
    if (curve.selected_index < 0 || curve.avg_pe[gi] < curve.avg_pe[curve.selected_index])
      curve.selected_index = gi;
  }
  if (curve.selected_index < 0)
    throw NumericalError("cv_bandwidth: every grid point was flagged");
  curve.selected_h = curve.grid[curve.selected_index];
  return curve;
}

inline CvCurve cv_bandwidth(const LongitudinalDataset& d, const BandwidthGrid& grid,
                            CvMethod method) {
  return cv_bandwidth(d, grid, method, grid.folds, grid.seed);
}

}  // namespace asynclong
