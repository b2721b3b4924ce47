#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "asynclong/errors.hpp"

namespace asynclong {

// Column-pivoted Householder QR of a row design with two singularity guards:
// a relative condition-number limit (default 1e12) and an absolute pivot
// floor tied to a caller-supplied reference scale. The reference scale is
// the column scale of the design *before* any annihilation/centering, so a
// design wiped out by such a transform is reported singular instead of being
// solved against rounding noise.
class DesignQr {
 public:
  DesignQr(const Eigen::MatrixXd& design, std::vector<std::string> column_names,
           double reference_scale, double cond_limit = 1e12)
      : qr_(design), names_(std::move(column_names)), d_(design.cols()) {
    const Eigen::VectorXd diag = qr_.matrixR().diagonal().head(d_).cwiseAbs();
    const double max_pivot = d_ > 0 ? diag.maxCoeff() : 0.0;
    const double abs_floor =
        1e-12 * std::max(reference_scale, 1e-300) * std::sqrt(static_cast<double>(design.rows()));
    std::vector<std::string> offending;
    for (long k = 0; k < d_; ++k) {
      const bool dead = diag(k) <= abs_floor || diag(k) * cond_limit < max_pivot;
      if (dead) offending.push_back(name_of_pivot(k));
    }
    if (!offending.empty())
      throw SingularityError("rank-deficient design (condition number above limit)", offending);
  }

  // Least-squares solution of design * b = rhs.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return qr_.solve(rhs); }

  // (design' design)^{-1} * b, via two triangular solves on R.
  Eigen::MatrixXd gram_solve(const Eigen::MatrixXd& b) const {
    const auto r = qr_.matrixR().topLeftCorner(d_, d_).template triangularView<Eigen::Upper>();
    const auto perm = qr_.colsPermutation();
    Eigen::MatrixXd t = perm.inverse() * b;
    t = r.transpose().solve(t);
    t = r.solve(t);
    return perm * t;
  }

  double condition_estimate() const {
    const Eigen::VectorXd diag = qr_.matrixR().diagonal().head(d_).cwiseAbs();
    return diag.maxCoeff() / diag.minCoeff();
  }

 private:
  std::string name_of_pivot(long k) const {
    const long col = qr_.colsPermutation().indices()(k);
    if (col < static_cast<long>(names_.size())) return names_[col];
    return "column " + std::to_string(col);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  std::vector<std::string> names_;
  long d_;
};

inline double max_column_norm(const Eigen::MatrixXd& m) {
  double best = 0.0;
  for (long c = 0; c < m.cols(); ++c) best = std::max(best, m.col(c).norm());
  return best;
}

// A^{-1} B A^{-1} for the bread A and meat B of a sandwich estimator.
inline Eigen::MatrixXd sandwich(const DesignQr& bread, const Eigen::MatrixXd& meat) {
  Eigen::MatrixXd half = bread.gram_solve(meat);
  Eigen::MatrixXd cov = bread.gram_solve(half.transpose());
  return 0.5 * (cov + cov.transpose());
}

}  // namespace asynclong
