#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

namespace asynclong {

// Two-sided normal p-value for estimate/se.
inline double normal_p_value(double estimate, double se) {
  if (!(se > 0.0)) return estimate == 0.0 ? 1.0 : 0.0;
  const double z = std::abs(estimate / se);
  return std::erfc(z / std::sqrt(2.0));
}

// Coefficients with sandwich covariance, standard errors and 95% normal CIs.
// Parameter layout per method: joint fits are intercept-first
// ("alpha", x..., z...); the synchronous-only kernel fits carry no intercept.
struct FitReport {
  std::string method;
  std::vector<std::string> param_names;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd ci_lower;
  Eigen::VectorXd ci_upper;
  std::vector<double> bandwidths;
  long observations_used = 0;
  long pairs_used = 0;
  long dropped = 0;

  long dim() const { return estimates.size(); }

  double p_value(long j) const { return normal_p_value(estimates(j), std_errors(j)); }

  // Fills std_errors and CIs from the diagonal of `covariance`.
  void finalize() {
    const long d = estimates.size();
    std_errors.resize(d);
    ci_lower.resize(d);
    ci_upper.resize(d);
    for (long j = 0; j < d; ++j) {
      const double v = covariance(j, j);
      std_errors(j) = v > 0.0 ? std::sqrt(v) : 0.0;
      ci_lower(j) = estimates(j) - 1.96 * std_errors(j);
      ci_upper(j) = estimates(j) + 1.96 * std_errors(j);
    }
  }
};

}  // namespace asynclong
