#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace asynclong {

// Malformed input: files, schemas, dataset invariant violations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: singular systems, empty kernel windows, failed factorizations.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero total kernel mass around an evaluation point.
class EmptyWindowError : public NumericalError {
 public:
  EmptyWindowError(double t0, double h)
      : NumericalError("empty window: no kernel mass at t0=" + std::to_string(t0) +
                       " with bandwidth h=" + std::to_string(h)),
        t0(t0),
        h(h) {}
  double t0;
  double h;
};

// Local-linear smoother row with zero total kernel mass (bandwidth too small
// at an isolated time).
class DegenerateSmootherRowError : public NumericalError {
 public:
  explicit DegenerateSmootherRowError(long row)
      : NumericalError("degenerate smoother row at index " + std::to_string(row)), row(row) {}
  long row;
};

class SingularityError : public NumericalError {
 public:
  SingularityError(const std::string& what, std::vector<std::string> offending)
      : NumericalError(what + (offending.empty() ? "" : " [columns: " + join(offending) + "]")),
        columns(std::move(offending)) {}
  std::vector<std::string> columns;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += v[i];
    }
    return out;
  }
};

}  // namespace asynclong
