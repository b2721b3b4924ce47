#pragma once

#include <cmath>
#include <stdexcept>

namespace asynclong {

// Epanechnikov kernel K(u) = 0.75 (1 - u^2) on [-1, 1], zero outside.
inline double kernel_eval(double u) {
  const double a = std::abs(u);
  if (a >= 1.0) return 0.0;
  return 0.75 * (1.0 - u * u);
}

// K_h(u) = K(u / h) / h.
inline double scaled_kernel(double u, double h) {
  if (!(h > 0.0)) throw std::domain_error("scaled_kernel: bandwidth must be positive");
  return kernel_eval(u / h) / h;
}

enum class KernelFamily { Epanechnikov };

// The only free parameter of the (Epanechnikov) smoothing kernel.
struct KernelSpec {
  double bandwidth;
  KernelFamily family = KernelFamily::Epanechnikov;

  explicit KernelSpec(double h) : bandwidth(h) {
    if (!(h > 0.0)) throw std::domain_error("KernelSpec: bandwidth must be positive");
  }

  double operator()(double u) const { return kernel_eval(u / bandwidth) / bandwidth; }
};

}  // namespace asynclong
