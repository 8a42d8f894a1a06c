#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "wflab/tensor.hpp"

namespace wflab {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  long checked = 0;

  bool ok(double tolerance) const { return max_rel_error < tolerance; }
};

// Central finite differences against analytic gradients. `loss` must be a
// pure function of the current parameter/input values; `analytic` holds the
// gradient to verify. Relative error uses max(|num|, |ana|, scale) as the
// denominator so near-zero gradients do not blow up the ratio.
inline double relative_error(double numeric, double analytic, double scale = 1.0) {
  double denom = std::max({std::fabs(numeric), std::fabs(analytic), scale});
  return std::fabs(numeric - analytic) / denom;
}

template <class T>
void grad_check_array(const std::function<double()>& loss, std::vector<T>& values,
                      const std::vector<T>& analytic, const std::string& name,
                      GradCheckReport& report, double h_scale = 1e-5) {
  for (size_t j = 0; j < values.size(); ++j) {
    double orig = values[j];
    double h = h_scale * std::max(std::fabs(orig), 1.0);
    values[j] = static_cast<T>(orig + h);
    double lp = loss();
    values[j] = static_cast<T>(orig - h);
    double lm = loss();
    values[j] = static_cast<T>(orig);
    double numeric = (lp - lm) / (2.0 * h);
    double err = relative_error(numeric, analytic[j]);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_param = name + "[" + std::to_string(j) + "]";
    }
  }
}

}  // namespace wflab
