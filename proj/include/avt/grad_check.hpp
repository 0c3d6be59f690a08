#pragma once

#include <functional>
#include <string>

#include "avt/tensor.hpp"

namespace avt {

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::string error;  // non-empty when the check could not run (non-finite values)
};

// Central finite differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps) against
// the analytic gradient of the scalar-valued f. Per-element error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1): relative for O(1)+
// gradients, absolute below that.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double eps, double tol);

}  // namespace avt
