#include "avt/grad_check.hpp"

#include <cmath>

namespace avt {

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double eps, double tol) {
  GradCheckReport report;
  if (eps <= 0.0) {
    report.error = "eps must be positive";
    return report;
  }

  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor xv(x.shape(), x.values());
    xv.set_requires_grad(true);
    Tensor y = f(xv);
    if (y.size() != 1) {
      report.error = "f must return a scalar";
      return report;
    }
    if (!std::isfinite(y.item())) {
      report.error = "f(x) is not finite";
      return report;
    }
    tape.backward(y);
    analytic = xv.grad();
  }

  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> vp = x.values();
    std::vector<double> vm = x.values();
    vp[i] += eps;
    vm[i] -= eps;
    double fp = f(Tensor(x.shape(), std::move(vp))).item();
    double fm = f(Tensor(x.shape(), std::move(vm))).item();
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      report.error = "finite-difference evaluation is not finite";
      return report;
    }
    double numeric = (fp - fm) / (2.0 * eps);
    double a = analytic[i];
    if (!std::isfinite(a)) {
      report.error = "analytic gradient is not finite";
      return report;
    }
    double denom = std::max({std::fabs(a), std::fabs(numeric), 1.0});
    double rel = std::fabs(a - numeric) / denom;
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace avt
