// Scalar reference kernels. These define the semantics; SIMD variants
// must match them (bit-exactly for elementwise ops).

#include "avt/kernels.hpp"

#include <cmath>

namespace avt::kernels::detail {

namespace {

void add_s(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}
void sub_s(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}
void mul_s(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}
void div_s(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] / b[i];
}
void add_scalar_s(const double* a, double s, double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) b[i] = a[i] + s;
}
void mul_scalar_s(const double* a, double s, double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) b[i] = a[i] * s;
}
void axpy_s(double s, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}
void relu_s(const double* a, double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) b[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void abs_s(const double* a, double* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) b[i] = std::fabs(a[i]);
}
double sum_s(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}
double dot_s(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double max_s(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

}  // namespace

const Impl& scalar_impl() {
  static const Impl impl{add_s, sub_s,        mul_s,        div_s,
                         add_scalar_s, mul_scalar_s, axpy_s, relu_s,
                         abs_s,        sum_s,        dot_s,  max_s};
  return impl;
}

}  // namespace avt::kernels::detail
