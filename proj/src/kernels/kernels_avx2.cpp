// AVX2 kernel variants. Compiled with -mavx2 and without -mfma so that
// mul+add below cannot be contracted: elementwise results stay bit-identical
// to the scalar reference. Reductions use 4 independent lanes and therefore
// round differently from the sequential scalar loop; tests bound that gap.

#include "avt/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace avt::kernels::detail {

namespace {

template <typename TailOp>
inline void ew_binary(__m256d (*op)(__m256d, __m256d), const double* a,
                      const double* b, double* c, std::size_t n, TailOp tail) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d va = _mm256_loadu_pd(a + i);
    __m256d vb = _mm256_loadu_pd(b + i);
    _mm256_storeu_pd(c + i, op(va, vb));
  }
  for (; i < n; ++i) c[i] = tail(a[i], b[i]);
}

__m256d vadd(__m256d a, __m256d b) { return _mm256_add_pd(a, b); }
__m256d vsub(__m256d a, __m256d b) { return _mm256_sub_pd(a, b); }
__m256d vmul(__m256d a, __m256d b) { return _mm256_mul_pd(a, b); }
__m256d vdiv(__m256d a, __m256d b) { return _mm256_div_pd(a, b); }

void add_v(const double* a, const double* b, double* c, std::size_t n) {
  ew_binary(vadd, a, b, c, n, [](double x, double y) { return x + y; });
}
void sub_v(const double* a, const double* b, double* c, std::size_t n) {
  ew_binary(vsub, a, b, c, n, [](double x, double y) { return x - y; });
}
void mul_v(const double* a, const double* b, double* c, std::size_t n) {
  ew_binary(vmul, a, b, c, n, [](double x, double y) { return x * y; });
}
void div_v(const double* a, const double* b, double* c, std::size_t n) {
  ew_binary(vdiv, a, b, c, n, [](double x, double y) { return x / y; });
}

void add_scalar_v(const double* a, double s, double* b, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(b + i, _mm256_add_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) b[i] = a[i] + s;
}
void mul_scalar_v(const double* a, double s, double* b, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(b + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) b[i] = a[i] * s;
}

void axpy_v(double s, const double* x, double* y, std::size_t n) {
  __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(vs, vx)));
  }
  for (; i < n; ++i) y[i] += s * x[i];
}

void relu_v(const double* a, double* b, std::size_t n) {
  __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(b + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  for (; i < n; ++i) b[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void abs_v(const double* a, double* b, std::size_t n) {
  // clear the sign bit
  __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(b + i, _mm256_and_pd(_mm256_loadu_pd(a + i), mask));
  for (; i < n; ++i) b[i] = std::fabs(a[i]);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double sum_v(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double dot_v(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double max_v(const double* a, std::size_t n) {
  if (n < 8) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double m = lanes[0];
  for (int k = 1; k < 4; ++k) m = lanes[k] > m ? lanes[k] : m;
  for (; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

}  // namespace

const Impl& avx2_impl() {
  static const Impl impl{add_v, sub_v,        mul_v,        div_v,
                         add_scalar_v, mul_scalar_v, axpy_v, relu_v,
                         abs_v,        sum_v,        dot_v,  max_v};
  return impl;
}

}  // namespace avt::kernels::detail

#else  // !__AVX2__

namespace avt::kernels::detail {
const Impl& avx2_impl() {
  static const Impl impl{};
  return impl;
}
}  // namespace avt::kernels::detail

#endif
