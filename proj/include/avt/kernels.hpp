#pragma once
// Data-parallel float64 inner loops used by the tensor library.
//
// Every kernel exists as a plain scalar reference implementation and,
// on x86-64, an AVX2 variant. The active variant is selected once at
// runtime (cpuid), can be forced through select() or the AVT_KERNELS
// environment variable (auto|scalar|avx2), and is queried via active().
//
// Equivalence contract, enforced by tests/test_kernels.cpp:
//   - elementwise kernels are bit-identical across variants (per-lane
//     IEEE ops, no FMA contraction),
//   - reduction kernels (sum, dot) agree to ~1e-13 relative (the AVX2
//     variants use 4 independent accumulators, so rounding order differs).

#include <cstddef>

namespace avt::kernels {

enum class Backend { scalar, avx2 };

// Selected backend. Defaults to the best supported one, or whatever
// AVT_KERNELS requests. Thread-safe only before threads spawn; the
// artifact is single-threaded by contract.
Backend active();
void select(Backend b);
bool avx2_supported();
const char* backend_name(Backend b);

// c[i] = a[i] op b[i]
void add(const double* a, const double* b, double* c, std::size_t n);
void sub(const double* a, const double* b, double* c, std::size_t n);
void mul(const double* a, const double* b, double* c, std::size_t n);
void div(const double* a, const double* b, double* c, std::size_t n);

// b[i] = a[i] + s / b[i] = a[i] * s
void add_scalar(const double* a, double s, double* b, std::size_t n);
void mul_scalar(const double* a, double s, double* b, std::size_t n);

// y[i] += s * x[i]   (matmul/conv accumulation workhorse)
void axpy(double s, const double* x, double* y, std::size_t n);

// b[i] = max(a[i], 0) / |a[i]|
void relu(const double* a, double* b, std::size_t n);
void abs(const double* a, double* b, std::size_t n);

// reductions
double sum(const double* a, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double max(const double* a, std::size_t n);  // n >= 1

namespace detail {
// Raw variants, exposed so the equivalence tests can compare them directly.
struct Impl {
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*div)(const double*, const double*, double*, std::size_t);
  void (*add_scalar)(const double*, double, double*, std::size_t);
  void (*mul_scalar)(const double*, double, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*relu)(const double*, double*, std::size_t);
  void (*abs)(const double*, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  double (*max)(const double*, std::size_t);
};
const Impl& scalar_impl();
const Impl& avx2_impl();  // null pointers when not compiled in
}  // namespace detail

}  // namespace avt::kernels
