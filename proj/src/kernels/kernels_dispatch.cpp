#include "avt/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace avt::kernels {

namespace {

Backend initial_backend() {
  Backend best = avx2_supported() ? Backend::avx2 : Backend::scalar;
  const char* env = std::getenv("AVT_KERNELS");
  if (env == nullptr || std::strcmp(env, "auto") == 0) return best;
  if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
  if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::avx2;
  return best;
}

Backend& current() {
  static Backend b = initial_backend();
  return b;
}

const detail::Impl& impl() {
  return current() == Backend::avx2 ? detail::avx2_impl()
                                    : detail::scalar_impl();
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = __builtin_cpu_supports("avx2") &&
                         detail::avx2_impl().add != nullptr;
  return ok;
#else
  return false;
#endif
}

Backend active() { return current(); }

void select(Backend b) {
  if (b == Backend::avx2 && !avx2_supported()) b = Backend::scalar;
  current() = b;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void add(const double* a, const double* b, double* c, std::size_t n) { impl().add(a, b, c, n); }
void sub(const double* a, const double* b, double* c, std::size_t n) { impl().sub(a, b, c, n); }
void mul(const double* a, const double* b, double* c, std::size_t n) { impl().mul(a, b, c, n); }
void div(const double* a, const double* b, double* c, std::size_t n) { impl().div(a, b, c, n); }
void add_scalar(const double* a, double s, double* b, std::size_t n) { impl().add_scalar(a, s, b, n); }
void mul_scalar(const double* a, double s, double* b, std::size_t n) { impl().mul_scalar(a, s, b, n); }
void axpy(double s, const double* x, double* y, std::size_t n) { impl().axpy(s, x, y, n); }
void relu(const double* a, double* b, std::size_t n) { impl().relu(a, b, n); }
void abs(const double* a, double* b, std::size_t n) { impl().abs(a, b, n); }
double sum(const double* a, std::size_t n) { return impl().sum(a, n); }
double dot(const double* a, const double* b, std::size_t n) { return impl().dot(a, b, n); }
double max(const double* a, std::size_t n) { return impl().max(a, n); }

}  // namespace avt::kernels
