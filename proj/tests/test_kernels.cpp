#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "avt/kernels.hpp"
#include "avt/random.hpp"

namespace K = avt::kernels;

namespace {

std::vector<double> random_vec(avt::Rng& rng, std::size_t n, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 variants agree") {
  if (!K::avx2_supported()) {
    MESSAGE("AVX2 not available; skipping variant comparison");
    return;
  }
  const auto& s = K::detail::scalar_impl();
  const auto& v = K::detail::avx2_impl();
  avt::Rng rng(42);

  // odd sizes exercise the vector tails
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 129u, 1000u}) {
    auto a = random_vec(rng, n);
    auto b = random_vec(rng, n, 0.5, 2.0);  // away from 0 for div
    std::vector<double> r1(n), r2(n);

    SUBCASE("") {}  // keep doctest happy about subcase-less loops

    // elementwise: bit-exact
    s.add(a.data(), b.data(), r1.data(), n);
    v.add(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    s.sub(a.data(), b.data(), r1.data(), n);
    v.sub(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    s.mul(a.data(), b.data(), r1.data(), n);
    v.mul(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    s.div(a.data(), b.data(), r1.data(), n);
    v.div(a.data(), b.data(), r2.data(), n);
    CHECK(r1 == r2);
    s.add_scalar(a.data(), 0.37, r1.data(), n);
    v.add_scalar(a.data(), 0.37, r2.data(), n);
    CHECK(r1 == r2);
    s.mul_scalar(a.data(), -1.91, r1.data(), n);
    v.mul_scalar(a.data(), -1.91, r2.data(), n);
    CHECK(r1 == r2);
    s.relu(a.data(), r1.data(), n);
    v.relu(a.data(), r2.data(), n);
    CHECK(r1 == r2);
    s.abs(a.data(), r1.data(), n);
    v.abs(a.data(), r2.data(), n);
    CHECK(r1 == r2);

    r1 = b;
    r2 = b;
    s.axpy(1.37, a.data(), r1.data(), n);
    v.axpy(1.37, a.data(), r2.data(), n);
    CHECK(r1 == r2);

    // reductions: different accumulation order, tight tolerance
    double s1 = s.sum(a.data(), n);
    double s2 = v.sum(a.data(), n);
    CHECK(std::fabs(s1 - s2) <=
          1e-13 * std::max(1.0, std::fabs(s1)) * static_cast<double>(n));
    double d1 = s.dot(a.data(), b.data(), n);
    double d2 = v.dot(a.data(), b.data(), n);
    CHECK(std::fabs(d1 - d2) <=
          1e-13 * std::max(1.0, std::fabs(d1)) * static_cast<double>(n));
    CHECK(s.max(a.data(), n) == v.max(a.data(), n));
  }
}

TEST_CASE("dispatch can be forced to either backend") {
  K::Backend before = K::active();
  K::select(K::Backend::scalar);
  CHECK(K::active() == K::Backend::scalar);
  std::vector<double> a{1, 2, 3}, b{4, 5, 6}, c(3);
  K::add(a.data(), b.data(), c.data(), 3);
  CHECK(c == std::vector<double>{5, 7, 9});
  if (K::avx2_supported()) {
    K::select(K::Backend::avx2);
    CHECK(K::active() == K::Backend::avx2);
    K::add(a.data(), b.data(), c.data(), 3);
    CHECK(c == std::vector<double>{5, 7, 9});
  }
  K::select(before);
}

TEST_CASE("reduction kernels match a simple reference") {
  avt::Rng rng(7);
  auto a = random_vec(rng, 257);
  auto b = random_vec(rng, 257);
  double ref_sum = 0.0, ref_dot = 0.0, ref_max = a[0];
  for (std::size_t i = 0; i < a.size(); ++i) {
    ref_sum += a[i];
    ref_dot += a[i] * b[i];
    ref_max = std::max(ref_max, a[i]);
  }
  CHECK(K::sum(a.data(), a.size()) == doctest::Approx(ref_sum).epsilon(1e-12));
  CHECK(K::dot(a.data(), b.data(), a.size()) ==
        doctest::Approx(ref_dot).epsilon(1e-12));
  CHECK(K::max(a.data(), a.size()) == ref_max);
}
