// Mixed-radix Cooley-Tukey FFT. Twiddle tables are cached per size; a prime
// factor falls back to the direct O(n*p) combine, which is only hit by tests
// with awkward sizes (the artifact's window lengths are 2^a * 5^b smooth).

#include <cmath>
#include <map>
#include <memory>

#include "avt/dsp.hpp"

namespace avt::dsp {

namespace {

using cd = std::complex<double>;

std::size_t smallest_prime_factor(std::size_t n) {
  if (n % 2 == 0) return 2;
  for (std::size_t p = 3; p * p <= n; p += 2)
    if (n % p == 0) return p;
  return n;
}

const std::vector<cd>& twiddles(std::size_t n) {
  static thread_local std::map<std::size_t, std::unique_ptr<std::vector<cd>>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    auto tw = std::make_unique<std::vector<cd>>(n);
    for (std::size_t k = 0; k < n; ++k) {
      double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      (*tw)[k] = cd(std::cos(ang), std::sin(ang));
    }
    it = cache.emplace(n, std::move(tw)).first;
  }
  return *it->second;
}

void fft_rec(const cd* in, cd* out, std::size_t n, std::size_t stride,
             bool inverse) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  std::size_t p = smallest_prime_factor(n);
  std::size_t m = n / p;
  std::vector<cd> sub(n);
  for (std::size_t r = 0; r < p; ++r)
    fft_rec(in + r * stride, sub.data() + r * m, m, stride * p, inverse);

  const std::vector<cd>& tw = twiddles(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t km = k % m;
    cd acc(0.0, 0.0);
    for (std::size_t r = 0; r < p; ++r) {
      cd w = tw[(r * k) % n];
      if (inverse) w = std::conj(w);
      acc += w * sub[r * m + km];
    }
    out[k] = acc;
  }
}

}  // namespace

void fft(std::vector<cd>& x, bool inverse) {
  if (x.empty()) return;
  std::vector<cd> out(x.size());
  fft_rec(x.data(), out.data(), x.size(), 1, inverse);
  if (inverse) {
    double inv = 1.0 / static_cast<double>(x.size());
    for (auto& v : out) v *= inv;
  }
  x = std::move(out);
}

}  // namespace avt::dsp
