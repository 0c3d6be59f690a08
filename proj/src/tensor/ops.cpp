#include "avt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avt/kernels.hpp"

namespace avt {

namespace {

namespace K = kernels;

bool recording(std::initializer_list<const Tensor*> ins) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// += g into t's grad buffer, skipping tensors outside the grad flow
void accum(const std::shared_ptr<TensorImpl>& t, const double* g) {
  if (!t->requires_grad) return;
  ensure_grad(t);
  K::add(t->grad.data(), g, t->grad.data(), t->grad.size());
}

// axis helpers: view a shape as [outer, n, inner]
struct AxisView {
  std::size_t outer, n, inner;
};
AxisView axis_view(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ValueError(strcat_msg(op, ": axis ", axis, " out of range for ",
                                shape_str(s)));
  AxisView v{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  std::size_t off = big.size() - small.size();
  for (std::size_t i = 0; i < small.size(); ++i)
    if (small[i] != big[off + i]) return false;
  return true;
}

// 0: same shape; 1: b broadcasts over a's leading dims; -1: a broadcasts
int broadcast_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return 0;
  if (is_suffix(b.shape(), a.shape())) return 1;
  if (is_suffix(a.shape(), b.shape())) return -1;
  throw ShapeError(strcat_msg(op, ": incompatible shapes ", shape_str(a.shape()),
                              " and ", shape_str(b.shape())));
}

using BinKernel = void (*)(const double*, const double*, double*, std::size_t);

template <typename MakeBackward>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b,
                 void (*fwd)(const double*, const double*, double*, std::size_t),
                 MakeBackward make_backward) {
  int mode = broadcast_mode(name, a, b);
  const Tensor& big = mode >= 0 ? a : b;
  const Tensor& small = mode >= 0 ? b : a;
  std::size_t inner = small.size();
  std::size_t blocks = big.size() / std::max<std::size_t>(inner, 1);

  std::vector<double> out(big.size());
  if (mode == 0) {
    fwd(a.data(), b.data(), out.data(), out.size());
  } else {
    for (std::size_t blk = 0; blk < blocks; ++blk) {
      const double* pb = big.data() + blk * inner;
      const double* ps = small.data();
      double* po = out.data() + blk * inner;
      if (mode >= 0)
        fwd(pb, ps, po, inner);
      else
        fwd(ps, pb, po, inner);
    }
  }
  Tensor result(big.shape(), std::move(out));
  if (recording({&a, &b})) {
    result.set_requires_grad(true);
    Tape::active()->record(name, {a.impl(), b.impl()}, result.impl(),
                           make_backward(a.impl(), b.impl(), result.impl(),
                                         mode, blocks, inner));
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, K::add,
                   [](auto ai, auto bi, auto oi, int mode, std::size_t blocks,
                      std::size_t inner) {
    return [=]() {
      const double* g = oi->grad.data();
      auto big = mode >= 0 ? ai : bi;
      auto small = mode >= 0 ? bi : ai;
      accum(big, g);
      if (small->requires_grad) {
        ensure_grad(small);
        for (std::size_t blk = 0; blk < blocks; ++blk)
          K::add(small->grad.data(), g + blk * inner, small->grad.data(), inner);
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, K::sub,
                   [](auto ai, auto bi, auto oi, int mode, std::size_t blocks,
                      std::size_t inner) {
    return [=]() {
      const double* g = oi->grad.data();
      std::size_t n = oi->grad.size();
      if (ai->requires_grad) {
        ensure_grad(ai);
        if (mode >= 0) {
          K::add(ai->grad.data(), g, ai->grad.data(), n);
        } else {
          for (std::size_t blk = 0; blk < blocks; ++blk)
            K::add(ai->grad.data(), g + blk * inner, ai->grad.data(), inner);
        }
      }
      if (bi->requires_grad) {
        ensure_grad(bi);
        if (mode > 0) {
          // b broadcast over a's leading dims
          for (std::size_t blk = 0; blk < blocks; ++blk)
            for (std::size_t i = 0; i < inner; ++i)
              bi->grad[i] -= g[blk * inner + i];
        } else {
          for (std::size_t i = 0; i < n; ++i) bi->grad[i] -= g[i];
        }
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, K::mul,
                   [](auto ai, auto bi, auto oi, int mode, std::size_t blocks,
                      std::size_t inner) {
    return [=]() {
      const double* g = oi->grad.data();
      auto big = mode >= 0 ? ai : bi;
      auto small = mode >= 0 ? bi : ai;
      if (mode == 0) {
        if (ai->requires_grad) {
          ensure_grad(ai);
          for (std::size_t i = 0; i < oi->grad.size(); ++i)
            ai->grad[i] += g[i] * bi->value[i];
        }
        if (bi->requires_grad) {
          ensure_grad(bi);
          for (std::size_t i = 0; i < oi->grad.size(); ++i)
            bi->grad[i] += g[i] * ai->value[i];
        }
        return;
      }
      if (big->requires_grad) {
        ensure_grad(big);
        for (std::size_t blk = 0; blk < blocks; ++blk)
          for (std::size_t i = 0; i < inner; ++i)
            big->grad[blk * inner + i] += g[blk * inner + i] * small->value[i];
      }
      if (small->requires_grad) {
        ensure_grad(small);
        for (std::size_t blk = 0; blk < blocks; ++blk)
          for (std::size_t i = 0; i < inner; ++i)
            small->grad[i] += g[blk * inner + i] * big->value[blk * inner + i];
      }
    };
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op("div", a, b, K::div,
                   [](auto ai, auto bi, auto oi, int mode, std::size_t /*blocks*/,
                      std::size_t inner) {
    return [=]() {
      const double* g = oi->grad.data();
      const double* out = oi->value.data();
      std::size_t n = oi->value.size();
      auto bval = [&](std::size_t i) {
        if (mode == 0) return bi->value[i];
        if (mode > 0) return bi->value[i % inner];
        return bi->value[i];  // b is the big operand
      };
      auto aval_idx_small = [&](std::size_t i) { return i % inner; };
      if (ai->requires_grad) {
        ensure_grad(ai);
        if (mode >= 0) {
          for (std::size_t i = 0; i < n; ++i) ai->grad[i] += g[i] / bval(i);
        } else {
          for (std::size_t i = 0; i < n; ++i)
            ai->grad[aval_idx_small(i)] += g[i] / bi->value[i];
        }
      }
      if (bi->requires_grad) {
        ensure_grad(bi);
        if (mode == 0) {
          for (std::size_t i = 0; i < n; ++i)
            bi->grad[i] -= g[i] * out[i] / bi->value[i];
        } else if (mode > 0) {
          for (std::size_t i = 0; i < n; ++i)
            bi->grad[i % inner] -= g[i] * out[i] / bi->value[i % inner];
        } else {
          for (std::size_t i = 0; i < n; ++i)
            bi->grad[i] -= g[i] * out[i] / bi->value[i];
        }
      }
    };
  });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* name, const Tensor& a, Fwd fwd, Bwd dydx_from) {
  std::vector<double> out(a.size());
  fwd(a.data(), out.data(), a.size());
  Tensor result(a.shape(), std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record(name, {ai}, oi, [ai, oi, dydx_from]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < oi->value.size(); ++i)
        ai->grad[i] += g[i] * dydx_from(ai->value[i], oi->value[i]);
    });
  }
  return result;
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  K::add_scalar(a.data(), s, out.data(), a.size());
  Tensor result(a.shape(), std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("add_scalar", {ai}, oi,
                           [ai, oi]() { accum(ai, oi->grad.data()); });
  }
  return result;
}

Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  K::mul_scalar(a.data(), s, out.data(), a.size());
  Tensor result(a.shape(), std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("mul_scalar", {ai}, oi, [ai, oi, s]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      K::axpy(s, oi->grad.data(), ai->grad.data(), oi->grad.size());
    });
  }
  return result;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, K::relu,
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      "tanh", a,
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(in[i]);
      },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& a) {
  return unary_op(
      "exp", a,
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(in[i]);
      },
      [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary_op(
      "log", a,
      [](const double* in, double* out, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::log(in[i]);
      },
      [](double x, double) { return 1.0 / x; });
}

Tensor abs_op(const Tensor& a) {
  return unary_op("abs", a, K::abs, [](double x, double) {
    return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a,
      [](const double* in, double* out, std::size_t n) {
        K::mul(in, in, out, n);
      },
      [](double x, double) { return 2.0 * x; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  AxisView v = axis_view("softmax", a.shape(), axis);
  if (v.n == 0) throw ValueError("softmax: empty axis");
  std::vector<double> out(a.size());
  const double* in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t base = o * v.n * v.inner + i;
      double m = in[base];
      for (std::size_t j = 1; j < v.n; ++j)
        m = std::max(m, in[base + j * v.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < v.n; ++j) {
        double e = std::exp(in[base + j * v.inner] - m);
        out[base + j * v.inner] = e;
        z += e;
      }
      double inv = 1.0 / z;
      for (std::size_t j = 0; j < v.n; ++j) out[base + j * v.inner] *= inv;
    }
  }
  Tensor result(a.shape(), std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("softmax", {ai}, oi, [ai, oi, v]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      const double* s = oi->value.data();
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
          std::size_t base = o * v.n * v.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < v.n; ++j)
            dot += g[base + j * v.inner] * s[base + j * v.inner];
          for (std::size_t j = 0; j < v.n; ++j) {
            std::size_t idx = base + j * v.inner;
            ai->grad[idx] += s[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() == 0)
    throw ShapeError("layer_norm: input must have rank >= 1");
  std::size_t m = x.shape().back();
  if (gamma.shape() != Shape{m} || beta.shape() != Shape{m})
    throw ShapeError(strcat_msg("layer_norm: scale/shift must be [", m,
                                "], got ", shape_str(gamma.shape()), " and ",
                                shape_str(beta.shape())));
  std::size_t rows = x.size() / m;
  std::vector<double> out(x.size());
  std::vector<double> mu(rows), inv_std(rows);
  const double* in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in + r * m;
    double mean = K::sum(row, m) / static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    mu[r] = mean;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j)
      out[r * m + j] = (row[j] - mean) * inv_std[r] * gamma[j] + beta[j];
  }
  Tensor result(x.shape(), std::move(out));
  if (recording({&x, &gamma, &beta})) {
    result.set_requires_grad(true);
    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    auto oi = result.impl();
    Tape::active()->record(
        "layer_norm", {xi, gi, bi}, oi,
        [xi, gi, bi, oi, mu = std::move(mu), inv_std = std::move(inv_std), m,
         rows]() {
          const double* g = oi->grad.data();
          const double* in = xi->value.data();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* grow = g + r * m;
            const double* xrow = in + r * m;
            double gdot = 0.0, gxdot = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              double xhat = (xrow[j] - mu[r]) * inv_std[r];
              double gh = grow[j] * gi->value[j];
              gdot += gh;
              gxdot += gh * xhat;
            }
            double invm = 1.0 / static_cast<double>(m);
            if (xi->requires_grad) {
              ensure_grad(xi);
              for (std::size_t j = 0; j < m; ++j) {
                double xhat = (xrow[j] - mu[r]) * inv_std[r];
                double gh = grow[j] * gi->value[j];
                xi->grad[r * m + j] +=
                    inv_std[r] * (gh - invm * gdot - xhat * invm * gxdot);
              }
            }
            if (gi->requires_grad) {
              ensure_grad(gi);
              for (std::size_t j = 0; j < m; ++j)
                gi->grad[j] += grow[j] * (xrow[j] - mu[r]) * inv_std[r];
            }
            if (bi->requires_grad) {
              ensure_grad(bi);
              for (std::size_t j = 0; j < m; ++j) bi->grad[j] += grow[j];
            }
          }
        });
  }
  return result;
}

namespace {

void matmul_forward(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  std::fill(c, c + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < k; ++l)
      K::axpy(a[i * k + l], b + l * m, c + i * m, m);
}

void matmul_backward(const std::shared_ptr<TensorImpl>& ai,
                     const std::shared_ptr<TensorImpl>& bi, const double* g,
                     const double* aval, const double* bval, std::size_t n,
                     std::size_t k, std::size_t m, std::size_t a_off,
                     std::size_t b_off) {
  if (ai->requires_grad) {
    ensure_grad(ai);
    double* da = ai->grad.data() + a_off;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < k; ++l)
        da[i * k + l] += K::dot(g + i * m, bval + l * m, m);
  }
  if (bi->requires_grad) {
    ensure_grad(bi);
    double* db = bi->grad.data() + b_off;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < k; ++l)
        K::axpy(aval[i * k + l], g + i * m, db + l * m, m);
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError(strcat_msg("matmul: incompatible shapes ",
                                shape_str(a.shape()), " and ",
                                shape_str(b.shape())));
  std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m);
  matmul_forward(a.data(), b.data(), out.data(), n, k, m);
  Tensor result(Shape{n, m}, std::move(out));
  if (recording({&a, &b})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = result.impl();
    Tape::active()->record("matmul", {ai, bi}, oi, [ai, bi, oi, n, k, m]() {
      matmul_backward(ai, bi, oi->grad.data(), ai->value.data(),
                      bi->value.data(), n, k, m, 0, 0);
    });
  }
  return result;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(1))
    throw ShapeError(strcat_msg("bmm: incompatible shapes ",
                                shape_str(a.shape()), " and ",
                                shape_str(b.shape())));
  std::size_t B = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  std::vector<double> out(B * n * m);
  for (std::size_t bb = 0; bb < B; ++bb)
    matmul_forward(a.data() + bb * n * k, b.data() + bb * k * m,
                   out.data() + bb * n * m, n, k, m);
  Tensor result(Shape{B, n, m}, std::move(out));
  if (recording({&a, &b})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = result.impl();
    Tape::active()->record("bmm", {ai, bi}, oi, [ai, bi, oi, B, n, k, m]() {
      for (std::size_t bb = 0; bb < B; ++bb)
        matmul_backward(ai, bi, oi->grad.data() + bb * n * m,
                        ai->value.data() + bb * n * k,
                        bi->value.data() + bb * k * m, n, k, m, bb * n * k,
                        bb * k * m);
    });
  }
  return result;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw ShapeError(strcat_msg("transpose: expected rank 2, got ",
                                shape_str(a.shape())));
  std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a[i * m + j];
  Tensor result(Shape{m, n}, std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("transpose", {ai}, oi, [ai, oi, n, m]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t i = 0; i < n; ++i) ai->grad[i * m + j] += g[j * n + i];
    });
  }
  return result;
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel(shape) != a.size())
    throw ShapeError(strcat_msg("reshape: cannot view ", shape_str(a.shape()),
                                " as ", shape_str(shape)));
  Tensor result(shape, a.values());
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("reshape", {ai}, oi,
                           [ai, oi]() { accum(ai, oi->grad.data()); });
  }
  return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t len) {
  AxisView v = axis_view("slice", a.shape(), axis);
  if (start + len > v.n)
    throw ShapeError(strcat_msg("slice: range [", start, ",", start + len,
                                ") exceeds axis ", axis, " of ",
                                shape_str(a.shape())));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<double> out(numel(out_shape));
  const double* in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy(in + (o * v.n + start) * v.inner,
              in + (o * v.n + start + len) * v.inner,
              out.begin() + static_cast<std::ptrdiff_t>(o * len * v.inner));
  Tensor result(out_shape, std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("slice", {ai}, oi, [ai, oi, v, start, len]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t o = 0; o < v.outer; ++o) {
        double* dst = ai->grad.data() + (o * v.n + start) * v.inner;
        const double* src = g + o * len * v.inner;
        K::add(dst, src, dst, len * v.inner);
      }
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != s0.size())
      throw ShapeError("concat: rank mismatch between inputs");
    for (std::size_t i = 0; i < s0.size(); ++i)
      if (i != axis && p.shape()[i] != s0[i])
        throw ShapeError(strcat_msg("concat: incompatible shapes ",
                                    shape_str(s0), " and ",
                                    shape_str(p.shape())));
    total += p.shape()[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  AxisView v = axis_view("concat", out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::size_t pn = p.shape()[axis];
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy(p.data() + o * pn * v.inner, p.data() + (o + 1) * pn * v.inner,
                out.begin() + static_cast<std::ptrdiff_t>(
                                  (o * v.n + offset) * v.inner));
    offset += pn;
  }
  Tensor result(out_shape, std::move(out));
  bool rec = Tape::active() != nullptr;
  if (rec) {
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    rec = any;
  }
  if (rec) {
    result.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::size_t> sizes;
    for (const Tensor& p : parts) {
      impls.push_back(p.impl());
      sizes.push_back(p.shape()[axis]);
    }
    auto oi = result.impl();
    Tape::active()->record("concat", impls, oi, [impls, sizes, oi, v]() {
      const double* g = oi->grad.data();
      std::size_t offset = 0;
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        std::size_t pn = sizes[pi];
        if (impls[pi]->requires_grad) {
          ensure_grad(impls[pi]);
          for (std::size_t o = 0; o < v.outer; ++o) {
            double* dst = impls[pi]->grad.data() + o * pn * v.inner;
            const double* src = g + (o * v.n + offset) * v.inner;
            K::add(dst, src, dst, pn * v.inner);
          }
        }
        offset += pn;
      }
    });
  }
  return result;
}

Tensor flip(const Tensor& a, std::size_t axis) {
  AxisView v = axis_view("flip", a.shape(), axis);
  std::vector<double> out(a.size());
  const double* in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.n; ++j)
      std::copy(in + (o * v.n + j) * v.inner, in + (o * v.n + j + 1) * v.inner,
                out.begin() + static_cast<std::ptrdiff_t>(
                                  (o * v.n + (v.n - 1 - j)) * v.inner));
  Tensor result(a.shape(), std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("flip", {ai}, oi, [ai, oi, v]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < v.n; ++j) {
          double* dst = ai->grad.data() + (o * v.n + j) * v.inner;
          const double* src = g + (o * v.n + (v.n - 1 - j)) * v.inner;
          K::add(dst, src, dst, v.inner);
        }
    });
  }
  return result;
}

Tensor sum_all(const Tensor& a) {
  Tensor result = Tensor::scalar(K::sum(a.data(), a.size()));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("sum_all", {ai}, oi, [ai, oi]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      double g = oi->grad[0];
      for (auto& d : ai->grad) d += g;
    });
  }
  return result;
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ValueError("mean_all: empty tensor");
  double inv = 1.0 / static_cast<double>(a.size());
  Tensor result = Tensor::scalar(K::sum(a.data(), a.size()) * inv);
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("mean_all", {ai}, oi, [ai, oi, inv]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      double g = oi->grad[0] * inv;
      for (auto& d : ai->grad) d += g;
    });
  }
  return result;
}

namespace {

Tensor reduce_axis(const char* name, const Tensor& a, std::size_t axis,
                   bool mean) {
  AxisView v = axis_view(name, a.shape(), axis);
  if (v.n == 0) throw ValueError(strcat_msg(name, ": empty axis"));
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  double scale = mean ? 1.0 / static_cast<double>(v.n) : 1.0;
  std::vector<double> out(v.outer * v.inner, 0.0);
  const double* in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < v.n; ++j)
      K::axpy(scale, in + (o * v.n + j) * v.inner, out.data() + o * v.inner,
              v.inner);
  Tensor result(out_shape, std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record(name, {ai}, oi, [ai, oi, v, scale]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < v.n; ++j)
          K::axpy(scale, g + o * v.inner,
                  ai->grad.data() + (o * v.n + j) * v.inner, v.inner);
    });
  }
  return result;
}

}  // namespace

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  return reduce_axis("sum_axis", a, axis, false);
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  return reduce_axis("mean_axis", a, axis, true);
}

SortResult sort_with_permutation(const Tensor& a) {
  if (a.rank() != 1)
    throw ShapeError(strcat_msg("sort_with_permutation: expected 1-D, got ",
                                shape_str(a.shape())));
  std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t i, std::size_t j) { return a[i] < a[j]; });
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[perm[i]];
  Tensor values(Shape{n}, std::move(out));
  if (recording({&a})) {
    values.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = values.impl();
    auto p = perm;
    Tape::active()->record("sort", {ai}, oi, [ai, oi, p = std::move(p)]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < p.size(); ++i) ai->grad[p[i]] += g[i];
    });
  }
  return SortResult{values, std::move(perm)};
}

Tensor pairwise_sqdiff(const Tensor& a) {
  if (a.rank() != 1)
    throw ShapeError(strcat_msg("pairwise_sqdiff: expected 1-D, got ",
                                shape_str(a.shape())));
  std::size_t n = a.size();
  std::vector<double> out(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = a[i] - a[j];
      out[i * n + j] = d * d;
    }
  Tensor result(Shape{n, n}, std::move(out));
  if (recording({&a})) {
    result.set_requires_grad(true);
    auto ai = a.impl();
    auto oi = result.impl();
    Tape::active()->record("pairwise_sqdiff", {ai}, oi, [ai, oi, n]() {
      if (!ai->requires_grad) return;
      ensure_grad(ai);
      const double* g = oi->grad.data();
      const double* x = ai->value.data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          double d = 2.0 * (x[i] - x[j]);
          double gij = g[i * n + j];
          ai->grad[i] += gij * d;
          ai->grad[j] -= gij * d;
        }
    });
  }
  return result;
}

}  // namespace avt
