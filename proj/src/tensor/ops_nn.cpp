// Convolution, pooling, upsampling, ROI pooling.

#include <algorithm>
#include <cmath>
#include <vector>

#include "avt/kernels.hpp"
#include "avt/ops.hpp"

namespace avt {

namespace {

namespace K = kernels;

bool recording(std::initializer_list<const Tensor*> ins) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

std::size_t out_extent(const char* op, std::size_t in, std::size_t k,
                       std::size_t stride, std::size_t pad) {
  std::size_t padded = in + 2 * pad;
  if (padded < k)
    throw ShapeError(strcat_msg(op, ": kernel ", k, " larger than padded input ",
                                padded));
  return (padded - k) / stride + 1;
}

// zero-pad the two innermost spatial dims of a [planes, H, W] buffer
std::vector<double> pad2d(const double* x, std::size_t planes, std::size_t h,
                          std::size_t w, std::size_t pad) {
  std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  std::vector<double> out(planes * hp * wp, 0.0);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      std::copy(x + (p * h + y) * w, x + (p * h + y + 1) * w,
                out.begin() + static_cast<std::ptrdiff_t>(
                                  (p * hp + y + pad) * wp + pad));
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || x.dim(0) != w.dim(1))
    throw ShapeError(strcat_msg("conv2d: incompatible shapes ",
                                shape_str(x.shape()), " and ",
                                shape_str(w.shape())));
  if (bias.defined() && bias.shape() != Shape{w.dim(0)})
    throw ShapeError(strcat_msg("conv2d: bias must be [", w.dim(0), "], got ",
                                shape_str(bias.shape())));
  std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  std::size_t oh = out_extent("conv2d", h, kh, stride, pad);
  std::size_t ow = out_extent("conv2d", wd, kw, stride, pad);
  std::size_t hp = h + 2 * pad, wp = wd + 2 * pad;

  std::vector<double> xp = pad2d(x.data(), cin, h, wd, pad);
  std::vector<double> out(cout * oh * ow, 0.0);
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double* oplane = out.data() + oc * oh * ow;
    if (bias.defined())
      K::add_scalar(oplane, bias[oc], oplane, oh * ow);
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const double* iplane = xp.data() + ic * hp * wp;
      const double* wk = w.data() + (oc * cin + ic) * kh * kw;
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          double wv = wk[ky * kw + kx];
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const double* irow = iplane + (oy * stride + ky) * wp + kx;
            double* orow = oplane + oy * ow;
            if (stride == 1) {
              K::axpy(wv, irow, orow, ow);
            } else {
              for (std::size_t ox = 0; ox < ow; ++ox)
                orow[ox] += wv * irow[ox * stride];
            }
          }
        }
    }
  }
  Tensor result(Shape{cout, oh, ow}, std::move(out));
  if (recording({&x, &w, &bias})) {
    result.set_requires_grad(true);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto oi = result.impl();
    std::vector<std::shared_ptr<TensorImpl>> ins{xi, wi};
    if (bi) ins.push_back(bi);
    Tape::active()->record("conv2d", ins, oi, [=]() {
      const double* g = oi->grad.data();
      std::vector<double> xpb = pad2d(xi->value.data(), cin, h, wd, pad);
      std::vector<double> dxp;
      if (xi->requires_grad) dxp.assign(cin * hp * wp, 0.0);
      if (wi->requires_grad) ensure_grad(wi);
      for (std::size_t oc = 0; oc < cout; ++oc) {
        const double* gplane = g + oc * oh * ow;
        if (bi && bi->requires_grad) {
          ensure_grad(bi);
          bi->grad[oc] += K::sum(gplane, oh * ow);
        }
        for (std::size_t ic = 0; ic < cin; ++ic) {
          const double* iplane = xpb.data() + ic * hp * wp;
          double* dplane = xi->requires_grad ? dxp.data() + ic * hp * wp : nullptr;
          const double* wk = wi->value.data() + (oc * cin + ic) * kh * kw;
          double* dwk = wi->requires_grad
                            ? wi->grad.data() + (oc * cin + ic) * kh * kw
                            : nullptr;
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              double wv = wk[ky * kw + kx];
              double dw = 0.0;
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const double* grow = gplane + oy * ow;
                std::size_t ibase = (oy * stride + ky) * wp + kx;
                if (stride == 1) {
                  if (dwk) dw += K::dot(grow, iplane + ibase, ow);
                  if (dplane) K::axpy(wv, grow, dplane + ibase, ow);
                } else {
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    if (dwk) dw += grow[ox] * iplane[ibase + ox * stride];
                    if (dplane) dplane[ibase + ox * stride] += wv * grow[ox];
                  }
                }
              }
              if (dwk) dwk[ky * kw + kx] += dw;
            }
        }
      }
      if (xi->requires_grad) {
        ensure_grad(xi);
        for (std::size_t ic = 0; ic < cin; ++ic)
          for (std::size_t y = 0; y < h; ++y) {
            double* dst = xi->grad.data() + (ic * h + y) * wd;
            const double* src = dxp.data() + (ic * hp + y + pad) * wp + pad;
            K::add(dst, src, dst, wd);
          }
      }
    });
  }
  return result;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 5 || x.dim(0) != w.dim(1))
    throw ShapeError(strcat_msg("conv3d: incompatible shapes ",
                                shape_str(x.shape()), " and ",
                                shape_str(w.shape())));
  if (bias.defined() && bias.shape() != Shape{w.dim(0)})
    throw ShapeError(strcat_msg("conv3d: bias must be [", w.dim(0), "], got ",
                                shape_str(bias.shape())));
  std::size_t cin = x.dim(0), t = x.dim(1), h = x.dim(2), wd = x.dim(3);
  std::size_t cout = w.dim(0), kt = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  std::size_t ot = out_extent("conv3d", t, kt, stride, pad);
  std::size_t oh = out_extent("conv3d", h, kh, stride, pad);
  std::size_t ow = out_extent("conv3d", wd, kw, stride, pad);
  std::size_t tp = t + 2 * pad, hp = h + 2 * pad, wp = wd + 2 * pad;

  // capture dims by value: the backward closure outlives this frame
  auto pad3d = [=](const double* src) {
    std::vector<double> out(cin * tp * hp * wp, 0.0);
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t z = 0; z < t; ++z)
        for (std::size_t y = 0; y < h; ++y)
          std::copy(src + ((c * t + z) * h + y) * wd,
                    src + ((c * t + z) * h + y + 1) * wd,
                    out.begin() + static_cast<std::ptrdiff_t>(
                                      ((c * tp + z + pad) * hp + y + pad) * wp +
                                      pad));
    return out;
  };

  std::vector<double> xp = pad3d(x.data());
  std::vector<double> out(cout * ot * oh * ow, 0.0);
  for (std::size_t oc = 0; oc < cout; ++oc) {
    double* ovol = out.data() + oc * ot * oh * ow;
    if (bias.defined()) K::add_scalar(ovol, bias[oc], ovol, ot * oh * ow);
    for (std::size_t ic = 0; ic < cin; ++ic) {
      const double* ivol = xp.data() + ic * tp * hp * wp;
      const double* wk = w.data() + (oc * cin + ic) * kt * kh * kw;
      for (std::size_t kz = 0; kz < kt; ++kz)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            double wv = wk[(kz * kh + ky) * kw + kx];
            for (std::size_t oz = 0; oz < ot; ++oz)
              for (std::size_t oy = 0; oy < oh; ++oy) {
                const double* irow =
                    ivol + ((oz * stride + kz) * hp + oy * stride + ky) * wp + kx;
                double* orow = ovol + (oz * oh + oy) * ow;
                if (stride == 1) {
                  K::axpy(wv, irow, orow, ow);
                } else {
                  for (std::size_t ox = 0; ox < ow; ++ox)
                    orow[ox] += wv * irow[ox * stride];
                }
              }
          }
    }
  }
  Tensor result(Shape{cout, ot, oh, ow}, std::move(out));
  if (recording({&x, &w, &bias})) {
    result.set_requires_grad(true);
    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    auto oi = result.impl();
    std::vector<std::shared_ptr<TensorImpl>> ins{xi, wi};
    if (bi) ins.push_back(bi);
    Tape::active()->record("conv3d", ins, oi, [=]() {
      const double* g = oi->grad.data();
      std::vector<double> xpb = pad3d(xi->value.data());
      std::vector<double> dxp;
      if (xi->requires_grad) dxp.assign(cin * tp * hp * wp, 0.0);
      if (wi->requires_grad) ensure_grad(wi);
      for (std::size_t oc = 0; oc < cout; ++oc) {
        const double* gvol = g + oc * ot * oh * ow;
        if (bi && bi->requires_grad) {
          ensure_grad(bi);
          bi->grad[oc] += K::sum(gvol, ot * oh * ow);
        }
        for (std::size_t ic = 0; ic < cin; ++ic) {
          const double* ivol = xpb.data() + ic * tp * hp * wp;
          double* dvol =
              xi->requires_grad ? dxp.data() + ic * tp * hp * wp : nullptr;
          const double* wk = wi->value.data() + (oc * cin + ic) * kt * kh * kw;
          double* dwk = wi->requires_grad
                            ? wi->grad.data() + (oc * cin + ic) * kt * kh * kw
                            : nullptr;
          for (std::size_t kz = 0; kz < kt; ++kz)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                double wv = wk[(kz * kh + ky) * kw + kx];
                double dw = 0.0;
                for (std::size_t oz = 0; oz < ot; ++oz)
                  for (std::size_t oy = 0; oy < oh; ++oy) {
                    const double* grow = gvol + (oz * oh + oy) * ow;
                    std::size_t ibase =
                        ((oz * stride + kz) * hp + oy * stride + ky) * wp + kx;
                    if (stride == 1) {
                      if (dwk) dw += K::dot(grow, ivol + ibase, ow);
                      if (dvol) K::axpy(wv, grow, dvol + ibase, ow);
                    } else {
                      for (std::size_t ox = 0; ox < ow; ++ox) {
                        if (dwk) dw += grow[ox] * ivol[ibase + ox * stride];
                        if (dvol) dvol[ibase + ox * stride] += wv * grow[ox];
                      }
                    }
                  }
                if (dwk) dwk[(kz * kh + ky) * kw + kx] += dw;
              }
        }
      }
      if (xi->requires_grad) {
        ensure_grad(xi);
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t z = 0; z < t; ++z)
            for (std::size_t y = 0; y < h; ++y) {
              double* dst = xi->grad.data() + ((c * t + z) * h + y) * wd;
              const double* src =
                  dxp.data() + ((c * tp + z + pad) * hp + y + pad) * wp + pad;
              K::add(dst, src, dst, wd);
            }
      }
    });
  }
  return result;
}

namespace {

// shared pooling core: pools the trailing `spatial` dims given flattened
// window enumeration; argmax recorded for the backward scatter
Tensor pool_impl(const char* name, const Tensor& x, Shape out_shape,
                 std::vector<std::size_t> win_offsets,
                 std::vector<std::size_t> out_to_in_base) {
  std::size_t out_n = numel(out_shape);
  std::vector<double> out(out_n);
  std::vector<std::size_t> argmax(out_n);
  const double* in = x.data();
  for (std::size_t i = 0; i < out_n; ++i) {
    std::size_t base = out_to_in_base[i];
    double best = in[base + win_offsets[0]];
    std::size_t best_idx = base + win_offsets[0];
    for (std::size_t k = 1; k < win_offsets.size(); ++k) {
      std::size_t idx = base + win_offsets[k];
      if (in[idx] > best) {
        best = in[idx];
        best_idx = idx;
      }
    }
    out[i] = best;
    argmax[i] = best_idx;
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (recording({&x})) {
    result.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = result.impl();
    Tape::active()->record(name, {xi}, oi,
                           [xi, oi, argmax = std::move(argmax)]() {
      if (!xi->requires_grad) return;
      ensure_grad(xi);
      const double* g = oi->grad.data();
      for (std::size_t i = 0; i < argmax.size(); ++i)
        xi->grad[argmax[i]] += g[i];
    });
  }
  return result;
}

}  // namespace

Tensor max_pool2d(const Tensor& x, std::size_t kh, std::size_t kw) {
  if (x.rank() != 3)
    throw ShapeError(strcat_msg("max_pool2d: expected [C,H,W], got ",
                                shape_str(x.shape())));
  std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::size_t oh = h / kh, ow = w / kw;
  if (oh == 0 || ow == 0)
    throw ShapeError(strcat_msg("max_pool2d: window ", kh, "x", kw,
                                " larger than input ", shape_str(x.shape())));
  std::vector<std::size_t> offs;
  for (std::size_t dy = 0; dy < kh; ++dy)
    for (std::size_t dx = 0; dx < kw; ++dx) offs.push_back(dy * w + dx);
  std::vector<std::size_t> bases(c * oh * ow);
  std::size_t i = 0;
  for (std::size_t cc = 0; cc < c; ++cc)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        bases[i++] = (cc * h + oy * kh) * w + ox * kw;
  return pool_impl("max_pool2d", x, Shape{c, oh, ow}, std::move(offs),
                   std::move(bases));
}

Tensor max_pool3d(const Tensor& x, std::size_t kt, std::size_t kh,
                  std::size_t kw) {
  if (x.rank() != 4)
    throw ShapeError(strcat_msg("max_pool3d: expected [C,T,H,W], got ",
                                shape_str(x.shape())));
  std::size_t c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
  std::size_t ot = t / kt, oh = h / kh, ow = w / kw;
  if (ot == 0 || oh == 0 || ow == 0)
    throw ShapeError(strcat_msg("max_pool3d: window ", kt, "x", kh, "x", kw,
                                " larger than input ", shape_str(x.shape())));
  std::vector<std::size_t> offs;
  for (std::size_t dz = 0; dz < kt; ++dz)
    for (std::size_t dy = 0; dy < kh; ++dy)
      for (std::size_t dx = 0; dx < kw; ++dx)
        offs.push_back((dz * h + dy) * w + dx);
  std::vector<std::size_t> bases(c * ot * oh * ow);
  std::size_t i = 0;
  for (std::size_t cc = 0; cc < c; ++cc)
    for (std::size_t oz = 0; oz < ot; ++oz)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          bases[i++] = ((cc * t + oz * kt) * h + oy * kh) * w + ox * kw;
  return pool_impl("max_pool3d", x, Shape{c, ot, oh, ow}, std::move(offs),
                   std::move(bases));
}

Tensor upsample_nearest2d(const Tensor& x, std::size_t fh, std::size_t fw) {
  if (x.rank() != 2)
    throw ShapeError(strcat_msg("upsample_nearest2d: expected rank 2, got ",
                                shape_str(x.shape())));
  if (fh == 0 || fw == 0) throw ValueError("upsample_nearest2d: zero factor");
  std::size_t h = x.dim(0), w = x.dim(1);
  std::size_t oh = h * fh, ow = w * fw;
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      out[y * ow + xx] = x[(y / fh) * w + (xx / fw)];
  Tensor result(Shape{oh, ow}, std::move(out));
  if (recording({&x})) {
    result.set_requires_grad(true);
    auto xi = x.impl();
    auto oi = result.impl();
    Tape::active()->record("upsample_nearest2d", {xi}, oi,
                           [xi, oi, h, w, fh, fw, oh, ow]() {
      if (!xi->requires_grad) return;
      ensure_grad(xi);
      const double* g = oi->grad.data();
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          xi->grad[(y / fh) * w + (xx / fw)] += g[y * ow + xx];
    });
  }
  return result;
}

Tensor roi_align_avg(const Tensor& fmap, double x0, double y0, double x1,
                     double y1, std::size_t bins) {
  if (fmap.rank() != 3)
    throw ShapeError(strcat_msg("roi_align_avg: expected [C,H,W], got ",
                                shape_str(fmap.shape())));
  if (bins == 0) throw ValueError("roi_align_avg: bins must be >= 1");
  double cx0 = std::clamp(x0, 0.0, 1.0), cx1 = std::clamp(x1, 0.0, 1.0);
  double cy0 = std::clamp(y0, 0.0, 1.0), cy1 = std::clamp(y1, 0.0, 1.0);
  if (cx1 <= cx0 || cy1 <= cy0)
    throw ValueError(strcat_msg("roi_align_avg: degenerate box (", x0, ",", y0,
                                ",", x1, ",", y1, ") after clamping"));
  std::size_t c = fmap.dim(0), h = fmap.dim(1), w = fmap.dim(2);

  auto ratio = [&](double extent, std::size_t pixels) {
    double px = extent * static_cast<double>(pixels);
    auto r = static_cast<std::size_t>(std::ceil(px / static_cast<double>(bins)));
    return std::max<std::size_t>(1, r);
  };
  std::size_t ry = ratio(cy1 - cy0, h), rx = ratio(cx1 - cx0, w);

  struct Sample {
    std::size_t i00, i01, i10, i11;
    double w00, w01, w10, w11;
  };
  auto axis_samples = [](double lo, double hi, std::size_t bins_,
                         std::size_t r, std::size_t pixels) {
    std::vector<std::pair<std::size_t, double>> res;  // (index0, frac)
    std::size_t total = bins_ * r;
    for (std::size_t i = 0; i < total; ++i) {
      double frac_pos = lo + (static_cast<double>(i) + 0.5) * (hi - lo) /
                                 static_cast<double>(total);
      double p = frac_pos * static_cast<double>(pixels) - 0.5;
      p = std::clamp(p, 0.0, static_cast<double>(pixels - 1));
      auto i0 = static_cast<std::size_t>(p);
      if (i0 >= pixels - 1 && pixels > 1) i0 = pixels - 2;
      double fr = pixels > 1 ? p - static_cast<double>(i0) : 0.0;
      res.emplace_back(i0, fr);
    }
    return res;
  };
  auto ys = axis_samples(cy0, cy1, bins, ry, h);
  auto xs = axis_samples(cx0, cx1, bins, rx, w);

  std::vector<Sample> samples;
  samples.reserve(ys.size() * xs.size());
  for (auto [iy, fy] : ys)
    for (auto [ix, fx] : xs) {
      std::size_t iy1 = h > 1 ? iy + 1 : iy;
      std::size_t ix1 = w > 1 ? ix + 1 : ix;
      samples.push_back(Sample{iy * w + ix, iy * w + ix1, iy1 * w + ix,
                               iy1 * w + ix1, (1 - fy) * (1 - fx),
                               (1 - fy) * fx, fy * (1 - fx), fy * fx});
    }
  double inv = 1.0 / static_cast<double>(samples.size());

  std::vector<double> out(c, 0.0);
  const double* in = fmap.data();
  for (std::size_t cc = 0; cc < c; ++cc) {
    const double* plane = in + cc * h * w;
    double acc = 0.0;
    for (const Sample& s : samples)
      acc += s.w00 * plane[s.i00] + s.w01 * plane[s.i01] +
             s.w10 * plane[s.i10] + s.w11 * plane[s.i11];
    out[cc] = acc * inv;
  }
  Tensor result(Shape{c}, std::move(out));
  if (recording({&fmap})) {
    result.set_requires_grad(true);
    auto fi = fmap.impl();
    auto oi = result.impl();
    Tape::active()->record("roi_align_avg", {fi}, oi,
                           [fi, oi, samples = std::move(samples), inv, c, h,
                            w]() {
      if (!fi->requires_grad) return;
      ensure_grad(fi);
      const double* g = oi->grad.data();
      for (std::size_t cc = 0; cc < c; ++cc) {
        double* dplane = fi->grad.data() + cc * h * w;
        double gv = g[cc] * inv;
        for (const Sample& s : samples) {
          dplane[s.i00] += gv * s.w00;
          dplane[s.i01] += gv * s.w01;
          dplane[s.i10] += gv * s.w10;
          dplane[s.i11] += gv * s.w11;
        }
      }
    });
  }
  return result;
}

}  // namespace avt
