#pragma once
// Differentiable primitives over avt::Tensor.
//
// Elementwise binary ops support one broadcast form: equal shapes, or the
// smaller operand's shape equal to a trailing suffix of the larger's (bias
// adds, per-row scales). Anything else is a ShapeError naming the op and
// both shapes.

#include <utility>
#include <vector>

#include "avt/tensor.hpp"

namespace avt {

// elementwise binary
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// scalar
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

// elementwise unary
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor abs_op(const Tensor& a);
Tensor square(const Tensor& a);

// softmax along `axis`; rows sum to 1, stable under logit shifts
Tensor softmax(const Tensor& a, std::size_t axis);

// layer normalization over the last axis with learned scale/shift
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);   // [n,k]x[k,m]
Tensor bmm(const Tensor& a, const Tensor& b);      // [B,n,k]x[B,k,m]
Tensor transpose(const Tensor& a);                 // 2-D

// structure
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor flip(const Tensor& a, std::size_t axis);

// reductions
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);

// convolution (channel-first layouts)
// x [Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride = 1, std::size_t pad = 0);
// x [Cin,T,H,W], w [Cout,Cin,kt,kh,kw], optional bias [Cout]
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride = 1, std::size_t pad = 0);

// max pooling, stride == kernel, floor semantics on ragged edges
Tensor max_pool2d(const Tensor& x, std::size_t kh, std::size_t kw);
Tensor max_pool3d(const Tensor& x, std::size_t kt, std::size_t kh, std::size_t kw);

// nearest-neighbor upsample of a 2-D tensor by integer factors
Tensor upsample_nearest2d(const Tensor& x, std::size_t fh, std::size_t fw);

// 1-D sort; gradient scatters through the returned permutation
// (subgradient convention at ties: the stable-sort permutation is used as-is)
struct SortResult {
  Tensor values;                  // ascending
  std::vector<std::size_t> perm;  // values[i] == input[perm[i]]
};
SortResult sort_with_permutation(const Tensor& a);

// [n] -> [n,n] matrix of (a_i - a_j)^2
Tensor pairwise_sqdiff(const Tensor& a);

// Average of bilinear samples over an ROI of a [C,H,W] map; box in
// normalized [0,1] coordinates, bins x bins grid, adaptive sampling so a
// whole-image box with bins=1 reproduces the exact global mean.
Tensor roi_align_avg(const Tensor& fmap, double x0, double y0, double x1,
                     double y1, std::size_t bins);

}  // namespace avt
