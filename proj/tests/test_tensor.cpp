#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avt/checkpoint.hpp"
#include "avt/grad_check.hpp"
#include "avt/ops.hpp"
#include "avt/tensor.hpp"

using namespace avt;

namespace {

Tensor weighted_sum(const Tensor& y, const Tensor& w) {
  return sum_all(mul(y, w));
}

// f(x) -> scalar via a fixed random weighting of op(x), then finite-diff check
void check_op_grad(const std::function<Tensor(const Tensor&)>& op,
                   const Tensor& x, double tol = 1e-4, double eps = 1e-5) {
  Rng rng(999);
  Tensor probe;  // built after first call to know the output shape
  auto f = [&](const Tensor& v) {
    Tensor y = op(v);
    if (!probe.defined()) {
      Rng r2(999);
      probe = Tensor::rand_uniform(y.shape(), r2, -1.0, 1.0);
    }
    return weighted_sum(y, probe);
  };
  auto report = grad_check(f, x, eps, tol);
  CAPTURE(report.max_rel_err);
  CAPTURE(report.error);
  CHECK(report.pass);
}

Tensor jittered(const Shape& s, Rng& rng, double margin = 0.05) {
  std::vector<double> v(numel(s));
  for (auto& x : v) {
    double u = rng.uniform(-1.0, 1.0);
    x = u + (u >= 0 ? margin : -margin);
  }
  return Tensor(s, std::move(v));
}

}  // namespace

TEST_CASE("tensor construction enforces shape/data consistency") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
}

TEST_CASE("softmax of uniform logits is uniform") {
  Tensor x = Tensor::from_vector({0, 0, 0});
  Tensor s = softmax(x, 0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(s[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("matmul by identity is identity") {
  Tensor eye(Shape{3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(5);
  Tensor x = Tensor::randn({3, 4}, rng);
  Tensor y = matmul(eye, x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("sort returns values and permutation") {
  auto r = sort_with_permutation(Tensor::from_vector({3, 1, 2}));
  CHECK(r.values.values() == std::vector<double>{1, 2, 3});
  CHECK(r.perm == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from_vector({1, 2});
  x.set_requires_grad(true);
  Tensor loss = sum_all(mul(x, x));
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward on a constant root writes no grads") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from_vector({1, 2});
  x.set_requires_grad(true);
  Tensor c = Tensor::scalar(3.0);
  tape.backward(c);  // not on the tape: no-op
  CHECK_FALSE(x.has_grad());
  CHECK_THROWS_AS(tape.backward(x), ShapeError);  // non-scalar root
}

TEST_CASE("repeated backward accumulates leaf grads") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from_vector({1, 2});
  x.set_requires_grad(true);
  Tensor loss = sum_all(mul(x, x));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{4, 8});
  x.zero_grad();
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
}

TEST_CASE("grad flows through both uses of a shared tensor") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from_vector({2});
  x.set_requires_grad(true);
  Tensor y = mul(x, x);            // x^2
  Tensor z = sum_all(add(y, x));   // x^2 + x -> dz/dx = 2x + 1 = 5
  tape.backward(z);
  CHECK(x.grad()[0] == 5);
}

TEST_CASE("grad_check: linear function has zero error") {
  // exactly representable values and step, so the central difference is exact
  Tensor x = Tensor::from_vector({1, 2, 3, -4, 5, 6});
  auto rep = grad_check([](const Tensor& v) { return sum_all(v); }, x, 0.25, 1e-15);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err == 0.0);

  Rng rng(11);
  Tensor xr = Tensor::randn({6}, rng);
  auto rep2 = grad_check([](const Tensor& v) { return sum_all(v); }, xr, 1e-5, 1e-9);
  CHECK(rep2.pass);
}

TEST_CASE("grad_check: sum(sigmoid(x)) passes at 1e-4") {
  Rng rng(12);
  Tensor x = Tensor::randn({10}, rng);
  auto rep = grad_check([](const Tensor& v) { return sum_all(sigmoid(v)); }, x,
                        1e-5, 1e-4);
  CHECK(rep.pass);
}

TEST_CASE("grad_check reports non-finite instead of throwing") {
  Tensor x = Tensor::from_vector({-1.0});
  auto rep = grad_check([](const Tensor& v) { return sum_all(log_op(v)); }, x,
                        1e-5, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.error.empty());
}

TEST_CASE("layer_norm gradient matches finite differences") {
  Rng rng(13);
  Tensor x = Tensor::randn({4, 8}, rng);
  Tensor gamma = Tensor::rand_uniform({8}, rng, 0.5, 1.5);
  Tensor beta = Tensor::randn({8}, rng, 0.1);
  check_op_grad([&](const Tensor& v) { return layer_norm(v, gamma, beta); }, x);
  // and w.r.t. scale/shift
  check_op_grad([&](const Tensor& g) { return layer_norm(x, g, beta); }, gamma);
  check_op_grad([&](const Tensor& b) { return layer_norm(x, gamma, b); }, beta);
}

TEST_CASE("elementwise and scalar op gradients") {
  Rng rng(17);
  Tensor a = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::rand_uniform({3, 4}, rng, 0.5, 2.0);
  Tensor suffix = Tensor::rand_uniform({4}, rng, 0.5, 2.0);

  check_op_grad([&](const Tensor& v) { return add(v, b); }, a);
  check_op_grad([&](const Tensor& v) { return sub(v, b); }, a);
  check_op_grad([&](const Tensor& v) { return mul(v, b); }, a);
  check_op_grad([&](const Tensor& v) { return div(v, b); }, a);
  check_op_grad([&](const Tensor& v) { return div(a, v); }, b);
  check_op_grad([&](const Tensor& v) { return add(v, suffix); }, a);
  check_op_grad([&](const Tensor& v) { return add(a, v); }, suffix);
  check_op_grad([&](const Tensor& v) { return sub(v, suffix); }, a);
  check_op_grad([&](const Tensor& v) { return sub(suffix, v); }, a);
  check_op_grad([&](const Tensor& v) { return mul(v, suffix); }, a);
  check_op_grad([&](const Tensor& v) { return mul(a, v); }, suffix);
  check_op_grad([&](const Tensor& v) { return div(v, suffix); }, a);
  check_op_grad([&](const Tensor& v) { return div(a, v); }, suffix);
  check_op_grad([&](const Tensor& v) { return add_scalar(v, 1.7); }, a);
  check_op_grad([&](const Tensor& v) { return mul_scalar(v, -0.3); }, a);
  check_op_grad([&](const Tensor& v) { return neg(v); }, a);
}

TEST_CASE("unary op gradients (jittered off kinks)") {
  Rng rng(19);
  Tensor x = jittered({3, 5}, rng);
  Tensor pos = Tensor::rand_uniform({3, 5}, rng, 0.2, 2.0);
  check_op_grad([](const Tensor& v) { return relu(v); }, x);
  check_op_grad([](const Tensor& v) { return sigmoid(v); }, x);
  check_op_grad([](const Tensor& v) { return tanh_op(v); }, x);
  check_op_grad([](const Tensor& v) { return exp_op(v); }, x);
  check_op_grad([](const Tensor& v) { return log_op(v); }, pos);
  check_op_grad([](const Tensor& v) { return abs_op(v); }, x);
  check_op_grad([](const Tensor& v) { return square(v); }, x);
}

TEST_CASE("softmax gradient and properties") {
  Rng rng(23);
  Tensor x = Tensor::randn({4, 6}, rng);
  check_op_grad([](const Tensor& v) { return softmax(v, 1); }, x);
  check_op_grad([](const Tensor& v) { return softmax(v, 0); }, x);

  Tensor s = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 6; ++c) sum += s[r * 6 + c];
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
  // shift invariance at the logit level
  Tensor shifted = softmax(add_scalar(x, 7.3), 1);
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK(std::fabs(s[i] - shifted[i]) < 1e-9);

  CHECK_THROWS_AS(softmax(x, 2), ValueError);
}

TEST_CASE("matmul family gradients") {
  Rng rng(29);
  Tensor a = Tensor::randn({3, 4}, rng);
  Tensor b = Tensor::randn({4, 5}, rng);
  check_op_grad([&](const Tensor& v) { return matmul(v, b); }, a);
  check_op_grad([&](const Tensor& v) { return matmul(a, v); }, b);

  Tensor ba = Tensor::randn({2, 3, 4}, rng);
  Tensor bb = Tensor::randn({2, 4, 5}, rng);
  check_op_grad([&](const Tensor& v) { return bmm(v, bb); }, ba);
  check_op_grad([&](const Tensor& v) { return bmm(ba, v); }, bb);

  check_op_grad([](const Tensor& v) { return transpose(v); }, a);
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("structure op gradients") {
  Rng rng(31);
  Tensor a = Tensor::randn({3, 4, 2}, rng);
  check_op_grad([](const Tensor& v) { return reshape(v, {6, 4}); }, a);
  check_op_grad([](const Tensor& v) { return slice(v, 1, 1, 2); }, a);
  check_op_grad([](const Tensor& v) { return flip(v, 1); }, a);
  Tensor b = Tensor::randn({3, 2, 2}, rng);
  check_op_grad([&](const Tensor& v) { return concat({v, b}, 1); }, a);
  check_op_grad([&](const Tensor& v) { return concat({b, v, b}, 1); }, a);
  CHECK_THROWS_AS(slice(a, 1, 3, 2), ShapeError);
  CHECK_THROWS_AS(concat({a, Tensor::zeros({3, 2, 3})}, 1), ShapeError);
}

TEST_CASE("reduction gradients") {
  Rng rng(37);
  Tensor a = Tensor::randn({3, 4, 2}, rng);
  check_op_grad([](const Tensor& v) { return sum_all(v); }, a);
  check_op_grad([](const Tensor& v) { return mean_all(v); }, a);
  check_op_grad([](const Tensor& v) { return sum_axis(v, 1); }, a);
  check_op_grad([](const Tensor& v) { return mean_axis(v, 0); }, a);
  check_op_grad([](const Tensor& v) { return mean_axis(v, 2); }, a);
}

TEST_CASE("conv2d forward matches hand computation") {
  // 1x3x3 input, 1x1x2x2 kernel of ones, stride 1, no pad
  Tensor x(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor y = conv2d(x, w, Tensor());
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(y.values() == std::vector<double>{12, 16, 24, 28});
  Tensor yb = conv2d(x, w, Tensor::from_vector({10.0}));
  CHECK(yb.values() == std::vector<double>{22, 26, 34, 38});
}

TEST_CASE("conv2d/conv3d gradients") {
  Rng rng(41);
  Tensor x = Tensor::randn({2, 5, 6}, rng);
  Tensor w = Tensor::randn({3, 2, 3, 3}, rng, 0.5);
  Tensor bias = Tensor::randn({3}, rng, 0.1);
  check_op_grad([&](const Tensor& v) { return conv2d(v, w, bias, 1, 1); }, x);
  check_op_grad([&](const Tensor& v) { return conv2d(x, v, bias, 1, 1); }, w);
  check_op_grad([&](const Tensor& v) { return conv2d(x, w, v, 1, 1); }, bias);
  check_op_grad([&](const Tensor& v) { return conv2d(v, w, bias, 2, 0); }, x);
  check_op_grad([&](const Tensor& v) { return conv2d(x, v, bias, 2, 0); }, w);

  Tensor x3 = Tensor::randn({2, 3, 4, 4}, rng);
  Tensor w3 = Tensor::randn({2, 2, 2, 3, 3}, rng, 0.5);
  Tensor b3 = Tensor::randn({2}, rng, 0.1);
  check_op_grad([&](const Tensor& v) { return conv3d(v, w3, b3, 1, 1); }, x3);
  check_op_grad([&](const Tensor& v) { return conv3d(x3, v, b3, 1, 1); }, w3);
  check_op_grad([&](const Tensor& v) { return conv3d(x3, w3, v, 1, 1); }, b3);

  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({3, 1, 3, 3}), Tensor()), ShapeError);
}

TEST_CASE("pooling, upsample, sort, pairwise gradients") {
  Rng rng(43);
  Tensor x = jittered({2, 4, 6}, rng);
  check_op_grad([](const Tensor& v) { return max_pool2d(v, 2, 2); }, x);
  Tensor x3 = jittered({2, 2, 4, 4}, rng);
  check_op_grad([](const Tensor& v) { return max_pool3d(v, 2, 2, 2); }, x3);
  Tensor small = Tensor::randn({3, 2}, rng);
  check_op_grad([](const Tensor& v) { return upsample_nearest2d(v, 2, 3); },
                small);

  Tensor vec = jittered({7}, rng, 0.21);  // distinct with margin
  check_op_grad([](const Tensor& v) { return sort_with_permutation(v).values; },
                vec, 1e-4);
  check_op_grad([](const Tensor& v) { return pairwise_sqdiff(v); }, vec);
}

TEST_CASE("max_pool2d forward picks window maxima") {
  Tensor x(Shape{1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 7});
  Tensor y = max_pool2d(x, 2, 2);
  CHECK(y.shape() == Shape{1, 1, 2});
  CHECK(y.values() == std::vector<double>{5, 8});
}

TEST_CASE("upsample_nearest2d repeats values") {
  Tensor x(Shape{1, 2}, {3, 4});
  Tensor y = upsample_nearest2d(x, 2, 2);
  CHECK(y.shape() == Shape{2, 4});
  CHECK(y.values() == std::vector<double>{3, 3, 4, 4, 3, 3, 4, 4});
}

TEST_CASE("roi_align_avg: whole-image box with bins=1 is the exact mean") {
  Rng rng(47);
  Tensor fmap = Tensor::randn({3, 4, 6}, rng);
  Tensor avg = roi_align_avg(fmap, 0.0, 0.0, 1.0, 1.0, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < 24; ++i) m += fmap[c * 24 + i];
    m /= 24.0;
    CHECK(avg[c] == doctest::Approx(m).epsilon(1e-12));
  }
  check_op_grad(
      [](const Tensor& v) { return roi_align_avg(v, 0.1, 0.2, 0.9, 0.8, 2); },
      fmap);
  CHECK_THROWS_AS(roi_align_avg(fmap, 0.5, 0.5, 0.5, 0.9, 1), ValueError);
}

TEST_CASE("shape errors carry op name and shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4]") != std::string::npos);
  }
}

TEST_CASE("identical seeds give bit-identical forward and backward") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::randn({4, 4}, rng);
    x.set_requires_grad(true);
    Tensor w = Tensor::randn({4, 4}, rng);
    w.set_requires_grad(true);
    Tensor y = mean_all(square(tanh_op(matmul(x, w))));
    tape.backward(y);
    std::vector<double> out = {y.item()};
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  CHECK(run(123) == run(123));
}

TEST_CASE("checkpoint round trip preserves names, shapes, bits") {
  Rng rng(53);
  std::vector<NamedTensor> params;
  params.push_back({"enc/w", Tensor::randn({3, 4}, rng)});
  params.push_back({"enc/b", Tensor::randn({4}, rng)});
  params.push_back({"scalar", Tensor::scalar(-0.25)});
  std::string path = "ckpt_test.avtt";
  save_checkpoint(path, params);
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].name == params[i].name);
    CHECK(loaded[i].tensor.shape() == params[i].tensor.shape());
    CHECK(loaded[i].tensor.values() == params[i].tensor.values());
  }
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("missing_file.avtt"), IoError);
}

TEST_CASE("f32 tensor file round trip") {
  Rng rng(59);
  Tensor t = Tensor::rand_uniform({2, 3, 4}, rng, 0.0, 1.0);
  std::string path = "frames_test.avtf";
  save_f32_tensor(path, t);
  Tensor back = load_f32_tensor(path);
  REQUIRE(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(back[i] == doctest::Approx(t[i]).epsilon(1e-6));
  std::remove(path.c_str());
}
