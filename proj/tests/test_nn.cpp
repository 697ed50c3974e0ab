#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "splitface/error.hpp"
#include "splitface/model.hpp"
#include "splitface/nn/adam.hpp"
#include "splitface/nn/gradcheck.hpp"
#include "splitface/nn/network.hpp"
#include "splitface/nn/ops.hpp"
#include "splitface/rng.hpp"

using namespace splitface;
using namespace splitface::nn;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Central difference of the scalar sum_i c_i * f(x)_i with respect to x.
Tensor<double> numeric_grad(const std::function<Tensor<double>(const Tensor<double>&)>& f, Tensor<double> x,
                            const Tensor<double>& coeff, double h = 1e-5) {
  Tensor<double> g(x.shape());
  auto objective = [&](const Tensor<double>& in) {
    const auto out = f(in);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += coeff[i] * out[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = objective(x);
    x[i] = keep - h;
    const double down = objective(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double max_rel_error(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]) / std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-6}));
  return worst;
}

}  // namespace

TEST_CASE("conv3x3 hand examples") {
  Tensor<double> x({1, 1, 3, 3}, 1.0), w({1, 1, 3, 3}, 1.0), b({1}, 0.0);
  const auto y = conv3x3_forward(x, w, b);
  CHECK(y.at(0, 0, 1, 1) == 9.0);
  CHECK(y.at(0, 0, 0, 0) == 4.0);
  CHECK(y.at(0, 0, 2, 2) == 4.0);
  CHECK(y.at(0, 0, 0, 1) == 6.0);

  const auto in = random_tensor({2, 3, 5, 4}, 1);
  Tensor<double> id({3, 3, 3, 3}, 0.0), zero({3}, 0.0);
  for (int c = 0; c < 3; ++c) id.at(c, c, 1, 1) = 1.0;
  CHECK(conv3x3_forward(in, id, zero) == in);

  CHECK_THROWS_AS(conv3x3_forward(in, Tensor<double>({3, 2, 3, 3}), zero), ShapeMismatch);
}

TEST_CASE("conv3x3 gradients match finite differences") {
  const auto x = random_tensor({1, 2, 5, 5}, 2);
  const auto w = random_tensor({3, 2, 3, 3}, 3);
  const auto b = random_tensor({3}, 4);
  const auto c = random_tensor({1, 3, 5, 5}, 5);
  const auto g = conv3x3_backward(x, w, c);
  CHECK(max_rel_error(g.input, numeric_grad([&](const auto& t) { return conv3x3_forward(t, w, b); }, x, c)) < 1e-6);
  CHECK(max_rel_error(g.weights, numeric_grad([&](const auto& t) { return conv3x3_forward(x, t, b); }, w, c)) < 1e-6);
  CHECK(max_rel_error(g.bias, numeric_grad([&](const auto& t) { return conv3x3_forward(x, w, t); }, b, c)) < 1e-6);
}

TEST_CASE("max pooling") {
  Tensor<double> ramp({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) ramp[i] = i;
  const auto r = maxpool3x3s2_forward(ramp);
  CHECK(r.output.shape() == Shape{1, 1, 1, 1});
  CHECK(r.output[0] == 10.0);

  const auto flat = maxpool3x3s2_forward(Tensor<double>({1, 2, 9, 9}, 3.5));
  for (double v : flat.output.values()) CHECK(v == 3.5);

  const auto x = random_tensor({2, 3, 7, 7}, 9);
  const auto p = maxpool3x3s2_forward(x);
  CHECK(p.output.dim(2) == maxpool_extent(7));
  const auto g = maxpool3x3s2_backward(Tensor<double>(p.output.shape(), 1.0), p.argmax, x.shape());
  double total = 0;
  for (double v : g.values()) total += v;
  CHECK(total == static_cast<double>(p.output.size()));
}

TEST_CASE("batch normalisation") {
  const auto x = random_tensor({4, 3, 5, 5}, 11, 3.0);
  Tensor<double> gamma({3}, 1.0), beta({3}, 0.0);
  BatchNormCache<double> cache;
  const auto y = batchnorm_train_forward(x, gamma, beta, cache);
  for (int c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) mean += y.at(n, c, i / 5, i % 5);
    mean /= 100;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) sq += std::pow(y.at(n, c, i / 5, i % 5) - mean, 2);
    CHECK(std::fabs(mean) < 1e-6);
    // Biased variance is var / (var + eps), within 1e-6 of one for unit-scale data.
    CHECK(sq / 100 == doctest::Approx(1.0).epsilon(1e-5));
  }

  Tensor<double> rm({3}, 0.0), rv({3}, 1.0);
  const auto e = batchnorm_eval_forward(x, gamma, beta, rm, rv);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(e[i] == doctest::Approx(x[i] / std::sqrt(1 + 1e-5)));

  batchnorm_update_running(cache, rm, rv);
  for (int c = 0; c < 3; ++c) {
    CHECK(rm[c] == doctest::Approx(0.1 * cache.mean[c]));
    CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * cache.variance[c]));
  }

  const auto g = random_tensor({3}, 12), b = random_tensor({3}, 13);
  const auto coeff = random_tensor(x.shape(), 14);
  BatchNormCache<double> c2;
  batchnorm_train_forward(x, g, b, c2);
  const auto grads = batchnorm_backward(coeff, g, c2);
  auto fwd_x = [&](const Tensor<double>& t) {
    BatchNormCache<double> tmp;
    return batchnorm_train_forward(t, g, b, tmp);
  };
  auto fwd_g = [&](const Tensor<double>& t) {
    BatchNormCache<double> tmp;
    return batchnorm_train_forward(x, t, b, tmp);
  };
  CHECK(max_rel_error(grads.input, numeric_grad(fwd_x, x, coeff)) < 1e-5);
  CHECK(max_rel_error(grads.gamma, numeric_grad(fwd_g, g, coeff)) < 1e-5);

  BatchNorm<double> layer("bn", 2);
  TrainContext ctx;
  CHECK_THROWS_AS(layer.forward(Tensor<double>({1, 2, 3, 3}, 1.0), ctx), DegenerateBatch);
}

TEST_CASE("global average pooling") {
  Tensor<double> m({1, 1, 2, 2});
  m[0] = 1, m[1] = 2, m[2] = 3, m[3] = 4;
  CHECK(gap_forward(m)[0] == 2.5);
  CHECK(gap_forward(Tensor<double>({2, 3, 4, 5}, 1.75))[5] == 1.75);
  const auto g = gap_backward(Tensor<double>({1, 1}, 1.0), Shape{1, 1, 3, 4});
  for (double v : g.values()) CHECK(v == doctest::Approx(1.0 / 12));
}

TEST_CASE("dense, relu, sigmoid, dropout") {
  const auto x = random_tensor({3, 5}, 21), w = random_tensor({4, 5}, 22), b = random_tensor({4}, 23);
  const auto c = random_tensor({3, 4}, 24);
  const auto g = dense_backward(x, w, c);
  CHECK(max_rel_error(g.input, numeric_grad([&](const auto& t) { return dense_forward(t, w, b); }, x, c)) < 1e-6);
  CHECK(max_rel_error(g.weights, numeric_grad([&](const auto& t) { return dense_forward(x, t, b); }, w, c)) < 1e-6);
  CHECK(max_rel_error(g.bias, numeric_grad([&](const auto& t) { return dense_forward(x, w, t); }, b, c)) < 1e-6);
  CHECK_THROWS_AS(dense_forward(x, Tensor<double>({4, 6}), b), ShapeMismatch);

  CHECK(sigmoid_forward(Tensor<double>({1}, 0.0))[0] == 0.5);
  const auto s = sigmoid_forward(x);
  const auto sc = random_tensor(x.shape(), 25);
  CHECK(max_rel_error(sigmoid_backward(sc, s), numeric_grad([](const auto& t) { return sigmoid_forward(t); }, x, sc)) <
        1e-6);
  const auto r = relu_forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(r[i] == std::max(0.0, x[i]));

  Rng rng(1);
  std::vector<double> mask;
  CHECK(dropout_forward(x, 0.0, rng, mask) == x);
  Dropout<double> layer(0.0);
  TrainContext ctx;
  CHECK(layer.forward(x, ctx) == x);
  CHECK(layer.infer(x) == x);

  Tensor<double> ones({1, 20000}, 1.0);
  const auto d = dropout_forward(ones, 0.2, rng, mask);
  double sum = 0;
  for (double v : d.values()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.25)));
    sum += v;
  }
  CHECK(sum / 20000 == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("weighted binary cross-entropy") {
  const std::vector<double> s = {0.5}, y = {1}, w = {0.1};
  CHECK(weighted_bce<double>(s, y, w) == doctest::Approx(0.1 * std::log(2.0)).epsilon(1e-12));
  const std::vector<double> near = {1.0 - 1e-12};
  CHECK(weighted_bce<double>(near, y, w) < 1e-6);
  const std::vector<double> clipped = {0.0};
  CHECK(std::isfinite(weighted_bce<double>(clipped, y, w)));

  const std::vector<double> ss = {0.2, 0.7, 0.45}, yy = {0, 1, 1}, ww = {0.3, 0.6, 0.9};
  const auto g = weighted_bce_backward<double>(ss, yy, ww);
  for (int j = 0; j < 3; ++j) {
    CHECK(g[j] == doctest::Approx(ww[j] * (ss[j] - yy[j]) / (ss[j] * (1 - ss[j]))).epsilon(1e-12));
    auto up = ss, down = ss;
    up[j] += 1e-6, down[j] -= 1e-6;
    const double fd = (weighted_bce<double>(up, yy, ww) - weighted_bce<double>(down, yy, ww)) / 2e-6;
    CHECK(std::fabs(fd - g[j]) / std::fabs(g[j]) < 1e-6);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by about lr") {
    Parameter<double> p("p", Tensor<double>({3}, 2.0));
    p.grad.fill(1.0);
    AdamState<double> st;
    adam_step<double>({&p}, st);
    for (double v : p.value.values()) CHECK(v == doctest::Approx(2.0 - 0.001).epsilon(1e-9));
    CHECK(st.step == 1);
  }
  SUBCASE("zero gradients leave parameters alone") {
    Parameter<double> p("p", Tensor<double>({2}, -0.5));
    AdamState<double> st;
    for (int i = 0; i < 50; ++i) adam_step<double>({&p}, st);
    for (double v : p.value.values()) CHECK(v == -0.5);
  }
  SUBCASE("x^2 matches a scalar reference run") {
    Parameter<double> p("x", Tensor<double>({1}, 1.0));
    AdamState<double> st;
    double x = 1, m = 0, v = 0;
    double prev = 1;
    for (int t = 1; t <= 100; ++t) {
      p.grad[0] = 2 * p.value[0];
      adam_step<double>({&p}, st);
      const double g = 2 * x;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      x -= 0.001 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-12));
      CHECK(std::fabs(p.value[0]) < prev);
      prev = std::fabs(p.value[0]);
    }
  }
}

TEST_CASE("gradient checker") {
  SUBCASE("single dense layer") {
    NetworkSpec spec;
    spec.layers.push_back({LayerKind::gap});
    spec.layers.push_back({LayerKind::dense, 4});
    const auto r = gradient_check(spec, random_tensor({3, 5, 2, 2}, 31), 1e-7);
    CHECK(r.max_relative_error < 1e-7);
  }
  SUBCASE("toy conv stack") {
    const auto r = gradient_check(toy_network_spec(), random_tensor({2, 3, 8, 8}, 32), 1e-4);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.parameters.size() >= 10);
  }
  SUBCASE("corrupted backward is caught") {
    // A layer whose backward doubles the true gradient.
    struct Doubling final : Layer<double> {
      LayerKind kind() const override { return LayerKind::relu; }
      Shape output_shape(const Shape& in) const override { return in; }
      Tensor<double> infer(const Tensor<double>& x) const override { return x; }
      Tensor<double> forward(const Tensor<double>& x, TrainContext&) override { return x; }
      Tensor<double> backward(const Tensor<double>& g) override {
        Tensor<double> out = g;
        for (auto& v : out.values()) v *= 2;
        return out;
      }
    };
    Rng init(5);
    Sequential<double> net;
    net.add(std::make_unique<Dense<double>>("d", 4, 3, init));
    net.add(std::make_unique<Doubling>());
    CHECK_THROWS_AS(gradient_check(net, random_tensor({2, 4}, 33), 1e-4), ToleranceExceeded);
  }
}

TEST_CASE("network shapes are static") {
  for (double width : {1.0, 0.25}) {
    Rng init(1);
    Sequential<float> seg("s", segment_body_spec(width), 3, init);
    Sequential<float> full("f", full_face_body_spec(width), 3, init);
    const Shape si{2, 3, kSegmentInputSize, kSegmentInputSize}, fi{1, 3, kFullInputSize, kFullInputSize};
    CHECK(seg.infer(Tensor<float>(si, 0.5f)).shape() == seg.output_shape(si));
    CHECK(full.infer(Tensor<float>(fi, 0.5f)).shape() == full.output_shape(fi));
    CHECK(full_face_body_spec(width).output_shape(fi)[1] == static_cast<int>(256 * width));
  }
}

TEST_CASE("eval forward does not mutate state") {
  Rng init(3);
  Sequential<double> net("n", toy_network_spec(), 3, init);
  const auto x = random_tensor({2, 3, 8, 8}, 41);
  std::vector<Tensor<double>> before;
  for (auto* b : net.buffers()) before.push_back(b->value);
  const auto a = net.infer(x);
  const auto b = net.infer(x);
  CHECK(a == b);
  std::size_t i = 0;
  for (auto* buf : net.buffers()) CHECK(buf->value == before[i++]);
}
