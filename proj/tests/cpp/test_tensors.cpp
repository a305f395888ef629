#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bpdo/autodiff.hpp"
#include "bpdo/error.hpp"
#include "bpdo/gradcheck.hpp"
#include "bpdo/random.hpp"
#include "bpdo/tensors.hpp"

using namespace bpdo;

namespace {

TensorField random_field(Rng& rng, std::size_t c, std::size_t r, std::size_t k) {
  std::vector<double> v(c * r * k);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return TensorField(c, r, k, std::move(v));
}

// Direct bilinear formula with explicit zero padding.
double bilinear_oracle(const TensorField& f, std::size_t ch, double x, double y) {
  auto val = [&](long r, long c) {
    if (r < 0 || c < 0 || r >= static_cast<long>(f.rows()) || c >= static_cast<long>(f.cols())) return 0.0;
    return f.at(ch, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  const double x0 = std::floor(x), y0 = std::floor(y);
  const double ax = x - x0, ay = y - y0;
  const long c0 = static_cast<long>(x0), r0 = static_cast<long>(y0);
  return (1 - ax) * (1 - ay) * val(r0, c0) + ax * (1 - ay) * val(r0, c0 + 1) + (1 - ax) * ay * val(r0 + 1, c0) +
         ax * ay * val(r0 + 1, c0 + 1);
}

}  // namespace

TEST(TensorField, RejectsBadShapesAndNonFinite) {
  EXPECT_THROW(TensorField(1, 2, 2, std::vector<double>(3)), InvalidInput);
  EXPECT_THROW(TensorField(1, 1, 1, std::vector<double>{NAN}), InvalidInput);
  EXPECT_THROW(TensorField(1, 1, 1, INFINITY), InvalidInput);
}

TEST(Bilinear, Examples) {
  const TensorField f(1, 2, 2, std::vector<double>{0, 1, 2, 3});
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {0, 0})[0], 0.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {0.5, 0.5})[0], 1.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {1, 0})[0], 1.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {0, 1})[0], 2.0);
  EXPECT_THROW(bilinear_sample(TensorField(), {0, 0}), InvalidInput);
}

TEST(Bilinear, MatchesDirectFormula) {
  Rng rng(11);
  const TensorField f = random_field(rng, 3, 8, 8);
  const auto v = bilinear_sample(f, {2.37, 5.81});
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(v[c], bilinear_oracle(f, c, 2.37, 5.81), 1e-12);
  for (int i = 0; i < 500; ++i) {
    const double x = rng.uniform(-2.0, 10.0), y = rng.uniform(-2.0, 10.0);
    const auto s = bilinear_sample(f, {x, y});
    for (std::size_t c = 0; c < 3; ++c) ASSERT_NEAR(s[c], bilinear_oracle(f, c, x, y), 1e-12) << x << "," << y;
  }
}

TEST(Bilinear, ZeroPaddingOutside) {
  const TensorField f(1, 3, 3, 1.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {-0.5, 1})[0], 0.5);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {-5, -5})[0], 0.0);
  EXPECT_DOUBLE_EQ(bilinear_sample(f, {2.5, 2.5})[0], 0.25);
}

TEST(Bilinear, LinearInFieldAndExactAtIntegers) {
  Rng rng(12);
  const TensorField f = random_field(rng, 2, 6, 5), g = random_field(rng, 2, 6, 5);
  std::vector<double> mix(f.size());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.5 * f.data()[i] - 0.75 * g.data()[i];
  const TensorField h(2, 6, 5, mix);
  for (int i = 0; i < 100; ++i) {
    const Point2 p{rng.uniform(-1, 6), rng.uniform(-1, 7)};
    const auto a = bilinear_sample(f, p), b = bilinear_sample(g, p), c = bilinear_sample(h, p);
    for (std::size_t k = 0; k < 2; ++k) ASSERT_NEAR(c[k], 2.5 * a[k] - 0.75 * b[k], 1e-9);
  }
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 5; ++c) {
      const auto v = bilinear_sample(f, {static_cast<double>(c), static_cast<double>(r)});
      EXPECT_EQ(v[0], f.at(0, r, c));
      EXPECT_EQ(v[1], f.at(1, r, c));
    }
  }
}

TEST(Linear, Examples) {
  LinearParams id(3, 3);
  id.weight = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const std::vector<double> x{1, 2, 3};
  EXPECT_EQ(linear_apply(id, x), x);
  LinearParams z(3, 1);
  z.bias = {5};
  EXPECT_EQ(linear_apply(z, x), std::vector<double>{5});
  EXPECT_THROW(linear_apply(z, std::vector<double>{1, 2}), InvalidInput);
}

TEST(Linear, MatchesHandMatmul) {
  Rng rng(4);
  LinearParams p = LinearParams::random(4, 2, rng);
  p.bias = {0.3, -0.2};
  const std::vector<double> x{0.5, -1.0, 2.0, 0.25};
  const auto y = linear_apply(p, x);
  for (std::size_t o = 0; o < 2; ++o) {
    double acc = p.bias[o];
    for (std::size_t i = 0; i < 4; ++i) acc += p.weight[o * 4 + i] * x[i];
    EXPECT_NEAR(y[o], acc, 1e-15);
  }
}

TEST(Activation, Examples) {
  EXPECT_EQ(activation(Activation::relu, std::vector<double>{-1, 2}), (std::vector<double>{0, 2}));
  EXPECT_DOUBLE_EQ(activation(Activation::sigmoid, std::vector<double>{0})[0], 0.5);
  const auto s = activation(Activation::softmax, std::vector<double>{1, 1, 1});
  for (double v : s) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(activation(Activation::tanh, std::vector<double>{}), InvalidInput);
  EXPECT_THROW(parse_activation("gelu"), InvalidInput);
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
}

TEST(Activation, SoftmaxSumsToOneAndIsShiftInvariant) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(7), y(7);
    for (std::size_t i = 0; i < 7; ++i) {
      x[i] = rng.uniform(-30, 30);
      y[i] = x[i] + 123.0;
    }
    const auto a = activation(Activation::softmax, x), b = activation(Activation::softmax, y);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-9);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(GradCheck, SquareFunction) {
  std::vector<double> x{3.0};
  const ParamRef ref{"x", x, 1, 1};
  const auto r = grad_check("square", [&](ad::Tape& t) {
    const ad::Var v = bind(t, ref);
    return ad::mul(v, v);
  }, std::span(&ref, 1));
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_err, 1e-8);
  EXPECT_EQ(r.n_params_checked, 1u);
  EXPECT_EQ(x[0], 3.0);  // restored
}

TEST(GradCheck, RejectsNonScalar) {
  std::vector<double> x{1.0, 2.0};
  const ParamRef ref{"x", x, 1, 2};
  EXPECT_THROW(grad_check("vec", [&](ad::Tape& t) { return bind(t, ref); }, std::span(&ref, 1)), InvalidInput);
}

TEST(GradCheck, DetectsWrongGradient) {
  std::vector<double> x{0.7, -0.3};
  const ParamRef ref{"x", x, 1, 2};
  // A deliberately broken op: forward 2x, backward claims 3.
  const auto r = grad_check("broken", [&](ad::Tape& t) {
    const ad::Var v = bind(t, ref);
    ad::Var y = t.record(v.value() * 2.0, {v}, [&t, v](const ad::Matrix& g, const ad::Matrix&) {
      t.grad_buffer(v) += 3.0 * g;
    });
    return ad::sum(y);
  }, std::span(&ref, 1));
  EXPECT_FALSE(r.passed);
  EXPECT_NEAR(r.max_abs_err, 1.0, 1e-6);
}

TEST(GradCheck, PassedFollowsToleranceOrFloor) {
  std::vector<double> x{0.5};
  const ParamRef ref{"x", x, 1, 1};
  GradCheckOptions opt;
  opt.rel_tol = 0.0;
  opt.abs_floor = 1.0;
  const auto r = grad_check("tanh", [&](ad::Tape& t) { return ad::tanh(bind(t, ref)); }, std::span(&ref, 1), opt);
  EXPECT_EQ(r.passed, r.max_rel_err <= opt.rel_tol || r.max_abs_err <= opt.abs_floor);
  EXPECT_TRUE(r.passed);
}
