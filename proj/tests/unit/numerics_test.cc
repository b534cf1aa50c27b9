/*
 * Copyright 2026 The LoopCTR Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "loopctr/autograd.h"
#include "loopctr/errors.h"
#include "loopctr/grad_check.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"
#include "loopctr/ops.h"
#include "loopctr/tensor.h"
#include "test_support.h"

namespace loopctr {
namespace {

using testing::random_projection;
using testing::uniform_size;
using testing::uniform_tensor;

// Left-to-right triple loop starting from `c`.
void naive_accumulate(const std::vector<double>& a, std::size_t ai, std::size_t at,
                      const std::vector<double>& b, std::vector<double>& c, std::size_t m,
                      std::size_t k, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double s = c[i * p + j];
      for (std::size_t t = 0; t < k; ++t) s += a[i * ai + t * at] * b[t * p + j];
      c[i * p + j] = s;
    }
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ContractViolation);
  EXPECT_THROW(Tensor({0, 3}), ContractViolation);
  const Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
}

TEST(Tensor, CheckFiniteRejectsNanAndInf) {
  Tensor t = Tensor::vector({1.0, 2.0});
  EXPECT_NO_THROW(check_finite(t, "ok"));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(check_finite(t, "nan"), NonFiniteError);
  t[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(check_finite(t, "inf"), NonFiniteError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matmul(id, x), x);
}

TEST(Matmul, HandArithmetic) {
  EXPECT_EQ(matmul(Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(2, 1, {3, 4})),
            Tensor::matrix(1, 1, {11}));
}

TEST(Matmul, MatchesNaiveTripleLoopExactly) {
  std::mt19937_64 rng(1);
  const Tensor a = uniform_tensor({5, 7}, rng);
  const Tensor b = uniform_tensor({7, 3}, rng);
  std::vector<double> c(15, 0.0);
  naive_accumulate(a.storage(), 7, 1, b.storage(), c, 5, 7, 3);
  EXPECT_EQ(max_abs_diff(matmul(a, b), Tensor({5, 3}, c)), 0.0);
}

TEST(Matmul, InnerExtentMismatchIsContractViolation) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ContractViolation);
}

// Property: every kernel flavour equals the ordered triple loop bit for bit,
// over random shapes that cross the tile and depth-chunk boundaries.
TEST(GemmProperty, AllFlavoursMatchOrderedOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = uniform_size(rng, 1, 13), k = uniform_size(rng, 1, 150),
                      p = uniform_size(rng, 1, 19);
    const auto a = random_vector(m * k, rng);
    const auto b = random_vector(k * p, rng);
    const auto c0 = random_vector(m * p, rng);

    auto want = c0;
    naive_accumulate(a, k, 1, b, want, m, k, p);
    auto got = c0;
    kernel::matmul_accumulate(a, b, got, m, k, p);
    ASSERT_EQ(got, want) << "a b, m=" << m << " k=" << k << " p=" << p;

    // a^T b with a stored [k x m].
    std::vector<double> at(k * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) at[t * m + i] = a[i * k + t];
    got = c0;
    kernel::matmul_at_b_accumulate(at, b, got, k, m, p);
    ASSERT_EQ(got, want) << "a^T b, m=" << m << " k=" << k << " p=" << p;

    // a b^T with b stored [p x k].
    std::vector<double> bt(p * k);
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t j = 0; j < p; ++j) bt[j * k + t] = b[t * p + j];
    got = c0;
    kernel::matmul_a_bt_accumulate(a, bt, got, m, k, p);
    ASSERT_EQ(got, want) << "a b^T, m=" << m << " k=" << k << " p=" << p;
  }
}

// Property: a row of the product does not depend on which other rows share
// the call.
TEST(GemmProperty, RowsIndependentOfBatchComposition) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = uniform_size(rng, 2, 20), k = uniform_size(rng, 1, 40),
                      p = uniform_size(rng, 1, 20);
    const Tensor a = uniform_tensor({m, k}, rng);
    const Tensor b = uniform_tensor({k, p}, rng);
    const Tensor full = matmul(a, b);
    const std::size_t r = uniform_size(rng, 0, m - 1);
    Tensor one({1, k});
    std::copy(a.row(r).begin(), a.row(r).end(), one.row(0).begin());
    const Tensor single = matmul(one, b);
    for (std::size_t j = 0; j < p; ++j) ASSERT_EQ(single(0, j), full(r, j));
  }
}

TEST(Matmul, CountsMultiplyAccumulates) {
  op_counter::reset();
  matmul(Tensor({3, 4}), Tensor({4, 5}));
  EXPECT_EQ(op_counter::snapshot().total(), 60u);
}

TEST(Dot, FixedPairwiseOrder) {
  const std::vector<double> a{1e16, 1.0, -1e16, 1.0, 3.0};
  const std::vector<double> b{1.0, 1.0, 1.0, 1.0, 1.0};
  // (1e16 + 1) + (-1e16 + 1) loses both ones; a serial sum would keep one.
  EXPECT_EQ(kernel::dot(a.data(), b.data(), 5), 3.0);
}

TEST(SoftmaxMasked, SymmetricPair) {
  const Tensor p = softmax_masked(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {1, 1}));
  EXPECT_EQ(p, Tensor::matrix(1, 2, {0.5, 0.5}));
}

TEST(SoftmaxMasked, SingleUnmaskedEntry) {
  const Tensor p = softmax_masked(Tensor::matrix(1, 2, {5, -100}), Tensor::matrix(1, 2, {1, 0}));
  EXPECT_EQ(p, Tensor::matrix(1, 2, {1, 0}));
}

TEST(SoftmaxMasked, HandComputedThreeWay) {
  const Tensor p =
      softmax_masked(Tensor::matrix(1, 3, {1, 2, 3}), Tensor::matrix(1, 3, {1, 1, 1}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(p[0], 0.0900, 1e-4);
  EXPECT_NEAR(p[1], 0.2447, 1e-4);
  EXPECT_NEAR(p[2], 0.6652, 1e-4);
}

TEST(SoftmaxMasked, FullyMaskedRowIsContractViolation) {
  EXPECT_THROW(softmax_masked(Tensor::matrix(1, 2, {0, 0}), Tensor::matrix(1, 2, {0, 0})),
               ContractViolation);
}

TEST(RmsNorm, ZeroInputStaysZero) {
  EXPECT_EQ(rmsnorm(Tensor::matrix(1, 2, {0, 0}), 1e-6), Tensor::matrix(1, 2, {0, 0}));
}

TEST(RmsNorm, HandComputed) {
  const Tensor y = rmsnorm(Tensor::matrix(1, 2, {3, 4}), 0.0);
  EXPECT_NEAR(y[0], 3.0 / std::sqrt(12.5), 1e-15);
  EXPECT_NEAR(y[0], 0.8485, 1e-4);
  EXPECT_NEAR(y[1], 1.1314, 1e-4);
}

TEST(RmsNormProperty, ConstantRowMapsToOnes) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = uniform_size(rng, 1, 40);
    const double c = std::uniform_real_distribution<double>(1e-3, 1e3)(rng);
    const Tensor y = rmsnorm(Tensor({1, n}, c), 0.0);
    for (double v : y.data()) ASSERT_NEAR(v, 1.0, 1e-15);
  }
}

TEST(GradCheck, QuadraticIsExact) {
  const DifferentiableFn f{[](const Tensor& x) { return x[0] * x[0]; },
                           [](const Tensor& x) { return Tensor::scalar(2.0 * x[0]); }};
  EXPECT_LT(grad_check(f, Tensor::scalar(3.0), 1e-5), 1e-8);
}

TEST(GradCheck, SumOfTanh) {
  const DifferentiableFn f{
      [](const Tensor& x) { return std::tanh(x[0]) + std::tanh(x[1]); },
      [](const Tensor& x) {
        return Tensor::vector({1.0 - std::tanh(x[0]) * std::tanh(x[0]),
                               1.0 - std::tanh(x[1]) * std::tanh(x[1])});
      }};
  EXPECT_LT(grad_check(f, Tensor::vector({0.1, -0.2}), 1e-5), 1e-6);
}

TEST(GradCheck, DetectsWrongGradient) {
  const DifferentiableFn f{[](const Tensor& x) { return x[0] * x[0]; },
                           [](const Tensor& x) { return Tensor::scalar(3.0 * x[0]); }};
  EXPECT_GT(grad_check(f, Tensor::scalar(3.0), 1e-5), 0.1);
}

TEST(GradCheck, ShapeMismatchIsContractViolation) {
  const DifferentiableFn f{[](const Tensor& x) { return x[0]; },
                           [](const Tensor&) { return Tensor::vector({1.0, 0.0}); }};
  EXPECT_THROW(grad_check(f, Tensor::scalar(1.0), 1e-5), ContractViolation);
}

// Each op composed with a random linear head, checked against central
// differences on every input coordinate.
class OpGradient : public ::testing::Test {
 protected:
  ag::Var param(Shape shape, double lo = -1.0, double hi = 1.0) {
    return ag::Var::parameter(uniform_tensor(std::move(shape), rng_, lo, hi));
  }
  void expect_grad(const std::function<ag::Var()>& f, std::vector<ag::Var> params) {
    EXPECT_LT(grad_check_parameters([&] { return random_projection(f(), 99); }, params, 1e-6),
              1e-7);
  }
  std::mt19937_64 rng_{5};
};

TEST_F(OpGradient, Matmul) {
  auto a = param({3, 4}), b = param({4, 2});
  expect_grad([&] { return ag::matmul(a, b); }, {a, b});
}

TEST_F(OpGradient, ElementwiseArithmetic) {
  auto a = param({2, 3}), b = param({2, 3});
  expect_grad([&] { return ag::add(a, b); }, {a, b});
  expect_grad([&] { return ag::sub(a, b); }, {a, b});
  expect_grad([&] { return ag::mul(a, b); }, {a, b});
  expect_grad([&] { return ag::scale(a, -1.7); }, {a});
}

TEST_F(OpGradient, ScaleByAndAddRow) {
  auto a = param({3, 2}), s = param({1}), bias = param({2});
  expect_grad([&] { return ag::scale_by(a, s); }, {a, s});
  expect_grad([&] { return ag::add_row(a, bias); }, {a, bias});
}

TEST_F(OpGradient, Activations) {
  auto a = param({2, 5}, -2.0, 2.0);
  expect_grad([&] { return ag::tanh(a); }, {a});
  expect_grad([&] { return ag::gelu(a); }, {a});
  expect_grad([&] { return ag::sigmoid(a); }, {a});
}

TEST_F(OpGradient, RowNormalizers) {
  auto a = param({3, 4});
  expect_grad([&] { return ag::rmsnorm_rows(a, 1e-6); }, {a});
  expect_grad([&] { return ag::softmax_rows(a); }, {a});
}

TEST_F(OpGradient, RowMovement) {
  auto a = param({3, 2}), b = param({2, 2});
  expect_grad([&] { return ag::gather_rows(a, {2, -1, 0, 2}); }, {a});
  expect_grad([&] { return ag::concat_rows({a, b}); }, {a, b});
  expect_grad([&] { return ag::reshape(a, {2, 3}); }, {a});
  expect_grad([&] { return ag::mean(a); }, {a});
}

TEST_F(OpGradient, BinaryCrossEntropy) {
  auto p = param({4, 1}, 0.1, 0.9);
  const std::vector<double> y{1, 0, 0, 1};
  EXPECT_LT(grad_check_parameters([&] { return ag::bce(p, y); }, {p}, 1e-6), 1e-7);
}

TEST(Autograd, GatherPadRowGetsNoGradient) {
  auto a = ag::Var::parameter(Tensor::matrix(2, 1, {1, 2}));
  const ag::Var g = ag::gather_rows(a, {-1, 1, 1});
  EXPECT_EQ(g.value(), Tensor::matrix(3, 1, {0, 2, 2}));
  ag::backward(ag::sum(g));
  EXPECT_EQ(a.grad(), Tensor::matrix(2, 1, {0, 2}));
}

TEST(Autograd, NoGradGuardSkipsTape) {
  auto a = ag::Var::parameter(Tensor::scalar(2.0));
  {
    ag::NoGradGuard guard;
    EXPECT_FALSE(ag::grad_enabled());
    EXPECT_FALSE(ag::mul(a, a).requires_grad());
  }
  EXPECT_TRUE(ag::grad_enabled());
  EXPECT_TRUE(ag::mul(a, a).requires_grad());
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  auto x = ag::Var::parameter(Tensor::scalar(3.0));
  const ag::Var y = ag::mul(x, x);
  ag::backward(ag::add(y, y));
  EXPECT_EQ(x.grad()[0], 12.0);
}

TEST(Autograd, NonFiniteOutputIsHardError) {
  auto x = ag::Var::parameter(Tensor::scalar(1e308));
  EXPECT_THROW(ag::scale(x, 10.0), NonFiniteError);
}

TEST(Gelu, SlopeMatchesDerivative) {
  for (double x = -4.0; x <= 4.0; x += 0.37) {
    double slope = 0.0;
    EXPECT_EQ(kernel::gelu_with_slope(x, slope), kernel::gelu(x));
    EXPECT_EQ(slope, kernel::gelu_derivative(x));
  }
}

}  // namespace
}  // namespace loopctr
