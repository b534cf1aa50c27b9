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

#ifndef LOOPCTR_KERNELS_H_
#define LOOPCTR_KERNELS_H_

#include <cstddef>
#include <cstdint>
#include <span>

#include "loopctr/tensor.h"

namespace loopctr {

inline constexpr double kRmsNormEpsilon = 1e-6;

// C = A · B. For every output entry the products are accumulated left to
// right over the inner index, so results are bit-reproducible.
Tensor matmul(const Tensor& a, const Tensor& b);

// Row-wise softmax over entries whose mask value is 1; masked entries are
// exactly 0. Every row needs at least one unmasked entry.
Tensor softmax_masked(const Tensor& logits, const Tensor& mask);

// y = x / sqrt(mean(x^2) + epsilon) along the last axis, no learnable gain.
Tensor rmsnorm(const Tensor& x, double epsilon = kRmsNormEpsilon);

namespace kernel {

// Raw kernels shared by the tensor API and the autograd ops. Shapes are
// checked by the callers. The `_counted` flavors report MACs to the
// op counter; gradient kernels are not counted.
void matmul_counted(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t p);
// c += a b, a is [m x k], b is [k x p]; not counted.
void matmul_accumulate(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t p);
// c += a^T b, a is [k x m], b is [k x p], c is [m x p].
void matmul_at_b_accumulate(std::span<const double> a, std::span<const double> b,
                            std::span<double> c, std::size_t k, std::size_t m,
                            std::size_t p);
// c += a b^T, a is [m x k], b is [p x k], c is [m x p].
void matmul_a_bt_accumulate(std::span<const double> a, std::span<const double> b,
                            std::span<double> c, std::size_t m, std::size_t k,
                            std::size_t p);

// Dot product with four interleaved partial sums, combined as
// (s0 + s1) + (s2 + s3) plus the tail in order. The order depends only on
// n, so results are reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// In-place stable softmax of `values` (max subtraction, exp, normalize).
void softmax_inplace(std::span<double> values);

// Returns 1 / sqrt(mean(x^2) + eps) for one row.
double rms_inverse(std::span<const double> x, double epsilon);

// Tanh approximation of GELU and its derivative.
double gelu(double x);
double gelu_derivative(double x);
// gelu(x), storing gelu'(x) in `slope` from the same tanh.
double gelu_with_slope(double x, double& slope);

}  // namespace kernel
}  // namespace loopctr

#endif  // LOOPCTR_KERNELS_H_
