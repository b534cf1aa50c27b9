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

#include "loopctr/kernels.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "loopctr/errors.h"
#include "loopctr/op_counter.h"

namespace loopctr {
namespace kernel {

namespace {

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;
constexpr std::size_t kDepthChunk = 64;
// Four doubles; lowered to SSE2 pairs when AVX is unavailable.
typedef double Lanes __attribute__((vector_size(32)));

// c[i][j] += sum_t a(i, t) * b[t][j], where a(i, t) = a[i * ai + t * at]. Every output entry adds
// its products in increasing t, starting from the current c value, so the
// result does not depend on the tiling or on which rows share a call.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
__attribute__((target_clones("avx2", "default")))
#endif
void gemm_accumulate(const double* a_all, std::size_t ai, std::size_t at, const double* b_all,
                     std::size_t ldb,
                     double* c, std::size_t ldc, std::size_t m, std::size_t k_all, std::size_t p) {
  // Chunks of t keep the streamed A and B rows cache-resident across tiles.
  for (std::size_t t0 = 0; t0 < k_all; t0 += kDepthChunk) {
  const double* a = a_all + t0 * at;
  const double* b = b_all + t0 * ldb;
  const std::size_t k = std::min(kDepthChunk, k_all - t0);
  std::size_t i = 0;
  for (; i + kTileRows <= m; i += kTileRows) {
    std::size_t j = 0;
    for (; j + kTileCols <= p; j += kTileCols) {
      Lanes acc[kTileRows][2];
      for (std::size_t r = 0; r < kTileRows; ++r) {
        std::memcpy(&acc[r][0], c + (i + r) * ldc + j, sizeof(Lanes));
        std::memcpy(&acc[r][1], c + (i + r) * ldc + j + 4, sizeof(Lanes));
      }
      const double* a0 = a + i * ai;
      for (std::size_t t = 0; t < k; ++t) {
        Lanes b0, b1;
        std::memcpy(&b0, b + t * ldb + j, sizeof(Lanes));
        std::memcpy(&b1, b + t * ldb + j + 4, sizeof(Lanes));
        for (std::size_t r = 0; r < kTileRows; ++r) {
          const double av = a0[r * ai + t * at];
          acc[r][0] += av * b0;
          acc[r][1] += av * b1;
        }
      }
      for (std::size_t r = 0; r < kTileRows; ++r) {
        std::memcpy(c + (i + r) * ldc + j, &acc[r][0], sizeof(Lanes));
        std::memcpy(c + (i + r) * ldc + j + 4, &acc[r][1], sizeof(Lanes));
      }
    }
    for (std::size_t r = 0; r < kTileRows; ++r) {
      double* out = c + (i + r) * ldc;
      const double* arow = a + (i + r) * ai;
      for (std::size_t t = 0; t < k; ++t) {
        const double av = arow[t * at];
        const double* brow = b + t * ldb;
        for (std::size_t q = j; q < p; ++q) out[q] += av * brow[q];
      }
    }
  }
  for (; i < m; ++i) {
    double* out = c + i * ldc;
    const double* arow = a + i * ai;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t * at];
      const double* brow = b + t * ldb;
      for (std::size_t q = 0; q < p; ++q) out[q] += av * brow[q];
    }
  }
  }
}

// dst[c][r] = src[r][c], src is [rows x cols].
std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
  std::vector<double> dst(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  return dst;
}

}  // namespace

void matmul_counted(std::span<const double> a, std::span<const double> b,
                    std::span<double> c, std::size_t m, std::size_t k,
                    std::size_t p) {
  std::fill(c.begin(), c.end(), 0.0);
  gemm_accumulate(a.data(), k, 1, b.data(), p, c.data(), p, m, k, p);
  op_counter::add_macs(static_cast<std::uint64_t>(m) * k * p);
}

void matmul_accumulate(std::span<const double> a, std::span<const double> b,
                       std::span<double> c, std::size_t m, std::size_t k, std::size_t p) {
  gemm_accumulate(a.data(), k, 1, b.data(), p, c.data(), p, m, k, p);
}

void matmul_at_b_accumulate(std::span<const double> a, std::span<const double> b,
                            std::span<double> c, std::size_t k, std::size_t m,
                            std::size_t p) {
  gemm_accumulate(a.data(), 1, m, b.data(), p, c.data(), p, m, k, p);
}

void matmul_a_bt_accumulate(std::span<const double> a, std::span<const double> b,
                            std::span<double> c, std::size_t m, std::size_t k,
                            std::size_t p) {
  const std::vector<double> bt = transposed(b.data(), p, k);
  gemm_accumulate(a.data(), k, 1, bt.data(), p, c.data(), p, m, k, p);
}

void softmax_inplace(std::span<double> values) {
  double mx = values[0];
  for (double v : values) mx = std::max(mx, v);
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - mx);
    total += v;
  }
  const double inv = 1.0 / total;
  for (double& v : values) v *= inv;
}

double rms_inverse(std::span<const double> x, double epsilon) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double mean = ss / static_cast<double>(x.size());
  return 1.0 / std::sqrt(mean + epsilon);
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

double gelu_derivative(double x) {
  double slope = 0.0;
  gelu_with_slope(x, slope);
  return slope;
}

double gelu_with_slope(double x, double& slope) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  slope = 0.5 * (1.0 + t) + 0.5 * x * dt;
  return 0.5 * x * (1.0 + t);
}

}  // namespace kernel

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul expects rank-2 tensors");
  require(a.dim(1) == b.dim(0), "matmul inner extents differ: " +
                                    shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  kernel::matmul_counted(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  check_finite(c, "matmul");
  return c;
}

Tensor softmax_masked(const Tensor& logits, const Tensor& mask) {
  require(logits.same_shape(mask), "softmax_masked: mask shape differs");
  Tensor out(logits.shape());
  const std::size_t rows = logits.rows();
  const std::size_t cols = logits.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(r, c) != 0.0) {
        mx = any ? std::max(mx, logits(r, c)) : logits(r, c);
        any = true;
      }
    }
    require(any, "softmax_masked: row " + std::to_string(r) + " is fully masked");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask(r, c) != 0.0) {
        out(r, c) = std::exp(logits(r, c) - mx);
        total += out(r, c);
      }
    }
    const double inv = 1.0 / total;
    for (std::size_t c = 0; c < cols; ++c) out(r, c) *= inv;
  }
  check_finite(out, "softmax_masked");
  return out;
}

Tensor rmsnorm(const Tensor& x, double epsilon) {
  require(x.cols() >= 1, "rmsnorm needs a non-empty last axis");
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double inv = kernel::rms_inverse(x.row(r), epsilon);
    auto src = x.row(r);
    auto dst = y.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * inv;
  }
  check_finite(y, "rmsnorm");
  return y;
}

}  // namespace loopctr
