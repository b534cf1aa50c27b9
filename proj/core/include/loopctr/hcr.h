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

#ifndef LOOPCTR_HCR_H_
#define LOOPCTR_HCR_H_

#include <cstddef>
#include <functional>

#include "loopctr/autograd.h"

// Hyper-connected residuals: an n-stream replacement for h + f(h) whose
// mixing coefficients are a learnable static part plus a tanh-gated
// projection of the normalized stream state.
//
// A multi-stream state for R tokens is stored as an [R*n x d] tensor with
// the n streams of a token in consecutive rows.
namespace loopctr::hcr {

enum class CollapseRule { kMean, kSum };

struct Params {
  std::size_t streams = 0;
  std::size_t sublayer = 0;
  std::size_t width = 0;
  ag::Var static_mix;       // A_m, [n]
  ag::Var static_residual;  // A_r, [n x n] flattened row-major
  ag::Var static_out;       // B,   [n]
  ag::Var proj_mix;         // W_m, [d x 1]
  ag::Var proj_residual;    // W_r, [d x n]
  ag::Var proj_out;         // W_beta, [d x 1]
  ag::Var scale_alpha;      // s_alpha, [1]
  ag::Var scale_beta;       // s_beta, [1]

  std::vector<ag::Var> parameters() const;
  std::size_t parameter_count() const;
};

inline constexpr double kDefaultGateScale = 0.01;

// Static coefficients select stream (sublayer mod n) for the sub-layer
// input, keep every stream through an identity residual and add the output
// to all streams. Dynamic projections start at zero.
Params init(std::size_t streams, std::size_t sublayer, std::size_t width,
            double gate_scale = kDefaultGateScale);

// Per-token coefficients: mix [R x n], residual [R x n*n] (entry (i, j) at
// i*n + j), out [R x n].
struct Coefficients {
  ag::Var mix;
  ag::Var residual;
  ag::Var out;
};

Coefficients coefficients(const ag::Var& state, const Params& params);

// x_r = sum_s mix[r, s] * H[r*n + s].
ag::Var mix_in(const ag::Var& state, const ag::Var& mix, std::size_t streams);

// H'[r*n + j] = sum_i residual[r, i*n + j] * H[r*n + i] + out[r, j] * y[r].
ag::Var combine(const ag::Var& state, const ag::Var& residual, const ag::Var& out,
                const ag::Var& layer_out, std::size_t streams);

using Sublayer = std::function<ag::Var(const ag::Var&)>;

// One hyper-connected update of `state` around `sublayer` ([R x d] -> [R x d]).
// When `coeffs_out` is set it receives the coefficients that were used.
ag::Var apply(const ag::Var& state, const Params& params, const Sublayer& sublayer,
              Coefficients* coeffs_out = nullptr);

ag::Var expand(const ag::Var& hidden, std::size_t streams);
// Mean (or sum) of each token's n streams. The mean is computed as stream 0 plus
// the mean offset of the others, so identical streams collapse exactly.
ag::Var collapse(const ag::Var& state, std::size_t streams,
                 CollapseRule rule = CollapseRule::kMean);

}  // namespace loopctr::hcr

#endif  // LOOPCTR_HCR_H_
