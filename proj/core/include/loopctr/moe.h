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

#ifndef LOOPCTR_MOE_H_
#define LOOPCTR_MOE_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "loopctr/autograd.h"

namespace loopctr::moe {

struct Router {
  ag::Var gate;  // [d x E]
  std::size_t experts = 0;
  std::size_t top_k = 0;
};

Router make_router(std::size_t width, std::size_t experts, std::size_t top_k,
                   std::mt19937_64& rng, double init_std);

// Routing of T tokens. `indices` holds k strictly increasing expert ids per
// token; `gates` holds the matching renormalized weights.
struct RoutingDecision {
  std::size_t tokens = 0;
  std::size_t experts = 0;
  std::size_t top_k = 0;
  std::vector<std::uint32_t> indices;  // T x k
  ag::Var probs;                       // T x E, full softmax
  ag::Var gates;                       // T x k

  std::span<const std::uint32_t> experts_of(std::size_t token) const {
    return std::span<const std::uint32_t>(indices).subspan(token * top_k, top_k);
  }
};

// Softmax over token . gate, top-k by probability (ties to the lower
// index), weights renormalized over the selected experts. Membership is
// treated as constant in the backward pass.
RoutingDecision route(const ag::Var& tokens, const Router& router);

// Same selection rule applied to precomputed logits, for tests.
RoutingDecision route_logits(const ag::Var& logits, std::size_t top_k);

// out_t = sum over selected e of gate_{t,e} * (x_t W_e). Exactly k expert
// products run per token.
ag::Var moe_linear(const ag::Var& x, const RoutingDecision& decision,
                   const std::vector<ag::Var>& bank);

// Expert feed-forward: out_t = sum over selected e of
// gate_{t,e} * gelu(x_t Up_e) Down_e. Exactly k expert pairs run per token.
ag::Var moe_ffn(const ag::Var& x, const RoutingDecision& decision,
                const std::vector<ag::Var>& up, const std::vector<ag::Var>& down);

// Fraction of all top-k assignments received by each expert (f_e).
std::vector<double> dispatch_fractions(const std::vector<const RoutingDecision*>& decisions,
                                       std::size_t experts);

// E * sum_e f_e * p_e over the pooled tokens of `decisions`. f_e carries no
// gradient; p_e (mean router probability) does.
ag::Var balance_loss(const std::vector<const RoutingDecision*>& decisions,
                     std::size_t experts, std::size_t top_k);

}  // namespace loopctr::moe

#endif  // LOOPCTR_MOE_H_
