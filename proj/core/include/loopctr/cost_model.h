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

#ifndef LOOPCTR_COST_MODEL_H_
#define LOOPCTR_COST_MODEL_H_

#include <cstdint>
#include <iosfwd>

#include "loopctr/config.h"
#include "loopctr/datagen.h"

namespace loopctr {

// Trainable scalars per block, from the declared parameter shapes.
struct ParamBreakdown {
  std::uint64_t embedding = 0;    // item and field tables, positions
  std::uint64_t compression = 0;  // long-sequence queries and projections
  std::uint64_t projections = 0;  // per-group input projections
  std::uint64_t entry = 0;
  std::uint64_t loop_block = 0;
  std::uint64_t exit = 0;  // includes the tower
  std::uint64_t total = 0;
  std::uint64_t active = 0;  // total minus unselected experts of every MoE layer
  std::uint64_t hcr_per_sublayer = 0;
  std::uint64_t hcr_extra = 0;  // all HCR sub-layers
  std::uint64_t moe_extra_per_layer = 0;  // (E-1)(2w^2 + 2w d_ff)
  std::uint64_t moe_extra = 0;
  std::uint64_t moe_layers = 0;
};

// Per-sample multiply-accumulates with every sequence position filled.
// FLOPs are 2 x MACs. "user" is the request-side work shared by all
// candidates; "item" is the per-candidate work.
struct MacBreakdown {
  std::uint64_t compression = 0;
  std::uint64_t entry_user = 0, entry_item = 0;
  std::uint64_t loop_user = 0, loop_item = 0;  // one iteration
  std::uint64_t exit_user = 0, exit_item = 0;  // one tapped depth

  std::uint64_t entry() const { return compression + entry_user + entry_item; }
  std::uint64_t loop_per_iter() const { return loop_user + loop_item; }
  std::uint64_t exit() const { return exit_user + exit_item; }
  // entry + loops * loop_per_iter + exits * exit.
  std::uint64_t total(std::uint64_t loops, std::uint64_t exits) const;
  // Single exit at the final depth.
  std::uint64_t user_side(std::uint64_t loops) const;
  std::uint64_t item_side(std::uint64_t loops) const;
};

std::uint64_t hcr_sublayer_params(std::size_t streams, std::size_t width);
// Per token: coefficients, mix-in and combine.
std::uint64_t hcr_sublayer_macs(std::size_t streams, std::size_t width);

ParamBreakdown param_count(const ModelConfig& config, const FeatureSchema& schema);
MacBreakdown mac_estimate(const ModelConfig& config, const FeatureSchema& schema);

struct ServingCost {
  std::uint64_t candidates = 0;
  std::uint64_t naive = 0;   // N * (user + item), MACs
  std::uint64_t cached = 0;  // user + N * item, MACs
};

ServingCost serving_cost(const ModelConfig& config, const FeatureSchema& schema,
                         std::size_t loops, std::uint64_t candidates);

struct CostReport {
  std::size_t loops = 0;
  ParamBreakdown params;
  MacBreakdown macs;
  ServingCost serving;
};

CostReport cost_report(const ModelConfig& config, const FeatureSchema& schema, std::size_t loops,
                       std::uint64_t candidates);

// key=value records in FLOPs (2 x MACs) and parameter counts.
void write_cost_report(const CostReport& report, std::ostream& out);

}  // namespace loopctr

#endif  // LOOPCTR_COST_MODEL_H_
