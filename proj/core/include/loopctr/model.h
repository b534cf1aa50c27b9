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

#ifndef LOOPCTR_MODEL_H_
#define LOOPCTR_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loopctr/attention.h"
#include "loopctr/config.h"
#include "loopctr/embedding.h"
#include "loopctr/hcr.h"
#include "loopctr/moe.h"

namespace loopctr {

// One transformer layer: masked multi-head attention with dense Q/K and
// routed V/O experts sharing one router, then a routed expert FFN. In HCR
// mode both sub-layers are wrapped in hyper-connected residuals; otherwise
// they use plain pre-norm residuals.
struct LayerParams {
  ag::Var wq, wk;
  moe::Router attn_router;
  std::vector<ag::Var> value_experts, output_experts;
  moe::Router ffn_router;
  std::vector<ag::Var> up_experts, down_experts;
  hcr::Params hcr_attn, hcr_ffn;  // HCR mode only

  std::vector<std::pair<std::string, ag::Var>> named_parameters(const std::string& prefix) const;
};

struct ExitParams {
  ag::Var wq, wk;
  moe::Router attn_router;
  std::vector<ag::Var> value_experts, output_experts;
  moe::Router ffn_router;
  std::vector<ag::Var> up_experts, down_experts;
  ag::Var tower_w1, tower_b1, tower_w2, tower_b2, tower_w3, tower_b3;

  std::vector<std::pair<std::string, ag::Var>> named_parameters() const;
};

struct GroupProjection {
  std::string group;
  ag::Var w, b;
};

class Model {
 public:
  Model(ModelConfig config, FeatureSchema schema);

  const ModelConfig& config() const { return config_; }
  const FeatureSchema& schema() const { return schema_; }
  // Sequential and global tokens per sample.
  std::size_t seq_tokens() const;
  std::size_t glb_tokens() const { return schema_.global_fields.size(); }

  // Every trainable tensor under a stable name, in a fixed order.
  std::vector<std::pair<std::string, ag::Var>> named_parameters() const;
  std::vector<ag::Var> parameters() const;
  std::size_t parameter_count() const;
  // Parameters owned by the loop block.
  std::size_t loop_parameter_count() const;

  EmbeddingTables tables;
  std::vector<GroupProjection> projections;  // group order
  LayerParams entry;
  std::vector<LayerParams> loop;  // one layer when sharing weights
  ExitParams exit;

 private:
  ModelConfig config_;
  FeatureSchema schema_;
};

// Attention mask over one sample's tokens: sequential tokens see sequential
// tokens, global tokens see everything, and pad keys are hidden. A pad query
// keeps only its own diagonal entry; its output is never read by a valid
// token.
struct PrefixMask {
  Tensor matrix;  // T x T of {0, 1}
  std::vector<std::size_t> seq_idx, glb_idx;

  bool allowed(std::size_t query, std::size_t key) const { return matrix(query, key) != 0.0; }
};

PrefixMask build_prefix_mask(const std::vector<std::size_t>& seq_idx,
                             const std::vector<std::size_t>& glb_idx,
                             const std::vector<std::uint8_t>& valid);

struct DepthOutput {
  std::size_t depth = 0;
  ag::Var pred;  // [batch x 1]
  ag::Var seq;   // collapsed sequential states, [batch*T_seq x d]
  ag::Var glb;   // collapsed global states, [batch*T_glb x d]
};

// All routing decisions of one MoE site invocation, pooled over sequential
// and global tokens.
struct RoutingEvent {
  std::string site;  // entry.attn, entry.ffn, loop.attn, loop.ffn, exit.attn, exit.ffn
  std::size_t depth = 0;
  std::vector<moe::RoutingDecision> decisions;
};

struct HcrSnapshot {
  std::string block;  // entry or loop
  std::size_t depth = 0;
  std::size_t sublayer = 0;
  std::vector<hcr::Coefficients> coefficients;  // sequential part, then global part
};

struct LoopTrace {
  std::size_t batch = 0;
  std::size_t loops = 0;
  std::vector<DepthOutput> depths;  // ascending depth
  std::vector<RoutingEvent> routing;
  std::vector<HcrSnapshot> hcr;

  std::vector<double> predictions(std::size_t index) const;
};

struct ForwardOptions {
  bool all_depths = true;  // false: run the Exit Block at the final depth only
  bool capture_hcr = false;
};

// Entry once, Loop `loops` times, Exit at every depth. `loops` may exceed
// the training loops when weights are shared; a stacked model can run at
// most its layer count.
LoopTrace model_forward(const Model& model, const TokenCollection& tokens, std::size_t loops,
                        const ForwardOptions& options = {});

LoopTrace forward_samples(const Model& model, std::span<const Sample> samples, std::size_t loops,
                          const ForwardOptions& options = {});

// Scores `candidates` (one global-id vector each) for the sequences of
// `request`. The sequential side runs once and its keys/values are reused
// for every candidate. Returns the depth-`loops` predictions.
std::vector<double> score_candidates_cached(const Model& model, const Sample& request,
                                            std::span<const std::vector<std::uint32_t>> candidates,
                                            std::size_t loops);

// Reference path: one full forward per candidate.
std::vector<double> score_candidates_naive(const Model& model, const Sample& request,
                                           std::span<const std::vector<std::uint32_t>> candidates,
                                           std::size_t loops);

}  // namespace loopctr

#endif  // LOOPCTR_MODEL_H_
