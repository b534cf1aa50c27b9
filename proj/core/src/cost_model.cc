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

#include "loopctr/cost_model.h"

#include <ostream>

#include "loopctr/errors.h"

namespace loopctr {
namespace {

using u64 = std::uint64_t;

bool item_table_shared(const ModelConfig& c, const FeatureSchema& s, std::size_t field) {
  if (!c.share_item_embedding) return false;
  for (std::size_t f = 0; f < s.global_fields.size(); ++f) {
    const GlobalField& g = s.global_fields[f];
    if (g.name == "item" && g.vocab == s.item_vocab()) return f == field;
  }
  return false;
}

u64 seq_tokens(const ModelConfig& c, const FeatureSchema& s) {
  return s.short_len + (c.long_seq ? c.n_query : 0);
}

// Both sub-layers of one layer, per token, without attention scores.
u64 layer_token_macs(const ModelConfig& c) {
  const u64 w = c.width(), e = c.experts, k = c.top_k, ff = c.d_ff;
  const u64 hcr = c.residual == ResidualMode::kHcr ? hcr_sublayer_macs(c.hcr_streams, w) : 0;
  // attention: norm, Q, K, router, k value experts, k output experts
  // ffn: norm, router, k (up + down)
  return 2 * w + 2 * w * e + (2 + 2 * k) * w * w + 2 * k * w * ff + 2 * hcr;
}

u64 layer_params(const ModelConfig& c) {
  const u64 w = c.width(), e = c.experts, ff = c.d_ff;
  const u64 hcr = c.residual == ResidualMode::kHcr ? hcr_sublayer_params(c.hcr_streams, w) : 0;
  return 2 * w * w + 2 * w * e + 2 * e * w * w + 2 * e * w * ff + 2 * hcr;
}

}  // namespace

u64 MacBreakdown::total(u64 loops, u64 exits) const {
  return entry() + loops * loop_per_iter() + exits * exit();
}

u64 MacBreakdown::user_side(u64 loops) const {
  return compression + entry_user + loops * loop_user + exit_user;
}

u64 MacBreakdown::item_side(u64 loops) const {
  return entry_item + loops * loop_item + exit_item;
}

u64 hcr_sublayer_params(std::size_t n, std::size_t w) {
  return static_cast<u64>(n) * n + 2 * n + 2 + static_cast<u64>(w) * (n + 2);
}

u64 hcr_sublayer_macs(std::size_t n, std::size_t w) {
  return 2 * static_cast<u64>(n) * n * w + 5 * static_cast<u64>(n) * w;
}

ParamBreakdown param_count(const ModelConfig& c, const FeatureSchema& s) {
  c.validate();
  s.validate();
  const u64 d = c.d, w = c.width(), e = c.experts, k = c.top_k, ff = c.d_ff;
  const u64 tg = s.global_fields.size();
  ParamBreakdown p;
  p.embedding = d * s.n_items;
  for (std::size_t f = 0; f < s.global_fields.size(); ++f)
    if (!item_table_shared(c, s, f)) p.embedding += d * (s.global_fields[f].vocab - 1);
  if (c.short_positions) p.embedding += d * s.short_len;
  if (c.long_seq) p.compression = c.n_query * d + 4 * d * d;
  const u64 groups = 1 + (c.long_seq ? 1 : 0) + tg;
  p.projections = groups * (d * w + w);
  p.entry = layer_params(c);
  p.loop_block = c.loop_layers() * layer_params(c);
  const u64 tower = tg * w * 4 * w + 4 * w + 8 * w * w + 2 * w + 2 * w + 1;
  p.exit = 2 * w * w + 2 * w * e + 2 * e * w * w + 2 * e * w * ff + tower;
  p.total = p.embedding + p.compression + p.projections + p.entry + p.loop_block + p.exit;

  p.moe_layers = 2 + c.loop_layers();
  const u64 per_expert = 2 * w * w + 2 * w * ff;
  p.active = p.total - p.moe_layers * (e - k) * per_expert;
  p.moe_extra_per_layer = (e - 1) * per_expert;
  p.moe_extra = p.moe_layers * p.moe_extra_per_layer;
  if (c.residual == ResidualMode::kHcr) {
    p.hcr_per_sublayer = hcr_sublayer_params(c.hcr_streams, w);
    p.hcr_extra = 2 * (1 + c.loop_layers()) * p.hcr_per_sublayer;
  }
  return p;
}

MacBreakdown mac_estimate(const ModelConfig& c, const FeatureSchema& s) {
  c.validate();
  s.validate();
  const u64 d = c.d, w = c.width(), e = c.experts, k = c.top_k, ff = c.d_ff;
  const u64 ls = s.short_len, ll = s.long_len, nq = c.long_seq ? c.n_query : 0;
  const u64 ts = seq_tokens(c, s);
  const u64 tg = s.global_fields.size();
  const u64 layer = layer_token_macs(c);
  MacBreakdown m;
  if (c.long_seq) m.compression = 2 * nq * d * d + 2 * ll * d * d + 2 * nq * ll * d;
  // Entry attention stays inside each group; global tokens see only themselves.
  m.entry_user = ts * d * w + ts * layer + (ls * ls + nq * nq) * 2 * w;
  m.entry_item = tg * d * w + tg * layer + tg * 2 * w;
  m.loop_user = ts * layer + ts * ts * 2 * w;
  m.loop_item = tg * layer + tg * (ts + tg) * 2 * w;
  // Sequential keys/values of the exit cross-attention: norm, router, K, k value experts.
  m.exit_user = ts * (w + w * e + w * w + k * w * w);
  const u64 tower = tg * w * 4 * w + 8 * w * w + 2 * w;
  // Global side: norm, Q, router, k output experts, then norm, router, k FFN experts.
  m.exit_item = tg * (w + w * w + w * e + k * w * w + w + w * e + 2 * k * w * ff) +
                tg * ts * 2 * w + tower;
  return m;
}

ServingCost serving_cost(const ModelConfig& c, const FeatureSchema& s, std::size_t loops,
                         u64 candidates) {
  require(candidates >= 1, "serving_cost: need at least one candidate");
  const MacBreakdown m = mac_estimate(c, s);
  ServingCost sc;
  sc.candidates = candidates;
  sc.naive = candidates * (m.user_side(loops) + m.item_side(loops));
  sc.cached = m.user_side(loops) + candidates * m.item_side(loops);
  return sc;
}

CostReport cost_report(const ModelConfig& c, const FeatureSchema& s, std::size_t loops,
                       u64 candidates) {
  CostReport r;
  r.loops = loops;
  r.params = param_count(c, s);
  r.macs = mac_estimate(c, s);
  r.serving = serving_cost(c, s, loops, candidates);
  return r;
}

void write_cost_report(const CostReport& r, std::ostream& out) {
  const ParamBreakdown& p = r.params;
  out << "record=params total=" << p.total << " active=" << p.active
      << " embedding=" << p.embedding << " compression=" << p.compression
      << " projections=" << p.projections << " entry=" << p.entry
      << " loop_block=" << p.loop_block << " exit=" << p.exit << '\n';
  out << "record=params_extra hcr_per_sublayer=" << p.hcr_per_sublayer
      << " hcr_extra=" << p.hcr_extra << " moe_extra_per_layer=" << p.moe_extra_per_layer
      << " moe_layers=" << p.moe_layers << " moe_extra=" << p.moe_extra << '\n';
  const MacBreakdown& m = r.macs;
  const u64 i = r.loops;
  out << "record=flops unit=per_sample entry=" << 2 * m.entry()
      << " loop_per_iter=" << 2 * m.loop_per_iter() << " exit=" << 2 * m.exit()
      << " compression=" << 2 * m.compression << '\n';
  out << "record=flops_total loops=" << i << " inference=" << 2 * m.total(i, 1)
      << " training=" << 2 * m.total(i, i + 1) << '\n';
  out << "record=flops_side loops=" << i << " user_side=" << 2 * m.user_side(i)
      << " item_side=" << 2 * m.item_side(i) << '\n';
  out << "record=serving candidates=" << r.serving.candidates
      << " naive_flops=" << 2 * r.serving.naive << " cached_flops=" << 2 * r.serving.cached
      << '\n';
}

}  // namespace loopctr
