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

#include "loopctr/model.h"

#include <algorithm>

#include "loopctr/errors.h"
#include "loopctr/init.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"
#include "loopctr/ops.h"

namespace loopctr {
namespace {

std::vector<ag::Var> expert_bank(std::size_t experts, std::size_t rows, std::size_t cols,
                                 std::mt19937_64& rng) {
  std::vector<ag::Var> bank;
  bank.reserve(experts);
  for (std::size_t e = 0; e < experts; ++e) bank.push_back(linear_weight(rows, cols, rng));
  return bank;
}

LayerParams make_layer(const ModelConfig& c, std::mt19937_64& rng) {
  const std::size_t w = c.width();
  LayerParams p;
  p.wq = linear_weight(w, w, rng);
  p.wk = linear_weight(w, w, rng);
  p.attn_router = moe::make_router(w, c.experts, c.top_k, rng, c.router_init_std);
  p.value_experts = expert_bank(c.experts, w, w, rng);
  p.output_experts = expert_bank(c.experts, w, w, rng);
  p.ffn_router = moe::make_router(w, c.experts, c.top_k, rng, c.router_init_std);
  p.up_experts = expert_bank(c.experts, w, c.d_ff, rng);
  p.down_experts = expert_bank(c.experts, c.d_ff, w, rng);
  if (c.residual == ResidualMode::kHcr) {
    p.hcr_attn = hcr::init(c.hcr_streams, 0, w);
    p.hcr_ffn = hcr::init(c.hcr_streams, 1, w);
  }
  return p;
}

void append_bank(std::vector<std::pair<std::string, ag::Var>>& out, const std::string& prefix,
                 const std::vector<ag::Var>& bank) {
  for (std::size_t e = 0; e < bank.size(); ++e) out.emplace_back(prefix + std::to_string(e), bank[e]);
}

void append_hcr(std::vector<std::pair<std::string, ag::Var>>& out, const std::string& prefix,
                const hcr::Params& p) {
  if (!p.static_mix.defined()) return;
  out.emplace_back(prefix + ".static_mix", p.static_mix);
  out.emplace_back(prefix + ".static_residual", p.static_residual);
  out.emplace_back(prefix + ".static_out", p.static_out);
  out.emplace_back(prefix + ".proj_mix", p.proj_mix);
  out.emplace_back(prefix + ".proj_residual", p.proj_residual);
  out.emplace_back(prefix + ".proj_out", p.proj_out);
  out.emplace_back(prefix + ".scale_alpha", p.scale_alpha);
  out.emplace_back(prefix + ".scale_beta", p.scale_beta);
}

PatternPtr make_pattern(std::size_t batch, std::size_t queries, std::size_t keys,
                        const AttentionPattern::Predicate& allowed) {
  return std::make_shared<const AttentionPattern>(batch, queries, keys, allowed);
}

ag::Var rms(const ag::Var& x) { return ag::rmsnorm_rows(x, kRmsNormEpsilon); }

struct KeyValues {
  ag::Var k, v;
};

struct LayerTaps {
  KeyValues* kv = nullptr;
  moe::RoutingDecision attn_decision;
  moe::RoutingDecision ffn_decision;
  hcr::Coefficients* attn_coeffs = nullptr;
  hcr::Coefficients* ffn_coeffs = nullptr;
};

ag::Var residual_step(const ModelConfig& c, const ag::Var& state, const hcr::Params& p,
                      const hcr::Sublayer& f, hcr::Coefficients* coeffs) {
  if (c.residual == ResidualMode::kHcr) return hcr::apply(state, p, f, coeffs);
  return ag::add(state, f(state));
}

ag::Var ffn_sublayer(const LayerParams& p, const ag::Var& x, moe::RoutingDecision& decision) {
  const ag::Var nx = rms(x);
  decision = moe::route(nx, p.ffn_router);
  return moe::moe_ffn(nx, decision, p.up_experts, p.down_experts);
}

// Keys/values for global queries: per sample, the sequential rows followed
// by the global rows.
ag::Var interleave(const ag::Var& seq, const ag::Var& glb, std::size_t batch, std::size_t ts,
                   std::size_t tg) {
  std::vector<std::int64_t> index;
  index.reserve(batch * (ts + tg));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < ts; ++t) index.push_back(static_cast<std::int64_t>(b * ts + t));
    for (std::size_t t = 0; t < tg; ++t)
      index.push_back(static_cast<std::int64_t>(batch * ts + b * tg + t));
  }
  return ag::gather_rows(ag::concat_rows({seq, glb}), std::move(index));
}

// One layer over the sequential rows; exports the keys/values the global
// rows attend to.
ag::Var layer_seq_step(const ModelConfig& c, const LayerParams& p, const ag::Var& state,
                       const PatternPtr& pattern, LayerTaps& taps) {
  ag::Var next = residual_step(c, state, p.hcr_attn, [&](const ag::Var& x) {
    const ag::Var nx = rms(x);
    const ag::Var q = ag::matmul(nx, p.wq);
    KeyValues kv{ag::matmul(nx, p.wk), {}};
    taps.attn_decision = moe::route(nx, p.attn_router);
    kv.v = moe::moe_linear(nx, taps.attn_decision, p.value_experts);
    const ag::Var a = attention(q, kv.k, kv.v, pattern, c.heads);
    if (taps.kv) *taps.kv = kv;
    return moe::moe_linear(a, taps.attn_decision, p.output_experts);
  }, taps.attn_coeffs);
  return residual_step(c, next, p.hcr_ffn, [&](const ag::Var& x) {
    return ffn_sublayer(p, x, taps.ffn_decision);
  }, taps.ffn_coeffs);
}

// One layer over the global rows. With `prefix` set, global queries also
// attend to those sequential keys/values (already laid out per sample).
ag::Var layer_glb_step(const ModelConfig& c, const LayerParams& p, const ag::Var& state,
                       const KeyValues* prefix, std::size_t batch, std::size_t ts,
                       std::size_t tg, const PatternPtr& pattern, LayerTaps& taps) {
  ag::Var next = residual_step(c, state, p.hcr_attn, [&](const ag::Var& x) {
    const ag::Var nx = rms(x);
    const ag::Var q = ag::matmul(nx, p.wq);
    ag::Var k = ag::matmul(nx, p.wk);
    taps.attn_decision = moe::route(nx, p.attn_router);
    ag::Var v = moe::moe_linear(nx, taps.attn_decision, p.value_experts);
    if (prefix) {
      k = interleave(prefix->k, k, batch, ts, tg);
      v = interleave(prefix->v, v, batch, ts, tg);
    }
    const ag::Var a = attention(q, k, v, pattern, c.heads);
    return moe::moe_linear(a, taps.attn_decision, p.output_experts);
  }, taps.attn_coeffs);
  return residual_step(c, next, p.hcr_ffn, [&](const ag::Var& x) {
    return ffn_sublayer(p, x, taps.ffn_decision);
  }, taps.ffn_coeffs);
}

ag::Var expand_state(const ModelConfig& c, const ag::Var& h) {
  return c.residual == ResidualMode::kHcr ? hcr::expand(h, c.hcr_streams) : h;
}

ag::Var collapse_state(const ModelConfig& c, const ag::Var& state) {
  return c.residual == ResidualMode::kHcr ? hcr::collapse(state, c.hcr_streams, c.collapse)
                                          : state;
}

RoutingEvent& event_for(std::vector<RoutingEvent>& events, const std::string& site,
                        std::size_t depth) {
  for (auto& e : events)
    if (e.site == site && e.depth == depth) return e;
  events.push_back({site, depth, {}});
  return events.back();
}

HcrSnapshot& snapshot_for(std::vector<HcrSnapshot>& snaps, const std::string& block,
                          std::size_t depth, std::size_t sublayer) {
  for (auto& s : snaps)
    if (s.block == block && s.depth == depth && s.sublayer == sublayer) return s;
  snaps.push_back({block, depth, sublayer, {}});
  return snaps.back();
}

const LayerParams& loop_layer(const Model& m, std::size_t iteration) {
  return m.config().weight_sharing ? m.loop.front() : m.loop[iteration - 1];
}

void check_loops(const Model& m, std::size_t loops) {
  if (!m.config().weight_sharing) {
    require(loops <= m.loop.size(), "stacked model has " + std::to_string(m.loop.size()) +
                                        " layers, cannot run " + std::to_string(loops) + " loops");
  }
}

const GroupProjection& projection_for(const Model& m, const std::string& group) {
  for (const auto& p : m.projections)
    if (p.group == group) return p;
  throw ContractViolation("no projection for token group `" + group + "`");
}

// Group-projected tokens of one role laid out per sample in group order.
struct Assembled {
  ag::Var rows;
  std::size_t tokens = 0;
  std::vector<std::uint8_t> valid;
  std::vector<std::size_t> group_of;  // per position within a sample
};

Assembled assemble(const Model& m, const TokenCollection& tc, TokenRole role) {
  Assembled out;
  std::vector<ag::Var> parts;
  std::vector<const TokenGroup*> groups;
  for (const TokenGroup& g : tc.groups) {
    if (g.role != role) continue;
    const GroupProjection& proj = projection_for(m, g.name);
    parts.push_back(ag::add_row(ag::matmul(g.tokens, proj.w), proj.b));
    groups.push_back(&g);
    for (std::size_t t = 0; t < g.size; ++t) out.group_of.push_back(groups.size() - 1);
    out.tokens += g.size;
  }
  require(!parts.empty(), "token collection has no groups of the requested role");
  const std::size_t batch = tc.batch;
  std::vector<std::int64_t> index;
  index.reserve(batch * out.tokens);
  out.valid.reserve(batch * out.tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t offset = 0;
    for (const TokenGroup* g : groups) {
      for (std::size_t t = 0; t < g->size; ++t) {
        index.push_back(static_cast<std::int64_t>(offset + b * g->size + t));
        out.valid.push_back(g->valid[b * g->size + t]);
      }
      offset += batch * g->size;
    }
  }
  out.rows = ag::gather_rows(ag::concat_rows(parts), std::move(index));
  return out;
}

struct SeqPass {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::vector<std::uint8_t> valid;
  std::vector<KeyValues> loop_kv;    // keys/values at the input of iteration l, index l-1
  std::vector<ag::Var> collapsed;    // per depth
  std::vector<KeyValues> exit_kv;    // per depth; empty where the exit is not tapped
  std::vector<RoutingEvent> routing;
  std::vector<HcrSnapshot> hcr;
};

SeqPass run_seq_side(const Model& m, const TokenCollection& tc, std::size_t loops,
                     const std::vector<bool>& tap, bool capture_hcr) {
  const ModelConfig& c = m.config();
  SeqPass sp;
  sp.batch = tc.batch;
  ag::Var state;
  {
    CountScope scope(Component::kEntry, Side::kUser);
    Assembled a = assemble(m, tc, TokenRole::kSequential);
    sp.tokens = a.tokens;
    sp.valid = a.valid;
    const std::size_t ts = a.tokens;
    const auto& valid = sp.valid;
    const auto& group_of = a.group_of;
    auto pattern = make_pattern(sp.batch, ts, ts, [&](std::size_t b, std::size_t i, std::size_t j) {
      if (group_of[i] != group_of[j]) return false;
      return valid[b * ts + j] != 0 || (i == j && valid[b * ts + i] == 0);
    });
    LayerTaps taps;
    hcr::Coefficients ca, cf;
    if (capture_hcr) taps.attn_coeffs = &ca, taps.ffn_coeffs = &cf;
    state = layer_seq_step(c, m.entry, expand_state(c, a.rows), pattern, taps);
    event_for(sp.routing, "entry.attn", 0).decisions.push_back(std::move(taps.attn_decision));
    event_for(sp.routing, "entry.ffn", 0).decisions.push_back(std::move(taps.ffn_decision));
    if (capture_hcr) {
      snapshot_for(sp.hcr, "entry", 0, 0).coefficients.push_back(ca);
      snapshot_for(sp.hcr, "entry", 0, 1).coefficients.push_back(cf);
    }
    sp.collapsed.push_back(collapse_state(c, state));
  }

  const std::size_t ts = sp.tokens;
  if (loops > 0) {
    CountScope scope(Component::kLoop, Side::kUser);
    const auto& valid = sp.valid;
    auto pattern = make_pattern(sp.batch, ts, ts, [&](std::size_t b, std::size_t i, std::size_t j) {
      return valid[b * ts + j] != 0 || (i == j && valid[b * ts + i] == 0);
    });
    state = expand_state(c, sp.collapsed.front());
    for (std::size_t l = 1; l <= loops; ++l) {
      KeyValues kv;
      LayerTaps taps;
      taps.kv = &kv;
      hcr::Coefficients ca, cf;
      if (capture_hcr) taps.attn_coeffs = &ca, taps.ffn_coeffs = &cf;
      state = layer_seq_step(c, loop_layer(m, l), state, pattern, taps);
      sp.loop_kv.push_back(kv);
      event_for(sp.routing, "loop.attn", l).decisions.push_back(std::move(taps.attn_decision));
      event_for(sp.routing, "loop.ffn", l).decisions.push_back(std::move(taps.ffn_decision));
      if (capture_hcr) {
        snapshot_for(sp.hcr, "loop", l, 0).coefficients.push_back(ca);
        snapshot_for(sp.hcr, "loop", l, 1).coefficients.push_back(cf);
      }
      sp.collapsed.push_back(collapse_state(c, state));
    }
  }

  sp.exit_kv.resize(loops + 1);
  CountScope scope(Component::kExit, Side::kUser);
  for (std::size_t l = 0; l <= loops; ++l) {
    if (!tap[l]) continue;
    const ag::Var ns = rms(sp.collapsed[l]);
    moe::RoutingDecision dec = moe::route(ns, m.exit.attn_router);
    sp.exit_kv[l] = {ag::matmul(ns, m.exit.wk), moe::moe_linear(ns, dec, m.exit.value_experts)};
    event_for(sp.routing, "exit.attn", l).decisions.push_back(std::move(dec));
  }
  return sp;
}

ag::Var replicate_rows(const ag::Var& v, std::size_t copies) {
  if (!v.defined()) return v;
  std::vector<std::int64_t> index;
  index.reserve(v.rows() * copies);
  for (std::size_t n = 0; n < copies; ++n)
    for (std::size_t r = 0; r < v.rows(); ++r) index.push_back(static_cast<std::int64_t>(r));
  return ag::gather_rows(v, std::move(index));
}

// Broadcasts a single-sample pass to `copies` samples without recomputing it.
SeqPass replicate(const SeqPass& sp, std::size_t copies) {
  require(sp.batch == 1, "replicate: expected a single-sample pass");
  SeqPass out;
  out.batch = copies;
  out.tokens = sp.tokens;
  for (std::size_t n = 0; n < copies; ++n) out.valid.insert(out.valid.end(), sp.valid.begin(), sp.valid.end());
  for (const auto& kv : sp.loop_kv)
    out.loop_kv.push_back({replicate_rows(kv.k, copies), replicate_rows(kv.v, copies)});
  for (const auto& h : sp.collapsed) out.collapsed.push_back(replicate_rows(h, copies));
  for (const auto& kv : sp.exit_kv)
    out.exit_kv.push_back({replicate_rows(kv.k, copies), replicate_rows(kv.v, copies)});
  return out;
}

ag::Var exit_glb_side(const Model& m, const ag::Var& hg, const KeyValues& seq_kv,
                      const PatternPtr& cross, std::size_t batch,
                      moe::RoutingDecision& attn_dec, moe::RoutingDecision& ffn_dec) {
  const ModelConfig& c = m.config();
  const ExitParams& p = m.exit;
  const ag::Var ng = rms(hg);
  const ag::Var q = ag::matmul(ng, p.wq);
  attn_dec = moe::route(ng, p.attn_router);
  const ag::Var a = attention(q, seq_kv.k, seq_kv.v, cross, c.heads);
  const ag::Var h = ag::add(hg, moe::moe_linear(a, attn_dec, p.output_experts));
  const ag::Var nf = rms(h);
  ffn_dec = moe::route(nf, p.ffn_router);
  const ag::Var h2 = ag::add(h, moe::moe_ffn(nf, ffn_dec, p.up_experts, p.down_experts));
  const ag::Var flat = ag::reshape(h2, {batch, h2.rows() / batch * h2.cols()});
  const ag::Var z1 = ag::gelu(ag::add_row(ag::matmul(flat, p.tower_w1), p.tower_b1));
  const ag::Var z2 = ag::gelu(ag::add_row(ag::matmul(z1, p.tower_w2), p.tower_b2));
  return ag::sigmoid(ag::add_row(ag::matmul(z2, p.tower_w3), p.tower_b3));
}

LoopTrace run_glb_side(const Model& m, const TokenCollection& tc, const SeqPass& sp,
                       std::size_t loops, const std::vector<bool>& tap, bool capture_hcr) {
  const ModelConfig& c = m.config();
  const std::size_t batch = tc.batch;
  require(sp.batch == batch, "sequential pass batch does not match global tokens");
  LoopTrace trace;
  trace.batch = batch;
  trace.loops = loops;
  trace.routing = sp.routing;
  trace.hcr = sp.hcr;
  const std::size_t ts = sp.tokens;
  std::size_t tg = 0;

  std::vector<ag::Var> collapsed;
  ag::Var state;
  {
    CountScope scope(Component::kEntry, Side::kItem);
    Assembled a = assemble(m, tc, TokenRole::kGlobal);
    tg = a.tokens;
    auto pattern = make_pattern(batch, tg, tg,
                                [](std::size_t, std::size_t i, std::size_t j) { return i == j; });
    LayerTaps taps;
    hcr::Coefficients ca, cf;
    if (capture_hcr) taps.attn_coeffs = &ca, taps.ffn_coeffs = &cf;
    state = layer_glb_step(c, m.entry, expand_state(c, a.rows), nullptr, batch, ts, tg, pattern,
                           taps);
    event_for(trace.routing, "entry.attn", 0).decisions.push_back(std::move(taps.attn_decision));
    event_for(trace.routing, "entry.ffn", 0).decisions.push_back(std::move(taps.ffn_decision));
    if (capture_hcr) {
      snapshot_for(trace.hcr, "entry", 0, 0).coefficients.push_back(ca);
      snapshot_for(trace.hcr, "entry", 0, 1).coefficients.push_back(cf);
    }
    collapsed.push_back(collapse_state(c, state));
  }

  if (loops > 0) {
    CountScope scope(Component::kLoop, Side::kItem);
    const auto& valid = sp.valid;
    auto pattern = make_pattern(batch, tg, ts + tg,
                                [&](std::size_t b, std::size_t, std::size_t j) {
                                  return j >= ts || valid[b * ts + j] != 0;
                                });
    state = expand_state(c, collapsed.front());
    for (std::size_t l = 1; l <= loops; ++l) {
      LayerTaps taps;
      hcr::Coefficients ca, cf;
      if (capture_hcr) taps.attn_coeffs = &ca, taps.ffn_coeffs = &cf;
      state = layer_glb_step(c, loop_layer(m, l), state, &sp.loop_kv[l - 1], batch, ts, tg,
                             pattern, taps);
      event_for(trace.routing, "loop.attn", l).decisions.push_back(std::move(taps.attn_decision));
      event_for(trace.routing, "loop.ffn", l).decisions.push_back(std::move(taps.ffn_decision));
      if (capture_hcr) {
        snapshot_for(trace.hcr, "loop", l, 0).coefficients.push_back(ca);
        snapshot_for(trace.hcr, "loop", l, 1).coefficients.push_back(cf);
      }
      collapsed.push_back(collapse_state(c, state));
    }
  }

  CountScope scope(Component::kExit, Side::kItem);
  const auto& valid = sp.valid;
  auto cross = make_pattern(batch, tg, ts, [&](std::size_t b, std::size_t, std::size_t j) {
    return valid[b * ts + j] != 0;
  });
  for (std::size_t l = 0; l <= loops; ++l) {
    if (!tap[l]) continue;
    moe::RoutingDecision attn_dec, ffn_dec;
    DepthOutput out;
    out.depth = l;
    out.pred = exit_glb_side(m, collapsed[l], sp.exit_kv[l], cross, batch, attn_dec, ffn_dec);
    out.seq = sp.collapsed[l];
    out.glb = collapsed[l];
    event_for(trace.routing, "exit.attn", l).decisions.push_back(std::move(attn_dec));
    event_for(trace.routing, "exit.ffn", l).decisions.push_back(std::move(ffn_dec));
    trace.depths.push_back(std::move(out));
  }
  return trace;
}

std::vector<bool> taps_for(std::size_t loops, bool all_depths) {
  std::vector<bool> tap(loops + 1, all_depths);
  tap[loops] = true;
  return tap;
}

TokenCollection with_role(const TokenCollection& tc, TokenRole role) {
  TokenCollection out;
  out.batch = tc.batch;
  for (const auto& g : tc.groups)
    if (g.role == role) out.groups.push_back(g);
  return out;
}

std::vector<Sample> candidate_samples(std::span<const std::vector<std::uint32_t>> candidates) {
  std::vector<Sample> out(candidates.size());
  for (std::size_t n = 0; n < candidates.size(); ++n) out[n].global_ids = candidates[n];
  return out;
}

}  // namespace

std::vector<std::pair<std::string, ag::Var>> LayerParams::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, ag::Var>> out;
  out.emplace_back(prefix + ".attn.wq", wq);
  out.emplace_back(prefix + ".attn.wk", wk);
  out.emplace_back(prefix + ".attn.router", attn_router.gate);
  append_bank(out, prefix + ".attn.value.", value_experts);
  append_bank(out, prefix + ".attn.output.", output_experts);
  out.emplace_back(prefix + ".ffn.router", ffn_router.gate);
  append_bank(out, prefix + ".ffn.up.", up_experts);
  append_bank(out, prefix + ".ffn.down.", down_experts);
  append_hcr(out, prefix + ".hcr0", hcr_attn);
  append_hcr(out, prefix + ".hcr1", hcr_ffn);
  return out;
}

std::vector<std::pair<std::string, ag::Var>> ExitParams::named_parameters() const {
  std::vector<std::pair<std::string, ag::Var>> out;
  out.emplace_back("exit.attn.wq", wq);
  out.emplace_back("exit.attn.wk", wk);
  out.emplace_back("exit.attn.router", attn_router.gate);
  append_bank(out, "exit.attn.value.", value_experts);
  append_bank(out, "exit.attn.output.", output_experts);
  out.emplace_back("exit.ffn.router", ffn_router.gate);
  append_bank(out, "exit.ffn.up.", up_experts);
  append_bank(out, "exit.ffn.down.", down_experts);
  out.emplace_back("exit.tower.w1", tower_w1);
  out.emplace_back("exit.tower.b1", tower_b1);
  out.emplace_back("exit.tower.w2", tower_w2);
  out.emplace_back("exit.tower.b2", tower_b2);
  out.emplace_back("exit.tower.w3", tower_w3);
  out.emplace_back("exit.tower.b3", tower_b3);
  return out;
}

Model::Model(ModelConfig config, FeatureSchema schema)
    : config_(std::move(config)), schema_(std::move(schema)) {
  config_.validate();
  schema_.validate();
  for (std::size_t f = 0; f < schema_.global_fields.size(); ++f) {
    const std::string& name = schema_.global_fields[f].name;
    require(name != "short" && name != "long" && !name.empty(),
            "global field name `" + name + "` is reserved");
    for (std::size_t g = 0; g < f; ++g)
      require(schema_.global_fields[g].name != name, "duplicate global field `" + name + "`");
  }

  std::mt19937_64 rng(config_.seed);
  tables = make_embedding_tables(config_, schema_, rng);
  const std::size_t d = config_.d;
  const std::size_t w = config_.width();
  auto add_projection = [&](const std::string& group) {
    projections.push_back({group, linear_weight(d, w, rng), ag::Var::parameter(Tensor({w}))});
  };
  add_projection("short");
  if (config_.long_seq) add_projection("long");
  for (const auto& f : schema_.global_fields) add_projection(f.name);

  entry = make_layer(config_, rng);
  for (std::size_t l = 0; l < config_.loop_layers(); ++l) loop.push_back(make_layer(config_, rng));

  exit.wq = linear_weight(w, w, rng);
  exit.wk = linear_weight(w, w, rng);
  exit.attn_router = moe::make_router(w, config_.experts, config_.top_k, rng, config_.router_init_std);
  exit.value_experts = expert_bank(config_.experts, w, w, rng);
  exit.output_experts = expert_bank(config_.experts, w, w, rng);
  exit.ffn_router = moe::make_router(w, config_.experts, config_.top_k, rng, config_.router_init_std);
  exit.up_experts = expert_bank(config_.experts, w, config_.d_ff, rng);
  exit.down_experts = expert_bank(config_.experts, config_.d_ff, w, rng);
  const std::size_t flat = glb_tokens() * w;
  exit.tower_w1 = linear_weight(flat, 4 * w, rng);
  exit.tower_b1 = ag::Var::parameter(Tensor({4 * w}));
  exit.tower_w2 = linear_weight(4 * w, 2 * w, rng);
  exit.tower_b2 = ag::Var::parameter(Tensor({2 * w}));
  exit.tower_w3 = linear_weight(2 * w, 1, rng);
  exit.tower_b3 = ag::Var::parameter(Tensor({1}));
}

std::size_t Model::seq_tokens() const {
  return schema_.short_len + (config_.long_seq ? config_.n_query : 0);
}

std::vector<std::pair<std::string, ag::Var>> Model::named_parameters() const {
  auto out = tables.named_parameters();
  for (const auto& p : projections) {
    out.emplace_back("entry.proj." + p.group + ".w", p.w);
    out.emplace_back("entry.proj." + p.group + ".b", p.b);
  }
  for (auto& kv : entry.named_parameters("entry")) out.push_back(std::move(kv));
  for (std::size_t l = 0; l < loop.size(); ++l)
    for (auto& kv : loop[l].named_parameters("loop." + std::to_string(l))) out.push_back(std::move(kv));
  for (auto& kv : exit.named_parameters()) out.push_back(std::move(kv));
  return out;
}

std::vector<ag::Var> Model::parameters() const {
  std::vector<ag::Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : named_parameters()) n += v.value().size();
  return n;
}

std::size_t Model::loop_parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < loop.size(); ++l)
    for (const auto& [name, v] : loop[l].named_parameters("loop")) n += v.value().size();
  return n;
}

PrefixMask build_prefix_mask(const std::vector<std::size_t>& seq_idx,
                             const std::vector<std::size_t>& glb_idx,
                             const std::vector<std::uint8_t>& valid) {
  const std::size_t total = seq_idx.size() + glb_idx.size();
  require(total >= 1, "build_prefix_mask: no tokens");
  require(valid.size() == total, "build_prefix_mask: validity size mismatch");
  std::vector<int> role(total, -1);  // 0 seq, 1 glb
  for (std::size_t i : seq_idx) {
    require(i < total && role[i] == -1, "build_prefix_mask: index sets overlap or leave gaps");
    role[i] = 0;
  }
  for (std::size_t i : glb_idx) {
    require(i < total && role[i] == -1, "build_prefix_mask: index sets overlap or leave gaps");
    role[i] = 1;
  }
  PrefixMask mask;
  mask.seq_idx = seq_idx;
  mask.glb_idx = glb_idx;
  mask.matrix = Tensor({total, total});
  for (std::size_t i = 0; i < total; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < total; ++j) {
      const bool structural = role[i] == 1 || role[j] == 0;
      const bool key_ok = valid[j] != 0 || (i == j && valid[i] == 0);
      if (structural && key_ok) {
        mask.matrix(i, j) = 1.0;
        any = true;
      }
    }
    require(any, "build_prefix_mask: query row " + std::to_string(i) + " is fully masked");
  }
  return mask;
}

std::vector<double> LoopTrace::predictions(std::size_t index) const {
  const Tensor& p = depths.at(index).pred.value();
  return std::vector<double>(p.data().begin(), p.data().end());
}

LoopTrace model_forward(const Model& model, const TokenCollection& tokens, std::size_t loops,
                        const ForwardOptions& options) {
  check_loops(model, loops);
  const auto tap = taps_for(loops, options.all_depths);
  const SeqPass sp =
      run_seq_side(model, with_role(tokens, TokenRole::kSequential), loops, tap, options.capture_hcr);
  return run_glb_side(model, with_role(tokens, TokenRole::kGlobal), sp, loops, tap,
                      options.capture_hcr);
}

LoopTrace forward_samples(const Model& model, std::span<const Sample> samples, std::size_t loops,
                          const ForwardOptions& options) {
  return model_forward(model, embed_batch(samples, model.tables), loops, options);
}

std::vector<double> score_candidates_cached(const Model& model, const Sample& request,
                                            std::span<const std::vector<std::uint32_t>> candidates,
                                            std::size_t loops) {
  require(!candidates.empty(), "score_candidates_cached: needs at least one candidate");
  check_loops(model, loops);
  ag::NoGradGuard no_grad;
  const auto tap = taps_for(loops, false);
  const SeqPass user = run_seq_side(
      model, embed_batch(std::span<const Sample>(&request, 1), model.tables, EmbedPart::kSequential),
      loops, tap, false);
  const SeqPass shared = replicate(user, candidates.size());
  const std::vector<Sample> items = candidate_samples(candidates);
  const LoopTrace trace = run_glb_side(model, embed_batch(items, model.tables, EmbedPart::kGlobal),
                                       shared, loops, tap, false);
  return trace.predictions(trace.depths.size() - 1);
}

std::vector<double> score_candidates_naive(const Model& model, const Sample& request,
                                           std::span<const std::vector<std::uint32_t>> candidates,
                                           std::size_t loops) {
  require(!candidates.empty(), "score_candidates_naive: needs at least one candidate");
  ag::NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& globals : candidates) {
    Sample s = request;
    s.global_ids = globals;
    const LoopTrace trace =
        forward_samples(model, std::span<const Sample>(&s, 1), loops, {.all_depths = false});
    out.push_back(trace.predictions(0).front());
  }
  return out;
}

}  // namespace loopctr
