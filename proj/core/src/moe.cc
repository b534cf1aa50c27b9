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

#include "loopctr/moe.h"

#include <algorithm>
#include <numeric>

#include "loopctr/errors.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"
#include "loopctr/ops.h"

namespace loopctr::moe {
namespace {

// Renormalized top-k gates: g_j = p_{e_j} / sum_m p_{e_m}.
ag::Var topk_gates(const ag::Var& probs, const std::vector<std::uint32_t>& indices,
                   std::size_t k) {
  const Tensor& p = probs.value();
  const std::size_t tokens = p.rows();
  Tensor g({tokens, k});
  std::vector<double> totals(tokens);
  for (std::size_t t = 0; t < tokens; ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += p(t, indices[t * k + j]);
    totals[t] = s;
    for (std::size_t j = 0; j < k; ++j) g(t, j) = p(t, indices[t * k + j]) / s;
  }
  check_finite(g, "moe::topk_gates");
  return ag::make_result(g, {probs},
      [g, indices, totals = std::move(totals), k, tokens](ag::Node& self) {
        Tensor& gp = self.parents[0]->grad_buffer();
        for (std::size_t t = 0; t < tokens; ++t) {
          double dot = 0.0;
          for (std::size_t j = 0; j < k; ++j) dot += self.grad(t, j) * g(t, j);
          for (std::size_t j = 0; j < k; ++j)
            gp(t, indices[t * k + j]) += (self.grad(t, j) - dot) / totals[t];
        }
      });
}

}  // namespace

Router make_router(std::size_t width, std::size_t experts, std::size_t top_k,
                   std::mt19937_64& rng, double init_std) {
  require(experts >= 1 && top_k >= 1 && top_k <= experts, "router needs 1 <= k <= E");
  std::normal_distribution<double> normal(0.0, init_std);
  Tensor gate({width, experts});
  for (double& v : gate.data()) v = normal(rng);
  return Router{ag::Var::parameter(std::move(gate)), experts, top_k};
}

RoutingDecision route_logits(const ag::Var& logits, std::size_t top_k) {
  const std::size_t experts = logits.cols();
  require(top_k >= 1 && top_k <= experts, "route: need 1 <= k <= E");
  RoutingDecision d;
  d.tokens = logits.rows();
  d.experts = experts;
  d.top_k = top_k;
  d.probs = ag::softmax_rows(logits);
  const Tensor& p = d.probs.value();
  d.indices.resize(d.tokens * top_k);
  std::vector<std::uint32_t> order(experts);
  for (std::size_t t = 0; t < d.tokens; ++t) {
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return p(t, a) > p(t, b);
    });
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top_k));
    std::copy_n(order.begin(), top_k, d.indices.begin() + static_cast<std::ptrdiff_t>(t * top_k));
  }
  d.gates = topk_gates(d.probs, d.indices, top_k);
  return d;
}

RoutingDecision route(const ag::Var& tokens, const Router& router) {
  require(tokens.cols() == router.gate.rows(), "route: token width != router width");
  return route_logits(ag::matmul(tokens, router.gate), router.top_k);
}

namespace {

// Slots (token * k + j) routed to each expert, in increasing slot order.
std::vector<std::vector<std::size_t>> slots_by_expert(const std::vector<std::uint32_t>& indices,
                                                      std::size_t experts) {
  std::vector<std::vector<std::size_t>> out(experts);
  for (std::size_t slot = 0; slot < indices.size(); ++slot) out[indices[slot]].push_back(slot);
  return out;
}

// Rows `src[row_of(slot)]` for the given slots, packed into [slots x cols].
template <typename RowOf>
std::vector<double> pack_rows(const Tensor& src, const std::vector<std::size_t>& slots,
                              RowOf row_of) {
  const std::size_t cols = src.cols();
  std::vector<double> out(slots.size() * cols);
  for (std::size_t r = 0; r < slots.size(); ++r) {
    auto row = src.row(row_of(slots[r]));
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  return out;
}

void unpack_rows(const std::vector<double>& packed, const std::vector<std::size_t>& slots,
                 Tensor& dst) {
  const std::size_t cols = dst.cols();
  for (std::size_t r = 0; r < slots.size(); ++r) {
    auto row = dst.row(slots[r]);
    std::copy_n(packed.begin() + static_cast<std::ptrdiff_t>(r * cols), cols, row.begin());
  }
}

// out[t] = sum_j gate[t][j] * partial[t*k + j], slots added in order.
Tensor combine_slots(const Tensor& partial, const Tensor& gates, std::size_t tokens,
                     std::size_t k) {
  const std::size_t dout = partial.cols();
  Tensor out({tokens, dout});
  for (std::size_t t = 0; t < tokens; ++t) {
    auto dst = out.row(t);
    for (std::size_t j = 0; j < k; ++j) {
      const double g = gates(t, j);
      auto y = partial.row(t * k + j);
      for (std::size_t c = 0; c < dout; ++c) dst[c] += g * y[c];
    }
  }
  return out;
}

// Per-slot upstream gradient scaled by its gate; also accumulates the gate
// gradient <go_t, partial_slot>.
Tensor scaled_slot_grads(const Tensor& go, const Tensor& gates, const Tensor& partial,
                         std::size_t tokens, std::size_t k, Tensor* gate_grad) {
  const std::size_t dout = go.cols();
  Tensor scaled({tokens * k, dout});
  for (std::size_t t = 0; t < tokens; ++t) {
    auto gr = go.row(t);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t slot = t * k + j;
      if (gate_grad) (*gate_grad)(t, j) += kernel::dot(gr.data(), partial.row(slot).data(), dout);
      const double g = gates(t, j);
      auto dst = scaled.row(slot);
      for (std::size_t c = 0; c < dout; ++c) dst[c] = g * gr[c];
    }
  }
  return scaled;
}

// gx[t] += per-slot input gradients, slots added in order.
void add_slot_rows(const Tensor& per_slot, std::size_t tokens, std::size_t k, Tensor& gx) {
  const std::size_t cols = gx.cols();
  for (std::size_t t = 0; t < tokens; ++t) {
    auto dst = gx.row(t);
    for (std::size_t j = 0; j < k; ++j) {
      auto src = per_slot.row(t * k + j);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  }
}

}  // namespace

ag::Var moe_linear(const ag::Var& x, const RoutingDecision& decision,
                   const std::vector<ag::Var>& bank) {
  require(!bank.empty() && bank.size() == decision.experts, "moe_linear: bank size != E");
  require(x.rows() == decision.tokens, "moe_linear: decision does not match tokens");
  const std::size_t din = bank.front().rows();
  const std::size_t dout = bank.front().cols();
  for (const auto& w : bank) {
    require(w.rows() == din && w.cols() == dout, "moe_linear: experts differ in shape");
  }
  require(x.cols() == din, "moe_linear: input width mismatch");
  const std::size_t tokens = decision.tokens, k = decision.top_k;
  const auto groups = slots_by_expert(decision.indices, decision.experts);
  auto token_of = [k](std::size_t slot) { return slot / k; };
  auto same = [](std::size_t slot) { return slot; };

  // Per-slot expert outputs are kept for the gate gradient.
  Tensor partial({tokens * k, dout});
  for (std::size_t e = 0; e < groups.size(); ++e) {
    if (groups[e].empty()) continue;
    const auto xe = pack_rows(x.value(), groups[e], token_of);
    std::vector<double> ye(groups[e].size() * dout, 0.0);
    kernel::matmul_accumulate(xe, bank[e].value().data(), ye, groups[e].size(), din, dout);
    unpack_rows(ye, groups[e], partial);
  }
  Tensor out = combine_slots(partial, decision.gates.value(), tokens, k);
  op_counter::add_macs(static_cast<std::uint64_t>(tokens) * k * din * dout);
  op_counter::add_expert_calls(static_cast<std::uint64_t>(tokens) * k);
  check_finite(out, "moe_linear");

  std::vector<ag::Var> parents{x, decision.gates};
  parents.insert(parents.end(), bank.begin(), bank.end());
  return ag::make_result(std::move(out), std::move(parents),
      [groups, partial = std::move(partial), tokens, k, din, dout, token_of, same](ag::Node& self) {
        const Tensor& xv = self.parents[0]->value;
        Tensor* gx = self.parents[0]->requires_grad ? &self.parents[0]->grad_buffer() : nullptr;
        Tensor* gg = self.parents[1]->requires_grad ? &self.parents[1]->grad_buffer() : nullptr;
        const Tensor scaled =
            scaled_slot_grads(self.grad, self.parents[1]->value, partial, tokens, k, gg);
        Tensor gx_slots = gx ? Tensor({tokens * k, din}) : Tensor();
        for (std::size_t e = 0; e < groups.size(); ++e) {
          if (groups[e].empty()) continue;
          ag::Node& expert = *self.parents[2 + e];
          const std::size_t n = groups[e].size();
          const auto se = pack_rows(scaled, groups[e], same);
          if (gx) {
            std::vector<double> ge(n * din, 0.0);
            kernel::matmul_a_bt_accumulate(se, expert.value.data(), ge, n, dout, din);
            unpack_rows(ge, groups[e], gx_slots);
          }
          if (expert.requires_grad) {
            const auto xe = pack_rows(xv, groups[e], token_of);
            kernel::matmul_at_b_accumulate(xe, se, expert.grad_buffer().data(), n, din, dout);
          }
        }
        if (gx) add_slot_rows(gx_slots, tokens, k, *gx);
      });
}

ag::Var moe_ffn(const ag::Var& x, const RoutingDecision& decision,
                const std::vector<ag::Var>& up, const std::vector<ag::Var>& down) {
  require(up.size() == decision.experts && down.size() == decision.experts,
          "moe_ffn: bank size != E");
  require(x.rows() == decision.tokens, "moe_ffn: decision does not match tokens");
  const std::size_t din = up.front().rows();
  const std::size_t hidden = up.front().cols();
  const std::size_t dout = down.front().cols();
  for (std::size_t e = 0; e < up.size(); ++e) {
    require(up[e].rows() == din && up[e].cols() == hidden && down[e].rows() == hidden &&
                down[e].cols() == dout,
            "moe_ffn: experts differ in shape");
  }
  require(x.cols() == din, "moe_ffn: input width mismatch");
  const std::size_t tokens = decision.tokens, k = decision.top_k;
  const auto groups = slots_by_expert(decision.indices, decision.experts);
  auto token_of = [k](std::size_t slot) { return slot / k; };
  auto same = [](std::size_t slot) { return slot; };

  const bool keep = ag::grad_enabled();
  // gelu'(x Up_e) and gelu(x Up_e), kept for the backward pass only.
  Tensor slope = keep ? Tensor({tokens * k, hidden}) : Tensor();
  Tensor act = keep ? Tensor({tokens * k, hidden}) : Tensor();
  Tensor partial({tokens * k, dout});
  for (std::size_t e = 0; e < groups.size(); ++e) {
    if (groups[e].empty()) continue;
    const std::size_t n = groups[e].size();
    const auto xe = pack_rows(x.value(), groups[e], token_of);
    std::vector<double> he(n * hidden, 0.0);
    kernel::matmul_accumulate(xe, up[e].value().data(), he, n, din, hidden);
    if (keep) {
      std::vector<double> se(he.size());
      for (std::size_t i = 0; i < he.size(); ++i) he[i] = kernel::gelu_with_slope(he[i], se[i]);
      unpack_rows(se, groups[e], slope);
      unpack_rows(he, groups[e], act);
    } else {
      for (double& v : he) v = kernel::gelu(v);
    }
    std::vector<double> ye(n * dout, 0.0);
    kernel::matmul_accumulate(he, down[e].value().data(), ye, n, hidden, dout);
    unpack_rows(ye, groups[e], partial);
  }
  Tensor out = combine_slots(partial, decision.gates.value(), tokens, k);
  op_counter::add_macs(static_cast<std::uint64_t>(tokens) * k * (din * hidden + hidden * dout));
  op_counter::add_expert_calls(static_cast<std::uint64_t>(tokens) * k);
  check_finite(out, "moe_ffn");

  const std::size_t experts = decision.experts;
  std::vector<ag::Var> parents{x, decision.gates};
  parents.insert(parents.end(), up.begin(), up.end());
  parents.insert(parents.end(), down.begin(), down.end());
  return ag::make_result(std::move(out), std::move(parents),
      [groups, slope = std::move(slope), act = std::move(act), partial = std::move(partial), tokens, k,
       din, hidden, dout, experts, token_of, same](ag::Node& self) {
        const Tensor& xv = self.parents[0]->value;
        Tensor* gx = self.parents[0]->requires_grad ? &self.parents[0]->grad_buffer() : nullptr;
        Tensor* gg = self.parents[1]->requires_grad ? &self.parents[1]->grad_buffer() : nullptr;
        const Tensor scaled =
            scaled_slot_grads(self.grad, self.parents[1]->value, partial, tokens, k, gg);
        Tensor gx_slots = gx ? Tensor({tokens * k, din}) : Tensor();
        for (std::size_t e = 0; e < groups.size(); ++e) {
          if (groups[e].empty()) continue;
          ag::Node& w1 = *self.parents[2 + e];
          ag::Node& w2 = *self.parents[2 + experts + e];
          const std::size_t n = groups[e].size();
          const auto se = pack_rows(scaled, groups[e], same);
          const auto pe = pack_rows(slope, groups[e], same);
          // Hidden gradient: (s W2^T) * gelu'(x Up_e).
          std::vector<double> gh(n * hidden, 0.0);
          kernel::matmul_a_bt_accumulate(se, w2.value.data(), gh, n, dout, hidden);
          for (std::size_t i = 0; i < gh.size(); ++i) gh[i] *= pe[i];
          if (w2.requires_grad) {
            const auto ae = pack_rows(act, groups[e], same);
            kernel::matmul_at_b_accumulate(ae, se, w2.grad_buffer().data(), n, hidden, dout);
          }
          if (gx) {
            std::vector<double> ge(n * din, 0.0);
            kernel::matmul_a_bt_accumulate(gh, w1.value.data(), ge, n, hidden, din);
            unpack_rows(ge, groups[e], gx_slots);
          }
          if (w1.requires_grad) {
            const auto xe = pack_rows(xv, groups[e], token_of);
            kernel::matmul_at_b_accumulate(xe, gh, w1.grad_buffer().data(), n, din, hidden);
          }
        }
        if (gx) add_slot_rows(gx_slots, tokens, k, *gx);
      });
}

std::vector<double> dispatch_fractions(const std::vector<const RoutingDecision*>& decisions,
                                       std::size_t experts) {
  std::vector<double> f(experts, 0.0);
  std::size_t assignments = 0;
  for (const RoutingDecision* d : decisions) {
    require(d->experts == experts, "dispatch_fractions: expert count mismatch");
    for (std::uint32_t e : d->indices) f[e] += 1.0;
    assignments += d->indices.size();
  }
  require(assignments > 0, "dispatch_fractions: no routed tokens");
  for (double& v : f) v /= static_cast<double>(assignments);
  return f;
}

ag::Var balance_loss(const std::vector<const RoutingDecision*>& decisions,
                     std::size_t experts, std::size_t top_k) {
  require(!decisions.empty(), "balance_loss: no routing decisions");
  std::size_t n_tokens = 0;
  for (const RoutingDecision* d : decisions) {
    require(d->top_k == top_k, "balance_loss: top-k mismatch");
    n_tokens += d->tokens;
  }
  require(n_tokens >= 1, "balance_loss: needs at least one token");
  const std::vector<double> f = dispatch_fractions(decisions, experts);

  std::vector<double> p(experts, 0.0);
  std::vector<ag::Var> parents;
  for (const RoutingDecision* d : decisions) {
    const Tensor& pr = d->probs.value();
    for (std::size_t t = 0; t < d->tokens; ++t)
      for (std::size_t e = 0; e < experts; ++e) p[e] += pr(t, e);
    parents.push_back(d->probs);
  }
  const double n = static_cast<double>(n_tokens);
  double loss = 0.0;
  for (std::size_t e = 0; e < experts; ++e) loss += f[e] * (p[e] / n);
  loss *= static_cast<double>(experts);

  return ag::make_result(Tensor::scalar(loss), std::move(parents),
      [f, n, experts](ag::Node& self) {
        const double g = self.grad[0] * static_cast<double>(experts) / n;
        for (auto& parent : self.parents) {
          if (!parent->requires_grad) continue;
          Tensor& gp = parent->grad_buffer();
          for (std::size_t t = 0; t < gp.rows(); ++t)
            for (std::size_t e = 0; e < experts; ++e) gp(t, e) += g * f[e];
        }
      });
}

}  // namespace loopctr::moe
