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

#include "loopctr/attention.h"

#include <algorithm>
#include <cmath>

#include "loopctr/errors.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"

namespace loopctr {

AttentionPattern::AttentionPattern(std::size_t batch, std::size_t queries,
                                   std::size_t keys, const Predicate& allowed)
    : batch_(batch), queries_(queries), keys_(keys) {
  offsets_.reserve(batch * queries + 1);
  offsets_.push_back(0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < queries; ++i) {
      for (std::size_t j = 0; j < keys; ++j) {
        if (allowed(b, i, j)) keys_index_.push_back(static_cast<std::uint32_t>(j));
      }
      offsets_.push_back(keys_index_.size());
    }
  }
}

std::span<const std::uint32_t> AttentionPattern::allowed(std::size_t sample,
                                                         std::size_t query) const {
  const std::size_t row = sample * queries_ + query;
  return std::span<const std::uint32_t>(keys_index_)
      .subspan(offsets_[row], offsets_[row + 1] - offsets_[row]);
}

bool AttentionPattern::is_allowed(std::size_t sample, std::size_t query,
                                  std::size_t key) const {
  auto row = allowed(sample, query);
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(key));
}

Tensor AttentionPattern::dense_mask(std::size_t sample) const {
  Tensor m({queries_, keys_});
  for (std::size_t i = 0; i < queries_; ++i)
    for (std::uint32_t j : allowed(sample, i)) m(i, j) = 1.0;
  return m;
}

ag::Var attention(const ag::Var& q, const ag::Var& k, const ag::Var& v,
                  const PatternPtr& pattern, std::size_t heads,
                  std::vector<double>* weights_out) {
  const AttentionPattern& pat = *pattern;
  const std::size_t d = q.cols();
  require(heads >= 1 && d % heads == 0, "attention: width not divisible by heads");
  require(k.cols() == d && v.cols() == d, "attention: q/k/v widths differ");
  require(q.rows() == pat.batch() * pat.queries(), "attention: query rows do not match pattern");
  require(k.rows() == pat.batch() * pat.keys() && v.rows() == k.rows(),
          "attention: key rows do not match pattern");

  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();

  Tensor out({q.rows(), d});
  // Probabilities per allowed pair and head, in pattern order.
  auto probs = std::make_shared<std::vector<double>>(pat.pairs() * heads);
  std::vector<double> scratch;
  std::size_t pair_base = 0;
  for (std::size_t b = 0; b < pat.batch(); ++b) {
    for (std::size_t i = 0; i < pat.queries(); ++i) {
      auto keys = pat.allowed(b, i);
      const std::size_t qrow = b * pat.queries() + i;
      if (keys.empty()) continue;
      scratch.resize(keys.size());
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qp = qv.row(qrow).data() + h * dh;
        for (std::size_t t = 0; t < keys.size(); ++t) {
          const double* kp = kv.row(b * pat.keys() + keys[t]).data() + h * dh;
          scratch[t] = kernel::dot(qp, kp, dh) * inv_sqrt;
        }
        kernel::softmax_inplace(scratch);
        double* op = out.row(qrow).data() + h * dh;
        for (std::size_t t = 0; t < keys.size(); ++t) {
          (*probs)[(pair_base + t) * heads + h] = scratch[t];
          const double* vp = vv.row(b * pat.keys() + keys[t]).data() + h * dh;
          for (std::size_t c = 0; c < dh; ++c) op[c] += scratch[t] * vp[c];
        }
      }
      pair_base += keys.size();
    }
  }
  op_counter::add_macs(static_cast<std::uint64_t>(pat.pairs()) * 2 * d);
  check_finite(out, "attention");
  if (weights_out) *weights_out = *probs;

  return ag::make_result(std::move(out), {q, k, v},
      [pattern, probs, heads, dh, inv_sqrt](ag::Node& self) {
        const AttentionPattern& pt = *pattern;
        const Tensor& qv = self.parents[0]->value;
        const Tensor& kv = self.parents[1]->value;
        const Tensor& vv = self.parents[2]->value;
        const bool need_q = self.parents[0]->requires_grad;
        const bool need_k = self.parents[1]->requires_grad;
        const bool need_v = self.parents[2]->requires_grad;
        Tensor* gq = need_q ? &self.parents[0]->grad_buffer() : nullptr;
        Tensor* gk = need_k ? &self.parents[1]->grad_buffer() : nullptr;
        Tensor* gv = need_v ? &self.parents[2]->grad_buffer() : nullptr;
        const Tensor& g = self.grad;
        std::vector<double> dp;
        std::size_t base = 0;
        for (std::size_t b = 0; b < pt.batch(); ++b) {
          for (std::size_t i = 0; i < pt.queries(); ++i) {
            auto keys = pt.allowed(b, i);
            const std::size_t qrow = b * pt.queries() + i;
            if (keys.empty()) continue;
            dp.resize(keys.size());
            for (std::size_t h = 0; h < heads; ++h) {
              const double* go = g.row(qrow).data() + h * dh;
              double dot = 0.0;
              for (std::size_t t = 0; t < keys.size(); ++t) {
                const std::size_t krow = b * pt.keys() + keys[t];
                const double p = (*probs)[(base + t) * heads + h];
                const double* vp = vv.row(krow).data() + h * dh;
                const double s = kernel::dot(go, vp, dh);
                dp[t] = s;
                dot += p * s;
                if (gv) {
                  double* gvp = gv->row(krow).data() + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvp[c] += p * go[c];
                }
              }
              const double* qp = qv.row(qrow).data() + h * dh;
              for (std::size_t t = 0; t < keys.size(); ++t) {
                const std::size_t krow = b * pt.keys() + keys[t];
                const double p = (*probs)[(base + t) * heads + h];
                const double ds = p * (dp[t] - dot) * inv_sqrt;
                if (gq) {
                  const double* kp = kv.row(krow).data() + h * dh;
                  double* gqp = gq->row(qrow).data() + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gqp[c] += ds * kp[c];
                }
                if (gk) {
                  double* gkp = gk->row(krow).data() + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkp[c] += ds * qp[c];
                }
              }
            }
            base += keys.size();
          }
        }
      });
}

}  // namespace loopctr
