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

#ifndef LOOPCTR_ATTENTION_H_
#define LOOPCTR_ATTENTION_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "loopctr/autograd.h"

namespace loopctr {

// Sparse attention pattern for a batch of samples that share one layout:
// every sample owns `queries` query rows and `keys` key rows. For each
// (sample, query) the allowed key indices are stored in ascending order, so
// scores are only computed for allowed pairs.
class AttentionPattern {
 public:
  using Predicate = std::function<bool(std::size_t sample, std::size_t query,
                                       std::size_t key)>;

  AttentionPattern(std::size_t batch, std::size_t queries, std::size_t keys,
                   const Predicate& allowed);

  std::size_t batch() const { return batch_; }
  std::size_t queries() const { return queries_; }
  std::size_t keys() const { return keys_; }
  std::size_t pairs() const { return keys_index_.size(); }

  std::span<const std::uint32_t> allowed(std::size_t sample, std::size_t query) const;
  bool is_allowed(std::size_t sample, std::size_t query, std::size_t key) const;

  // Dense 0/1 view of one sample, queries x keys.
  Tensor dense_mask(std::size_t sample) const;

 private:
  std::size_t batch_, queries_, keys_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> keys_index_;
};

using PatternPtr = std::shared_ptr<const AttentionPattern>;

// Multi-head scaled dot-product attention softmax(Q K^T / sqrt(d_h)) V,
// restricted to the pattern. q is [batch*queries x d], k and v are
// [batch*keys x d]. Query rows with no allowed key produce zeros.
// When `weights_out` is set it receives the per-head probabilities of every
// allowed pair, laid out as pairs() x heads.
ag::Var attention(const ag::Var& q, const ag::Var& k, const ag::Var& v,
                  const PatternPtr& pattern, std::size_t heads,
                  std::vector<double>* weights_out = nullptr);

}  // namespace loopctr

#endif  // LOOPCTR_ATTENTION_H_
