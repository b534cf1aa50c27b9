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

#ifndef LOOPCTR_EMBEDDING_H_
#define LOOPCTR_EMBEDDING_H_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "loopctr/autograd.h"
#include "loopctr/config.h"
#include "loopctr/datagen.h"

namespace loopctr {

enum class TokenRole { kSequential, kGlobal };

// A group of `size` tokens per sample for a batch of samples: `tokens` is
// [batch*size x d] with each sample's tokens contiguous, `valid` has one flag
// per row.
struct TokenGroup {
  std::string name;
  TokenRole role = TokenRole::kGlobal;
  std::size_t size = 0;
  ag::Var tokens;
  std::vector<std::uint8_t> valid;
};

// Ordered groups: the short-sequence group, the compressed long-sequence
// group when enabled, then one singleton group per global field.
struct TokenCollection {
  std::size_t batch = 0;
  std::vector<TokenGroup> groups;

  std::size_t tokens_with_role(TokenRole role) const;
};

struct CompressionParams {
  ag::Var queries;  // [n_query x d]
  ag::Var wq, wk, wv, wo;
};

// Row i-1 of a table holds id i; the pad id 0 has no row and embeds to zero.
struct EmbeddingTables {
  std::size_t d = 0;
  ag::Var item;                    // [n_items x d]
  std::vector<ag::Var> fields;     // per global field; undefined if it reuses `item`
  std::vector<std::string> field_names;
  std::vector<std::size_t> field_vocab;
  std::size_t item_field = kNoField;
  ag::Var short_positions;         // [short_len x d] when enabled
  CompressionParams compress;      // queries undefined when long sequences are off
  std::size_t short_len = 0;
  std::size_t long_len = 0;
  std::size_t item_vocab = 0;

  static constexpr std::size_t kNoField = static_cast<std::size_t>(-1);

  std::vector<std::pair<std::string, ag::Var>> named_parameters() const;
};

EmbeddingTables make_embedding_tables(const ModelConfig& config, const FeatureSchema& schema,
                                      std::mt19937_64& rng);

// Embedding rows for `ids`; id 0 yields a zero row with no gradient.
// Ids >= vocab are a contract violation.
ag::Var lookup(const ag::Var& table, std::span<const std::uint32_t> ids, std::size_t vocab);

enum class EmbedPart { kAll, kSequential, kGlobal };

TokenCollection embed_batch(std::span<const Sample> samples, const EmbeddingTables& tables,
                            EmbedPart part = EmbedPart::kAll);
TokenCollection embed_sample(const Sample& sample, const EmbeddingTables& tables);

// Single-head cross-attention of the learnable queries over the valid long
// tokens plus a residual: out = Q + softmax(QWq (LWk)^T / sqrt(d)) (LWv) Wo.
// `long_tokens` is [batch*long_len x d]. A sample with no valid long token
// gets the raw queries back.
ag::Var compress_long_sequence(const ag::Var& long_tokens, const std::vector<std::uint8_t>& valid,
                               std::size_t batch, const CompressionParams& params);

}  // namespace loopctr

#endif  // LOOPCTR_EMBEDDING_H_
