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

#include "loopctr/embedding.h"

#include <cmath>

#include "loopctr/attention.h"
#include "loopctr/errors.h"
#include "loopctr/init.h"
#include "loopctr/op_counter.h"
#include "loopctr/ops.h"

namespace loopctr {

std::size_t TokenCollection::tokens_with_role(TokenRole role) const {
  std::size_t n = 0;
  for (const auto& g : groups)
    if (g.role == role) n += g.size;
  return n;
}

std::vector<std::pair<std::string, ag::Var>> EmbeddingTables::named_parameters() const {
  std::vector<std::pair<std::string, ag::Var>> out;
  out.emplace_back("embed.item", item);
  for (std::size_t f = 0; f < fields.size(); ++f) {
    if (fields[f].defined()) out.emplace_back("embed.field." + field_names[f], fields[f]);
  }
  if (short_positions.defined()) out.emplace_back("embed.short_positions", short_positions);
  if (compress.queries.defined()) {
    out.emplace_back("compress.queries", compress.queries);
    out.emplace_back("compress.wq", compress.wq);
    out.emplace_back("compress.wk", compress.wk);
    out.emplace_back("compress.wv", compress.wv);
    out.emplace_back("compress.wo", compress.wo);
  }
  return out;
}

EmbeddingTables make_embedding_tables(const ModelConfig& config, const FeatureSchema& schema,
                                      std::mt19937_64& rng) {
  config.validate();
  schema.validate();
  EmbeddingTables t;
  t.d = config.d;
  t.short_len = schema.short_len;
  t.long_len = schema.long_len;
  t.item_vocab = schema.item_vocab();
  const double s = config.embed_init_std;
  t.item = ag::Var::parameter(normal_tensor({schema.n_items, config.d}, s, rng));
  for (std::size_t f = 0; f < schema.global_fields.size(); ++f) {
    const GlobalField& field = schema.global_fields[f];
    t.field_names.push_back(field.name);
    t.field_vocab.push_back(field.vocab);
    const bool shared = config.share_item_embedding && t.item_field == EmbeddingTables::kNoField &&
                        field.name == "item" && field.vocab == schema.item_vocab();
    if (shared) {
      t.item_field = f;
      t.fields.emplace_back();
    } else {
      t.fields.push_back(ag::Var::parameter(normal_tensor({field.vocab - 1, config.d}, s, rng)));
    }
  }
  if (config.short_positions) {
    t.short_positions = ag::Var::parameter(normal_tensor({schema.short_len, config.d}, s, rng));
  }
  if (config.long_seq) {
    t.compress.queries = ag::Var::parameter(normal_tensor({config.n_query, config.d}, s, rng));
    t.compress.wq = linear_weight(config.d, config.d, rng);
    t.compress.wk = linear_weight(config.d, config.d, rng);
    t.compress.wv = linear_weight(config.d, config.d, rng);
    t.compress.wo = linear_weight(config.d, config.d, rng);
  }
  return t;
}

ag::Var lookup(const ag::Var& table, std::span<const std::uint32_t> ids, std::size_t vocab) {
  require(table.rows() + 1 == vocab, "lookup: table does not match vocabulary");
  std::vector<std::int64_t> index;
  index.reserve(ids.size());
  for (std::uint32_t id : ids) {
    require(id < vocab, "lookup: id " + std::to_string(id) + " >= vocabulary size " +
                            std::to_string(vocab));
    index.push_back(static_cast<std::int64_t>(id) - 1);
  }
  return ag::gather_rows(table, std::move(index));
}

ag::Var compress_long_sequence(const ag::Var& long_tokens, const std::vector<std::uint8_t>& valid,
                               std::size_t batch, const CompressionParams& params) {
  require(params.queries.defined(), "compress_long_sequence: compression is disabled");
  require(batch >= 1 && long_tokens.rows() % batch == 0,
          "compress_long_sequence: rows not a multiple of batch");
  require(valid.size() == long_tokens.rows(), "compress_long_sequence: validity size mismatch");
  const std::size_t long_len = long_tokens.rows() / batch;
  const std::size_t nq = params.queries.rows();

  std::vector<std::int64_t> rep;
  rep.reserve(batch * nq);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t q = 0; q < nq; ++q) rep.push_back(static_cast<std::int64_t>(q));
  const ag::Var queries = ag::gather_rows(params.queries, std::move(rep));

  auto pattern = std::make_shared<const AttentionPattern>(
      batch, nq, long_len,
      [&](std::size_t b, std::size_t, std::size_t j) { return valid[b * long_len + j] != 0; });
  const ag::Var q = ag::matmul(queries, params.wq);
  const ag::Var k = ag::matmul(long_tokens, params.wk);
  const ag::Var v = ag::matmul(long_tokens, params.wv);
  const ag::Var attended = attention(q, k, v, pattern, 1);
  return ag::add(queries, ag::matmul(attended, params.wo));
}

TokenCollection embed_batch(std::span<const Sample> samples, const EmbeddingTables& tables,
                            EmbedPart part) {
  require(!samples.empty(), "embed_batch: empty batch");
  TokenCollection tc;
  tc.batch = samples.size();
  const std::size_t batch = samples.size();

  if (part != EmbedPart::kGlobal) {
    CountScope scope(Component::kOther, Side::kUser);
    auto padded = [&](std::size_t len, bool long_seq) {
      std::vector<std::uint32_t> ids(batch * len, 0);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto& seq = long_seq ? samples[b].long_seq : samples[b].short_seq;
        require(seq.size() <= len, "embed_batch: sequence longer than the schema allows");
        std::copy(seq.begin(), seq.end(), ids.begin() + static_cast<std::ptrdiff_t>(b * len));
      }
      return ids;
    };
    auto validity = [](const std::vector<std::uint32_t>& ids) {
      std::vector<std::uint8_t> v(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) v[i] = ids[i] != 0;
      return v;
    };

    const auto short_ids = padded(tables.short_len, false);
    TokenGroup shorts{"short", TokenRole::kSequential, tables.short_len,
                      lookup(tables.item, short_ids, tables.item_vocab), validity(short_ids)};
    if (tables.short_positions.defined()) {
      std::vector<std::int64_t> pos;
      pos.reserve(short_ids.size());
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < tables.short_len; ++p) pos.push_back(static_cast<std::int64_t>(p));
      shorts.tokens = ag::add(shorts.tokens, ag::gather_rows(tables.short_positions, std::move(pos)));
    }
    tc.groups.push_back(std::move(shorts));

    if (tables.compress.queries.defined()) {
      const auto long_ids = padded(tables.long_len, true);
      const auto long_valid = validity(long_ids);
      const ag::Var raw = lookup(tables.item, long_ids, tables.item_vocab);
      CountScope compress_scope(Component::kCompress, Side::kUser);
      const std::size_t nq = tables.compress.queries.rows();
      tc.groups.push_back({"long", TokenRole::kSequential, nq,
                           compress_long_sequence(raw, long_valid, batch, tables.compress),
                           std::vector<std::uint8_t>(batch * nq, 1)});
    }
  }

  if (part != EmbedPart::kSequential) {
    for (std::size_t f = 0; f < tables.field_names.size(); ++f) {
      std::vector<std::uint32_t> ids(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        require(samples[b].global_ids.size() == tables.field_names.size(),
                "embed_batch: sample has the wrong number of global ids");
        ids[b] = samples[b].global_ids[f];
      }
      const bool shared = f == tables.item_field;
      const ag::Var& table = shared ? tables.item : tables.fields[f];
      tc.groups.push_back({tables.field_names[f], TokenRole::kGlobal, 1,
                           lookup(table, ids, tables.field_vocab[f]),
                           std::vector<std::uint8_t>(batch, 1)});
    }
  }
  return tc;
}

TokenCollection embed_sample(const Sample& sample, const EmbeddingTables& tables) {
  return embed_batch(std::span<const Sample>(&sample, 1), tables);
}

}  // namespace loopctr
