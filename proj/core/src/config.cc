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

#include "loopctr/config.h"

#include <sstream>

#include "loopctr/errors.h"
#include "loopctr/kv_config.h"

namespace loopctr {
namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

ResidualMode parse_residual(const std::string& v, const std::string& source) {
  if (v == "hcr") return ResidualMode::kHcr;
  if (v == "prenorm") return ResidualMode::kPreNorm;
  throw ParseError(source + ": residual must be `hcr` or `prenorm`, got `" + v + "`");
}

hcr::CollapseRule parse_collapse(const std::string& v, const std::string& source) {
  if (v == "mean") return hcr::CollapseRule::kMean;
  if (v == "sum") return hcr::CollapseRule::kSum;
  throw ParseError(source + ": collapse must be `mean` or `sum`, got `" + v + "`");
}

template <typename Fn>
void rethrow_as_parse(const std::string& source, Fn&& fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    throw ParseError(source + ": " + e.what());
  }
}

}  // namespace

void ModelConfig::validate() const {
  require(d >= 1 && width() >= 1 && d_ff >= 1, "config: widths must be positive");
  require(heads >= 1 && width() % heads == 0, "config: model width must be divisible by heads");
  require(hcr_streams >= 1 && hcr_streams <= 4, "config: hcr_streams must lie in [1, 4]");
  require(experts >= 1 && top_k >= 1 && top_k <= experts, "config: need 1 <= top_k <= experts");
  require(balance_weight >= 0.0, "config: balance_weight must be non-negative");
  require(!long_seq || n_query >= 1, "config: n_query must be >= 1");
  require(embed_init_std > 0.0 && router_init_std > 0.0, "config: init scales must be positive");
}

void TrainConfig::validate() const {
  require(lr > 0.0, "config: lr must be positive");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(weight_decay >= 0.0, "config: weight_decay must be non-negative");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "config: Adam betas must lie in [0, 1)");
  require(adam_epsilon > 0.0, "config: adam_epsilon must be positive");
  require(clip_norm >= 0.0, "config: clip_norm must be non-negative");
}

std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c) {
  return {
      {"d", std::to_string(c.d)},
      {"d_model", std::to_string(c.d_model)},
      {"d_ff", std::to_string(c.d_ff)},
      {"heads", std::to_string(c.heads)},
      {"train_loops", std::to_string(c.train_loops)},
      {"hcr_streams", std::to_string(c.hcr_streams)},
      {"experts", std::to_string(c.experts)},
      {"top_k", std::to_string(c.top_k)},
      {"balance_weight", format_double(c.balance_weight)},
      {"weight_sharing", c.weight_sharing ? "true" : "false"},
      {"long_seq", c.long_seq ? "true" : "false"},
      {"n_query", std::to_string(c.n_query)},
      {"short_positions", c.short_positions ? "true" : "false"},
      {"share_item_embedding", c.share_item_embedding ? "true" : "false"},
      {"residual", c.residual == ResidualMode::kHcr ? "hcr" : "prenorm"},
      {"collapse", c.collapse == hcr::CollapseRule::kMean ? "mean" : "sum"},
      {"embed_init_std", format_double(c.embed_init_std)},
      {"router_init_std", format_double(c.router_init_std)},
      {"seed", std::to_string(c.seed)},
  };
}

ModelConfig model_config_from_keys(KeyValueFile& kv) {
  ModelConfig c;
  c.d = kv.take_size("d", c.d);
  c.d_model = kv.take_size("d_model", c.d_model);
  c.d_ff = kv.take_size("d_ff", c.d_ff);
  c.heads = kv.take_size("heads", c.heads);
  c.train_loops = kv.take_size("train_loops", c.train_loops);
  c.hcr_streams = kv.take_size("hcr_streams", c.hcr_streams);
  c.experts = kv.take_size("experts", c.experts);
  c.top_k = kv.take_size("top_k", c.top_k);
  c.balance_weight = kv.take_double("balance_weight", c.balance_weight);
  c.weight_sharing = kv.take_bool("weight_sharing", c.weight_sharing);
  c.long_seq = kv.take_bool("long_seq", c.long_seq);
  c.n_query = kv.take_size("n_query", c.n_query);
  c.short_positions = kv.take_bool("short_positions", c.short_positions);
  c.share_item_embedding = kv.take_bool("share_item_embedding", c.share_item_embedding);
  c.residual = parse_residual(kv.take_string("residual", "hcr"), kv.source());
  c.collapse = parse_collapse(kv.take_string("collapse", "mean"), kv.source());
  c.embed_init_std = kv.take_double("embed_init_std", c.embed_init_std);
  c.router_init_std = kv.take_double("router_init_std", c.router_init_std);
  c.seed = kv.take_u64("seed", c.seed);
  rethrow_as_parse(kv.source(), [&] { c.validate(); });
  return c;
}

RunConfig parse_run_config(KeyValueFile& kv) {
  RunConfig rc;
  rc.model = model_config_from_keys(kv);
  TrainConfig& t = rc.train;
  t.lr = kv.take_double("lr", t.lr);
  t.batch_size = kv.take_size("batch_size", t.batch_size);
  t.epochs = kv.take_size("epochs", t.epochs);
  t.weight_decay = kv.take_double("weight_decay", t.weight_decay);
  t.beta1 = kv.take_double("beta1", t.beta1);
  t.beta2 = kv.take_double("beta2", t.beta2);
  t.adam_epsilon = kv.take_double("adam_epsilon", t.adam_epsilon);
  t.clip_norm = kv.take_double("clip_norm", t.clip_norm);
  t.seed = kv.take_u64("train_seed", rc.model.seed);
  rethrow_as_parse(kv.source(), [&] { t.validate(); });
  rc.schema = schema_from_keys(kv);
  kv.finish();
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  return parse_run_config(kv);
}

}  // namespace loopctr
