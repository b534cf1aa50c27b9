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

#ifndef LOOPCTR_CONFIG_H_
#define LOOPCTR_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "loopctr/datagen.h"
#include "loopctr/hcr.h"

namespace loopctr {

class KeyValueFile;

enum class ResidualMode { kHcr, kPreNorm };

struct ModelConfig {
  std::size_t d = 32;          // embedding width
  std::size_t d_model = 0;     // width after the group projections; 0 means d
  std::size_t d_ff = 64;
  std::size_t heads = 2;
  std::size_t train_loops = 2;
  std::size_t hcr_streams = 2;
  std::size_t experts = 4;
  std::size_t top_k = 2;
  double balance_weight = 0.01;
  bool weight_sharing = true;  // false: one distinct layer per training loop
  bool long_seq = true;
  std::size_t n_query = 16;
  bool short_positions = false;
  bool share_item_embedding = true;  // candidate item field reuses the sequence table
  ResidualMode residual = ResidualMode::kHcr;
  hcr::CollapseRule collapse = hcr::CollapseRule::kMean;
  double embed_init_std = 0.1;
  double router_init_std = 0.02;
  std::uint64_t seed = 1;

  std::size_t width() const { return d_model == 0 ? d : d_model; }
  // Distinct loop layers that get allocated.
  std::size_t loop_layers() const { return weight_sharing ? 1 : train_loops; }
  // Throws ContractViolation on an inconsistent configuration.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t seed = 1;  // shuffling

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Everything a `key = value` run file can hold. Schema keys are optional and
// only consulted by commands that have no dataset to read them from.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  FeatureSchema schema;
};

RunConfig parse_run_config(KeyValueFile& kv);
RunConfig load_run_config(const std::filesystem::path& path);

// Model keys in canonical order, as written to checkpoints.
std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c);
// Consumes model keys from `kv`.
ModelConfig model_config_from_keys(KeyValueFile& kv);

}  // namespace loopctr

#endif  // LOOPCTR_CONFIG_H_
