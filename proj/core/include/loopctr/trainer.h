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

#ifndef LOOPCTR_TRAINER_H_
#define LOOPCTR_TRAINER_H_

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "loopctr/config.h"
#include "loopctr/datagen.h"
#include "loopctr/model.h"

namespace loopctr {

// Means over the epoch's samples (each minibatch weighted by its size).
struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;       // task + lambda * balance
  double task_loss = 0.0;  // mean of the per-depth BCE
  double balance = 0.0;
  std::vector<double> depth_bce;  // depth 0..train_loops
  // Largest per-expert dispatch fraction, averaged over MoE sites and batches.
  double max_usage = 0.0;
  std::size_t batches = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Sample visiting order for one epoch: a Fisher-Yates shuffle driven by a
// generator seeded from (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

// Minibatch AdamW on the process-supervised objective with the model's
// training loop count. Throws NonFiniteError naming the epoch and batch if
// the loss diverges.
TrainHistory train(Model& model, const TrainConfig& config, std::span<const Sample> train_set,
                   const EpochCallback& on_epoch = {});

std::vector<double> labels_of(std::span<const Sample> samples);

}  // namespace loopctr

#endif  // LOOPCTR_TRAINER_H_
