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

#ifndef LOOPCTR_LOSSES_H_
#define LOOPCTR_LOSSES_H_

#include <span>

#include "loopctr/autograd.h"
#include "loopctr/model.h"

namespace loopctr {

// Per-sample log loss with the prediction clamped to [1e-7, 1 - 1e-7].
double sample_log_loss(double pred, double label);

// Mean log loss, samples summed left to right.
double bce(std::span<const double> preds, std::span<const double> labels);

// Mean over depths of the per-depth BCE. Needs every depth 0..loops.
ag::Var process_supervision_loss(const LoopTrace& trace, std::span<const double> labels);
double process_supervision_loss(std::span<const double> depth_bce);

// Load-balancing loss averaged over every MoE site invocation in `trace`.
ag::Var balance_loss(const LoopTrace& trace, std::size_t experts, std::size_t top_k);

// task + lambda * balance; lambda = 0 returns `task` itself.
ag::Var total_loss(const ag::Var& task, const ag::Var& balance, double lambda);
double total_loss(double task, double balance, double lambda);

}  // namespace loopctr

#endif  // LOOPCTR_LOSSES_H_
