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

#ifndef LOOPCTR_METRICS_H_
#define LOOPCTR_METRICS_H_

#include <cstdint>
#include <span>

namespace loopctr {

// P(score+ > score-) + 0.5 P(tie), from midranks with exact integer
// arithmetic. Throws UndefinedMetric unless both classes are present.
double auc(std::span<const double> scores, std::span<const double> labels);

// Unweighted mean of per-user AUC over users that have both classes.
double gauc(std::span<const double> scores, std::span<const double> labels,
            std::span<const std::uint32_t> user_ids);

// Mean log loss divided by the log loss of predicting the empirical click
// rate for every sample. Both sums run over the samples in order, so a
// constant prediction equal to the base rate gives exactly 1.
double ne(std::span<const double> scores, std::span<const double> labels);

}  // namespace loopctr

#endif  // LOOPCTR_METRICS_H_
