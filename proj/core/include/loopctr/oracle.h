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

#ifndef LOOPCTR_ORACLE_H_
#define LOOPCTR_ORACLE_H_

#include <span>
#include <vector>

namespace loopctr {

// Post-hoc choice of the depth with the lowest per-sample log loss; ties go
// to the smaller depth.
struct OracleSelection {
  std::vector<std::size_t> depth;  // per sample
  std::vector<double> score;       // per sample
  std::vector<double> histogram;   // fraction of samples per depth, sums to 1
};

// `per_depth_scores[l][s]` is the prediction of depth l for sample s.
OracleSelection oracle_select(const std::vector<std::vector<double>>& per_depth_scores,
                              std::span<const double> labels);

}  // namespace loopctr

#endif  // LOOPCTR_ORACLE_H_
