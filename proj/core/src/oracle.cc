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

#include "loopctr/oracle.h"

#include "loopctr/errors.h"
#include "loopctr/losses.h"

namespace loopctr {

OracleSelection oracle_select(const std::vector<std::vector<double>>& per_depth_scores,
                              std::span<const double> labels) {
  require(!per_depth_scores.empty(), "oracle_select: needs at least one depth");
  const std::size_t n = labels.size();
  require(n >= 1, "oracle_select: no samples");
  for (const auto& row : per_depth_scores) require(row.size() == n, "oracle_select: length mismatch");

  OracleSelection sel;
  sel.depth.resize(n);
  sel.score.resize(n);
  std::vector<std::size_t> counts(per_depth_scores.size(), 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t best = 0;
    double best_loss = sample_log_loss(per_depth_scores[0][s], labels[s]);
    for (std::size_t l = 1; l < per_depth_scores.size(); ++l) {
      const double loss = sample_log_loss(per_depth_scores[l][s], labels[s]);
      if (loss < best_loss) {
        best = l;
        best_loss = loss;
      }
    }
    sel.depth[s] = best;
    sel.score[s] = per_depth_scores[best][s];
    ++counts[best];
  }
  for (std::size_t c : counts) sel.histogram.push_back(static_cast<double>(c) / static_cast<double>(n));
  return sel;
}

}  // namespace loopctr
