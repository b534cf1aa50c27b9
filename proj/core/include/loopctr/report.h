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

#ifndef LOOPCTR_REPORT_H_
#define LOOPCTR_REPORT_H_

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "loopctr/diagnostics.h"
#include "loopctr/model.h"

namespace loopctr {

// nullopt marks a metric that is undefined on the evaluated samples (for
// example a single-class label set).
struct DepthMetrics {
  std::size_t depth = 0;
  std::optional<double> auc, gauc, ne;
  double logloss = 0.0;
};

struct OracleMetrics {
  std::optional<double> auc, gauc, ne;
  double logloss = 0.0;
  std::vector<double> histogram;  // fraction of samples per depth
};

struct EvalReport {
  std::size_t loops = 0;
  std::size_t samples = 0;
  std::vector<DepthMetrics> depths;  // 0..loops
  std::optional<OracleMetrics> oracle;
  // Diagnostics, filled on request.
  std::vector<std::optional<double>> cosine;  // pair (l, l+1) at index l
  std::vector<RoutingStat> routing;
  std::vector<HcrStat> hcr;
};

struct EvalOptions {
  bool oracle = false;
  bool diagnostics = false;
  std::size_t batch_size = 512;
};

// Scores `samples` at every depth 0..loops without recording gradients.
EvalReport evaluate(const Model& model, std::span<const Sample> samples, std::size_t loops,
                    const EvalOptions& options = {});

// Metrics for externally produced per-depth scores ([depth][sample]).
EvalReport evaluate_scores(const std::vector<std::vector<double>>& per_depth_scores,
                           std::span<const Sample> samples, bool with_oracle);

// One `key=value ...` record per line: record=depth, record=oracle,
// record=oracle_hist, record=cosine, record=routing, record=hcr.
void write_report(const EvalReport& report, std::ostream& out);

// Fixed-width table with one row per depth and an oracle row.
void write_table(const EvalReport& report, std::ostream& out);

// Shortest round-trip decimal form; `undefined` for nullopt.
std::string format_metric(std::optional<double> v);

}  // namespace loopctr

#endif  // LOOPCTR_REPORT_H_
