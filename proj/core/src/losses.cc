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

#include "loopctr/losses.h"

#include <algorithm>
#include <cmath>

#include "loopctr/errors.h"
#include "loopctr/ops.h"

namespace loopctr {

double sample_log_loss(double pred, double label) {
  const double p = std::clamp(pred, ag::kProbClamp, 1.0 - ag::kProbClamp);
  return label > 0.5 ? -std::log(p) : -std::log(1.0 - p);
}

double bce(std::span<const double> preds, std::span<const double> labels) {
  require(preds.size() == labels.size(), "bce: length mismatch");
  require(!preds.empty(), "bce: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += sample_log_loss(preds[i], labels[i]);
  return total / static_cast<double>(preds.size());
}

ag::Var process_supervision_loss(const LoopTrace& trace, std::span<const double> labels) {
  require(!trace.depths.empty(), "process_supervision_loss: empty trace");
  require(trace.depths.size() == trace.loops + 1,
          "process_supervision_loss: trace is missing depths");
  std::vector<ag::Var> terms;
  for (const auto& d : trace.depths) terms.push_back(ag::bce(d.pred, labels));
  if (terms.size() == 1) return terms.front();
  return ag::mean(ag::concat_rows(terms));
}

double process_supervision_loss(std::span<const double> depth_bce) {
  require(!depth_bce.empty(), "process_supervision_loss: no depths");
  double total = 0.0;
  for (double v : depth_bce) total += v;
  return total / static_cast<double>(depth_bce.size());
}

ag::Var balance_loss(const LoopTrace& trace, std::size_t experts, std::size_t top_k) {
  require(!trace.routing.empty(), "balance_loss: trace has no routing decisions");
  std::vector<ag::Var> terms;
  for (const RoutingEvent& ev : trace.routing) {
    std::vector<const moe::RoutingDecision*> ptrs;
    for (const auto& d : ev.decisions) ptrs.push_back(&d);
    terms.push_back(moe::balance_loss(ptrs, experts, top_k));
  }
  if (terms.size() == 1) return terms.front();
  return ag::mean(ag::concat_rows(terms));
}

ag::Var total_loss(const ag::Var& task, const ag::Var& balance, double lambda) {
  require(lambda >= 0.0, "total_loss: lambda must be non-negative");
  if (lambda == 0.0) return task;
  return ag::add(task, ag::scale(balance, lambda));
}

double total_loss(double task, double balance, double lambda) {
  require(lambda >= 0.0, "total_loss: lambda must be non-negative");
  return task + lambda * balance;
}

}  // namespace loopctr
