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

#include "loopctr/sweep.h"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "loopctr/errors.h"
#include "loopctr/model.h"
#include "loopctr/trainer.h"

namespace loopctr {
namespace {

std::string cell(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

const DepthMetrics* depth_row(const SweepBlock& b, std::size_t i) {
  return i < b.report.depths.size() ? &b.report.depths[i] : nullptr;
}

}  // namespace

SweepResult run_sweep(const RunConfig& config, const Dataset& data,
                      const std::vector<std::size_t>& train_loops,
                      const std::vector<std::size_t>& infer_loops,
                      const SweepProgress& progress) {
  require(!train_loops.empty() && !infer_loops.empty(), "sweep: empty loop list");
  require(!data.train().empty(), "sweep: dataset has no training samples");
  const std::span<const Sample> test = data.test().empty() ? data.train() : data.test();
  const std::size_t max_i = *std::max_element(infer_loops.begin(), infer_loops.end());

  SweepResult result;
  result.train_loops = train_loops;
  result.infer_loops = infer_loops;
  for (std::size_t L : train_loops) {
    ModelConfig mc = config.model;
    mc.train_loops = L;
    Model model(mc, data.schema);
    if (progress) progress("training L=" + std::to_string(L));
    train(model, config.train, data.train(), [&](const EpochStats& s) {
      if (progress)
        progress("  L=" + std::to_string(L) + " epoch " + std::to_string(s.epoch) +
                 " loss " + std::to_string(s.loss));
    });
    // A stacked model stops at its layer count.
    const std::size_t depth = mc.weight_sharing ? max_i : std::min(max_i, L);
    EvalOptions opts;
    opts.oracle = true;
    result.blocks.push_back({L, evaluate(model, test, depth, opts)});
  }
  return result;
}

void write_sweep_table(const SweepResult& r, std::ostream& out) {
  char line[160];
  std::snprintf(line, sizeof line, "%-4s %-7s %8s %8s %8s\n", "L", "i", "AUC", "GAUC", "NE");
  out << line;
  for (const auto& b : r.blocks) {
    for (std::size_t i : r.infer_loops) {
      const DepthMetrics* m = depth_row(b, i);
      std::snprintf(line, sizeof line, "%-4zu %-7zu %8s %8s %8s\n", b.train_loops, i,
                    m ? cell(m->auc).c_str() : "-", m ? cell(m->gauc).c_str() : "-",
                    m ? cell(m->ne).c_str() : "-");
      out << line;
    }
    const auto& o = *b.report.oracle;
    std::snprintf(line, sizeof line, "%-4zu %-7s %8s %8s %8s\n", b.train_loops, "oracle",
                  cell(o.auc).c_str(), cell(o.gauc).c_str(), cell(o.ne).c_str());
    out << line;
  }
}

void write_sweep_records(const SweepResult& r, std::ostream& out) {
  for (const auto& b : r.blocks) {
    for (std::size_t i : r.infer_loops) {
      const DepthMetrics* m = depth_row(b, i);
      out << "record=sweep L=" << b.train_loops << " i=" << i;
      if (m) {
        out << " auc=" << format_metric(m->auc) << " gauc=" << format_metric(m->gauc)
            << " ne=" << format_metric(m->ne) << '\n';
      } else {
        out << " auc=unavailable gauc=unavailable ne=unavailable\n";
      }
    }
    const auto& o = *b.report.oracle;
    out << "record=sweep_oracle L=" << b.train_loops << " depths=" << b.report.depths.size()
        << " auc=" << format_metric(o.auc) << " gauc=" << format_metric(o.gauc)
        << " ne=" << format_metric(o.ne) << " hist=";
    for (std::size_t l = 0; l < o.histogram.size(); ++l)
      out << (l ? "," : "") << format_metric(o.histogram[l]);
    out << '\n';
  }
}

}  // namespace loopctr
