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

#ifndef LOOPCTR_SWEEP_H_
#define LOOPCTR_SWEEP_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "loopctr/config.h"
#include "loopctr/datagen.h"
#include "loopctr/report.h"

namespace loopctr {

// One trained model per training loop count, each scored at every
// inference depth up to the largest requested one.
struct SweepBlock {
  std::size_t train_loops = 0;
  EvalReport report;  // depths 0..max inference loops, oracle over all of them
};

struct SweepResult {
  std::vector<std::size_t> train_loops;
  std::vector<std::size_t> infer_loops;
  std::vector<SweepBlock> blocks;
};

using SweepProgress = std::function<void(const std::string&)>;

// Trains on the dataset's train split and evaluates on its test split (all
// samples when the split is empty).
SweepResult run_sweep(const RunConfig& config, const Dataset& data,
                      const std::vector<std::size_t>& train_loops,
                      const std::vector<std::size_t>& infer_loops,
                      const SweepProgress& progress = {});

// Block per training loop count, one row per requested inference depth,
// then the oracle row. Cells a stacked model cannot run print as `-`.
void write_sweep_table(const SweepResult& result, std::ostream& out);
// record=sweep and record=sweep_oracle lines.
void write_sweep_records(const SweepResult& result, std::ostream& out);

}  // namespace loopctr

#endif  // LOOPCTR_SWEEP_H_
