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

#ifndef LOOPCTR_DIAGNOSTICS_H_
#define LOOPCTR_DIAGNOSTICS_H_

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "loopctr/model.h"

namespace loopctr {

// Cosine similarity between the concatenated collapsed global states of
// adjacent depths, averaged over samples. Samples with a zero-norm state
// are skipped; a pair with no usable sample is undefined (nullopt).
class SimilarityAccumulator {
 public:
  void add(const LoopTrace& trace);
  std::vector<std::optional<double>> result() const;

 private:
  std::vector<double> sums_;
  std::vector<std::size_t> counts_;
};

std::vector<std::optional<double>> interloop_similarity(const LoopTrace& trace);

struct RoutingStat {
  std::string site;
  std::size_t depth = 0;
  std::vector<double> usage;  // dispatch-normalized, sums to 1
};

class RoutingAccumulator {
 public:
  explicit RoutingAccumulator(std::size_t experts) : experts_(experts) {}
  void add(const LoopTrace& trace);
  std::vector<RoutingStat> result() const;

 private:
  std::size_t experts_;
  std::map<std::pair<std::size_t, std::string>, std::vector<std::uint64_t>> counts_;
};

std::vector<RoutingStat> routing_stats(const LoopTrace& trace, std::size_t experts);

// Summary of one HCR coefficient entry (e.g. `mix.0`, `res.0.1`, `out.1`)
// over all tokens: mean and 30th/70th percentiles (linear interpolation).
struct HcrStat {
  std::string block;
  std::size_t depth = 0;
  std::size_t sublayer = 0;
  std::string coeff;
  double mean = 0.0, p30 = 0.0, p70 = 0.0;
};

class HcrAccumulator {
 public:
  void add(const LoopTrace& trace);
  std::vector<HcrStat> result() const;

 private:
  using Key = std::tuple<std::size_t, std::string, std::size_t, std::string>;
  std::map<Key, std::vector<double>> values_;
};

std::vector<HcrStat> hcr_coefficient_stats(const LoopTrace& trace);

// Linear-interpolation percentile, q in [0, 1]; `values` must be non-empty.
double percentile(std::vector<double> values, double q);

}  // namespace loopctr

#endif  // LOOPCTR_DIAGNOSTICS_H_
