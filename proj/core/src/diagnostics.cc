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

#include "loopctr/diagnostics.h"

#include <algorithm>
#include <cmath>

#include "loopctr/errors.h"

namespace loopctr {

void SimilarityAccumulator::add(const LoopTrace& trace) {
  require(trace.depths.size() >= 2, "interloop_similarity: needs at least two depths");
  const std::size_t pairs = trace.depths.size() - 1;
  if (sums_.empty()) {
    sums_.assign(pairs, 0.0);
    counts_.assign(pairs, 0);
  }
  require(sums_.size() == pairs, "interloop_similarity: depth count changed between batches");
  const std::size_t batch = trace.batch;
  for (std::size_t p = 0; p < pairs; ++p) {
    const Tensor& a = trace.depths[p].glb.value();
    const Tensor& b = trace.depths[p + 1].glb.value();
    const std::size_t per_sample = a.size() / batch;
    for (std::size_t s = 0; s < batch; ++s) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = s * per_sample; i < (s + 1) * per_sample; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      if (na == 0.0 || nb == 0.0) continue;
      // Clamped against rounding just outside [-1, 1].
      sums_[p] += std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
      ++counts_[p];
    }
  }
}

std::vector<std::optional<double>> SimilarityAccumulator::result() const {
  std::vector<std::optional<double>> out;
  for (std::size_t p = 0; p < sums_.size(); ++p) {
    if (counts_[p] == 0) out.emplace_back(std::nullopt);
    else out.emplace_back(sums_[p] / static_cast<double>(counts_[p]));
  }
  return out;
}

std::vector<std::optional<double>> interloop_similarity(const LoopTrace& trace) {
  SimilarityAccumulator acc;
  acc.add(trace);
  return acc.result();
}

void RoutingAccumulator::add(const LoopTrace& trace) {
  for (const RoutingEvent& ev : trace.routing) {
    auto& c = counts_[{ev.depth, ev.site}];
    if (c.empty()) c.assign(experts_, 0);
    for (const auto& d : ev.decisions) {
      require(d.experts == experts_, "routing_stats: expert count mismatch");
      for (std::uint32_t e : d.indices) ++c[e];
    }
  }
}

std::vector<RoutingStat> RoutingAccumulator::result() const {
  std::vector<RoutingStat> out;
  for (const auto& [key, c] : counts_) {
    std::uint64_t total = 0;
    for (auto v : c) total += v;
    if (total == 0) continue;
    RoutingStat st{key.second, key.first, {}};
    for (auto v : c) st.usage.push_back(static_cast<double>(v) / static_cast<double>(total));
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<RoutingStat> routing_stats(const LoopTrace& trace, std::size_t experts) {
  RoutingAccumulator acc(experts);
  acc.add(trace);
  return acc.result();
}

void HcrAccumulator::add(const LoopTrace& trace) {
  for (const HcrSnapshot& snap : trace.hcr) {
    for (const hcr::Coefficients& c : snap.coefficients) {
      const Tensor& mix = c.mix.value();
      const Tensor& res = c.residual.value();
      const Tensor& out = c.out.value();
      const std::size_t n = mix.cols();
      for (std::size_t s = 0; s < n; ++s) {
        auto& v = values_[{snap.depth, snap.block, snap.sublayer, "mix." + std::to_string(s)}];
        for (std::size_t r = 0; r < mix.rows(); ++r) v.push_back(mix(r, s));
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          auto& v = values_[{snap.depth, snap.block, snap.sublayer,
                             "res." + std::to_string(i) + "." + std::to_string(j)}];
          for (std::size_t r = 0; r < res.rows(); ++r) v.push_back(res(r, i * n + j));
        }
      }
      for (std::size_t s = 0; s < n; ++s) {
        auto& v = values_[{snap.depth, snap.block, snap.sublayer, "out." + std::to_string(s)}];
        for (std::size_t r = 0; r < out.rows(); ++r) v.push_back(out(r, s));
      }
    }
  }
}

std::vector<HcrStat> HcrAccumulator::result() const {
  std::vector<HcrStat> out;
  for (const auto& [key, v] : values_) {
    if (v.empty()) continue;
    HcrStat st;
    st.depth = std::get<0>(key);
    st.block = std::get<1>(key);
    st.sublayer = std::get<2>(key);
    st.coeff = std::get<3>(key);
    double total = 0.0;
    for (double x : v) total += x;
    st.mean = total / static_cast<double>(v.size());
    st.p30 = percentile(v, 0.3);
    st.p70 = percentile(v, 0.7);
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<HcrStat> hcr_coefficient_stats(const LoopTrace& trace) {
  HcrAccumulator acc;
  acc.add(trace);
  return acc.result();
}

double percentile(std::vector<double> values, double q) {
  require(!values.empty(), "percentile: no values");
  require(q >= 0.0 && q <= 1.0, "percentile: q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace loopctr
