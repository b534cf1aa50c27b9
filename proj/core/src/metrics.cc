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

#include "loopctr/metrics.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "loopctr/errors.h"
#include "loopctr/losses.h"

namespace loopctr {
namespace {

void check_inputs(std::span<const double> scores, std::span<const double> labels,
                  const char* what) {
  require(scores.size() == labels.size(), std::string(what) + ": length mismatch");
  for (double y : labels) require(y == 0.0 || y == 1.0, std::string(what) + ": labels must be 0 or 1");
}

// Returns false when one class is missing.
bool auc_of(std::span<const double> scores, std::span<const double> labels,
            std::span<const std::size_t> subset, double& out) {
  const std::size_t n = subset.size();
  // Keeps every doubled sum below 2^53, so the final division is exact up
  // to one rounding.
  require(n <= (std::size_t{1} << 26), "auc: more than 2^26 samples");
  std::vector<std::size_t> order(subset.begin(), subset.end());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the midrank of a tie block [i, j) (1-based ranks) is i + j + 1.
  std::uint64_t doubled_rank_sum = 0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1.0) {
        doubled_rank_sum += i + j + 1;
        ++positives;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return false;
  // 2U = sum of doubled ranks - P (P + 1).
  const std::uint64_t twice_u = doubled_rank_sum - positives * (positives + 1);
  const std::uint64_t twice_pairs = 2 * positives * negatives;
  out = static_cast<double>(twice_u) / static_cast<double>(twice_pairs);
  return true;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const double> labels) {
  check_inputs(scores, labels, "auc");
  std::vector<std::size_t> all(scores.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  double out = 0.0;
  if (!auc_of(scores, labels, all, out)) throw UndefinedMetric("auc: needs both label classes");
  return out;
}

double gauc(std::span<const double> scores, std::span<const double> labels,
            std::span<const std::uint32_t> user_ids) {
  check_inputs(scores, labels, "gauc");
  require(user_ids.size() == scores.size(), "gauc: user id length mismatch");
  std::map<std::uint32_t, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < user_ids.size(); ++i) by_user[user_ids[i]].push_back(i);
  double total = 0.0;
  std::size_t eligible = 0;
  for (const auto& [user, rows] : by_user) {
    double a = 0.0;
    if (!auc_of(scores, labels, rows, a)) continue;
    total += a;
    ++eligible;
  }
  if (eligible == 0) throw UndefinedMetric("gauc: no user has both label classes");
  return total / static_cast<double>(eligible);
}

double ne(std::span<const double> scores, std::span<const double> labels) {
  check_inputs(scores, labels, "ne");
  require(!scores.empty(), "ne: empty input");
  double positives = 0.0;
  for (double y : labels) positives += y;
  const double base = positives / static_cast<double>(labels.size());
  if (base <= 0.0 || base >= 1.0) throw UndefinedMetric("ne: empirical click rate must lie in (0, 1)");
  double model = 0.0, reference = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    model += sample_log_loss(scores[i], labels[i]);
    reference += sample_log_loss(base, labels[i]);
  }
  return model / reference;
}

}  // namespace loopctr
