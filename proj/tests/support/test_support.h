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

#ifndef LOOPCTR_TESTS_TEST_SUPPORT_H_
#define LOOPCTR_TESTS_TEST_SUPPORT_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "loopctr/autograd.h"
#include "loopctr/config.h"
#include "loopctr/datagen.h"
#include "loopctr/ops.h"
#include "loopctr/tensor.h"

namespace loopctr::testing {

// Uniform entries in [lo, hi).
inline Tensor uniform_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// sum(a * w) with a fixed random w: a generic scalar head for grad checks.
inline ag::Var random_projection(const ag::Var& a, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ag::sum(ag::mul(a, ag::Var::constant(uniform_tensor(a.shape(), rng))));
}

// Small schema: 3 short slots, 5 long slots, one context field.
inline FeatureSchema tiny_schema() {
  return make_schema(12, 20, 4, 3, 5, {{"device", 3}});
}

// Width-4 model with every mechanism switched on.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 4;
  c.d_ff = 6;
  c.heads = 2;
  c.train_loops = 1;
  c.hcr_streams = 2;
  c.experts = 3;
  c.top_k = 2;
  c.n_query = 2;
  c.embed_init_std = 0.5;
  c.router_init_std = 0.5;
  c.seed = 7;
  return c;
}

inline std::vector<Sample> tiny_samples(std::size_t n, std::uint64_t seed) {
  return generate_dataset(tiny_schema(), n, seed).samples;
}

inline std::vector<double> labels_from(std::span<const Sample> samples) {
  std::vector<double> y;
  for (const auto& s : samples) y.push_back(s.label);
  return y;
}

}  // namespace loopctr::testing

#endif  // LOOPCTR_TESTS_TEST_SUPPORT_H_
