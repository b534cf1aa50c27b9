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

#ifndef LOOPCTR_INIT_H_
#define LOOPCTR_INIT_H_

#include <cmath>
#include <random>

#include "loopctr/autograd.h"

namespace loopctr {

inline Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

// Weight of a [fan_in x fan_out] linear map, N(0, 1/fan_in).
inline ag::Var linear_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  return ag::Var::parameter(
      normal_tensor({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
}

}  // namespace loopctr

#endif  // LOOPCTR_INIT_H_
