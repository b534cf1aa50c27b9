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

#ifndef LOOPCTR_OPTIMIZER_H_
#define LOOPCTR_OPTIMIZER_H_

#include <vector>

#include "loopctr/autograd.h"
#include "loopctr/config.h"

namespace loopctr {

// Scales every gradient by min(1, max_norm / ||g||) where ||g|| is the
// global L2 norm over `params`. Returns the norm before clipping.
double clip_grad_norm(const std::vector<ag::Var>& params, double max_norm);

// Adam with decoupled weight decay:
//   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   w -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
// A parameter whose gradient was never produced is left untouched.
class AdamW {
 public:
  AdamW(std::vector<ag::Var> params, const TrainConfig& config);

  void step();
  void zero_grad();
  std::size_t steps() const { return step_; }

 private:
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::size_t step_ = 0;
};

}  // namespace loopctr

#endif  // LOOPCTR_OPTIMIZER_H_
