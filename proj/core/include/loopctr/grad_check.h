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

#ifndef LOOPCTR_GRAD_CHECK_H_
#define LOOPCTR_GRAD_CHECK_H_

#include <functional>
#include <vector>

#include "loopctr/autograd.h"
#include "loopctr/tensor.h"

namespace loopctr {

struct DifferentiableFn {
  std::function<double(const Tensor&)> forward;
  std::function<Tensor(const Tensor&)> analytic_grad;
};

// Central finite differences on every coordinate of `point`. Returns
// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|).
double grad_check(const DifferentiableFn& f, const Tensor& point, double step);

// Checks every listed parameter of a tape-built scalar function: `loss`
// rebuilds the graph from the current parameter values. Parameters are
// perturbed in place and restored afterwards.
double grad_check_parameters(const std::function<ag::Var()>& loss,
                             std::vector<ag::Var> params, double step);

}  // namespace loopctr

#endif  // LOOPCTR_GRAD_CHECK_H_
