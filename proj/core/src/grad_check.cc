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

#include "loopctr/grad_check.h"

#include <algorithm>
#include <cmath>

#include "loopctr/errors.h"

namespace loopctr {
namespace {

double checked_forward(const std::function<double(const Tensor&)>& f, const Tensor& x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw ContractViolation("grad_check: non-finite forward value");
  return v;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const DifferentiableFn& f, const Tensor& point, double step) {
  checked_forward(f.forward, point);
  const Tensor analytic = f.analytic_grad(point);
  require(analytic.shape() == point.shape(), "grad_check: gradient shape differs from input");
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = checked_forward(f.forward, probe);
    probe[i] = point[i] - step;
    const double down = checked_forward(f.forward, probe);
    probe[i] = point[i];
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

double grad_check_parameters(const std::function<ag::Var()>& loss,
                             std::vector<ag::Var> params, double step) {
  for (auto& p : params) p.zero_grad();
  const ag::Var root = loss();
  if (!std::isfinite(root.value()[0])) {
    throw ContractViolation("grad_check: non-finite forward value");
  }
  ag::backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  auto eval = [&] {
    ag::NoGradGuard guard;
    const double v = loss().value()[0];
    if (!std::isfinite(v)) throw ContractViolation("grad_check: non-finite forward value");
    return v;
  };

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = value[i];
      value[i] = original + step;
      const double up = eval();
      value[i] = original - step;
      const double down = eval();
      value[i] = original;
      worst = std::max(worst, relative_error(analytic[p][i], (up - down) / (2.0 * step)));
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace loopctr
