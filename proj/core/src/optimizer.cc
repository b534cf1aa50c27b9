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

#include "loopctr/optimizer.h"

#include <cmath>

#include "loopctr/errors.h"

namespace loopctr {

double clip_grad_norm(const std::vector<ag::Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NonFiniteError("clip_grad_norm: gradient norm is not finite");
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.node()->grad.data()) g *= factor;
    }
  }
  return norm;
}

AdamW::AdamW(std::vector<ag::Var> params, const TrainConfig& config)
    : params_(std::move(params)),
      lr_(config.lr),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_epsilon),
      weight_decay_(config.weight_decay) {
  config.validate();
  for (const auto& p : params_) {
    require(p.requires_grad(), "AdamW: parameter does not require a gradient");
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void AdamW::step() {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_value().data();
    auto g = p.node()->grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace loopctr
