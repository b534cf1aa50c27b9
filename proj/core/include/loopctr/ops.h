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

#ifndef LOOPCTR_OPS_H_
#define LOOPCTR_OPS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "loopctr/autograd.h"

// Differentiable tensor ops over ag::Var. Every op checks its output for
// NaN/Inf and records a hand-written backward.
namespace loopctr::ag {

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
// a * s where s holds one element.
Var scale_by(const Var& a, const Var& s);
// a[r, c] + b[c] for every row r.
Var add_row(const Var& a, const Var& b);

Var tanh(const Var& a);
// Tanh approximation of GELU.
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var rmsnorm_rows(const Var& a, double epsilon);
Var softmax_rows(const Var& a);

Var reshape(const Var& a, Shape shape);
// out.row(i) = a.row(index[i]); index -1 yields a zero row that never
// receives gradient.
Var gather_rows(const Var& a, std::vector<std::int64_t> index);
Var concat_rows(const std::vector<Var>& parts);

Var sum(const Var& a);
Var mean(const Var& a);

// Mean binary cross-entropy of probabilities `pred` (any shape, one entry
// per label) with inputs clamped to [1e-7, 1 - 1e-7].
Var bce(const Var& pred, std::span<const double> labels);

inline constexpr double kProbClamp = 1e-7;

}  // namespace loopctr::ag

#endif  // LOOPCTR_OPS_H_
