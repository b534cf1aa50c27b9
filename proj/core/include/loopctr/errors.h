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

#ifndef LOOPCTR_ERRORS_H_
#define LOOPCTR_ERRORS_H_

#include <stdexcept>
#include <string>

namespace loopctr {

// Raised when a caller breaks a documented precondition (shape mismatch,
// out-of-vocabulary id, fully masked softmax row, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised when a kernel produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by metrics that are undefined on the given input (single class, ...).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed dataset, config or checkpoint file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace loopctr

#endif  // LOOPCTR_ERRORS_H_
