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

#ifndef LOOPCTR_OP_COUNTER_H_
#define LOOPCTR_OP_COUNTER_H_

#include <array>
#include <cstdint>

namespace loopctr {

enum class Component : std::uint8_t { kCompress, kEntry, kLoop, kExit, kOther };
enum class Side : std::uint8_t { kUser, kItem };

inline constexpr std::size_t kNumComponents = 5;
inline constexpr std::size_t kNumSides = 2;

// Thread-local tally of multiply-accumulates executed by forward kernels,
// split by the block and serving side that was active when the kernel ran.
// Backward passes are not counted.
struct OpCounts {
  std::array<std::array<std::uint64_t, kNumSides>, kNumComponents> macs{};
  std::uint64_t expert_calls = 0;  // single-token expert matmuls

  std::uint64_t total() const;
  std::uint64_t component(Component c) const;
  std::uint64_t side(Side s) const;
  OpCounts operator-(const OpCounts& other) const;
};

namespace op_counter {

void add_macs(std::uint64_t n);
void add_expert_calls(std::uint64_t n);
OpCounts snapshot();
void reset();

}  // namespace op_counter

// Tags kernels executed inside the scope with a component and serving side.
class CountScope {
 public:
  CountScope(Component component, Side side);
  ~CountScope();
  CountScope(const CountScope&) = delete;
  CountScope& operator=(const CountScope&) = delete;

 private:
  Component saved_component_;
  Side saved_side_;
};

// Retags the side only, keeping the enclosing component.
class SideScope {
 public:
  explicit SideScope(Side side);
  ~SideScope();
  SideScope(const SideScope&) = delete;
  SideScope& operator=(const SideScope&) = delete;

 private:
  Side saved_side_;
};

}  // namespace loopctr

#endif  // LOOPCTR_OP_COUNTER_H_
