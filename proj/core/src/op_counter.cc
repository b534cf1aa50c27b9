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

#include "loopctr/op_counter.h"

namespace loopctr {
namespace {

struct CounterState {
  OpCounts counts;
  Component component = Component::kOther;
  Side side = Side::kItem;
};

CounterState& state() {
  thread_local CounterState s;
  return s;
}

}  // namespace

std::uint64_t OpCounts::total() const {
  std::uint64_t t = 0;
  for (const auto& per_side : macs)
    for (std::uint64_t v : per_side) t += v;
  return t;
}

std::uint64_t OpCounts::component(Component c) const {
  const auto& per_side = macs[static_cast<std::size_t>(c)];
  return per_side[0] + per_side[1];
}

std::uint64_t OpCounts::side(Side s) const {
  std::uint64_t t = 0;
  for (const auto& per_side : macs) t += per_side[static_cast<std::size_t>(s)];
  return t;
}

OpCounts OpCounts::operator-(const OpCounts& other) const {
  OpCounts d;
  for (std::size_t c = 0; c < kNumComponents; ++c)
    for (std::size_t s = 0; s < kNumSides; ++s)
      d.macs[c][s] = macs[c][s] - other.macs[c][s];
  d.expert_calls = expert_calls - other.expert_calls;
  return d;
}

namespace op_counter {

void add_macs(std::uint64_t n) {
  auto& s = state();
  s.counts.macs[static_cast<std::size_t>(s.component)]
               [static_cast<std::size_t>(s.side)] += n;
}

void add_expert_calls(std::uint64_t n) { state().counts.expert_calls += n; }

OpCounts snapshot() { return state().counts; }

void reset() { state().counts = OpCounts{}; }

}  // namespace op_counter

CountScope::CountScope(Component component, Side side)
    : saved_component_(state().component), saved_side_(state().side) {
  state().component = component;
  state().side = side;
}

CountScope::~CountScope() {
  state().component = saved_component_;
  state().side = saved_side_;
}

SideScope::SideScope(Side side) : saved_side_(state().side) { state().side = side; }

SideScope::~SideScope() { state().side = saved_side_; }

}  // namespace loopctr
