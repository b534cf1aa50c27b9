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

#include "loopctr/trainer.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "loopctr/errors.h"
#include "loopctr/losses.h"
#include "loopctr/optimizer.h"

namespace loopctr {

std::vector<double> labels_of(std::span<const Sample> samples) {
  std::vector<double> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(static_cast<double>(s.label));
  return y;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainHistory train(Model& model, const TrainConfig& config, std::span<const Sample> train_set,
                   const EpochCallback& on_epoch) {
  config.validate();
  require(!train_set.empty(), "train: empty training set");
  const ModelConfig& mc = model.config();
  const std::size_t loops = mc.train_loops;
  AdamW opt(model.parameters(), config);
  TrainHistory history;

  std::vector<Sample> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train_set.size(), config.seed, epoch);
    EpochStats st;
    st.epoch = epoch;
    st.depth_bce.assign(loops + 1, 0.0);
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const std::vector<double> y = labels_of(batch);
      const double weight = static_cast<double>(batch.size());
      try {
        const LoopTrace trace = forward_samples(model, batch, loops);
        const ag::Var task = process_supervision_loss(trace, y);
        const ag::Var bal = balance_loss(trace, mc.experts, mc.top_k);
        const ag::Var loss = total_loss(task, bal, mc.balance_weight);
        if (!std::isfinite(loss.value()[0])) throw NonFiniteError("loss is not finite");
        ag::backward(loss);
        clip_grad_norm(model.parameters(), config.clip_norm);
        opt.step();
        opt.zero_grad();

        st.loss += weight * loss.value()[0];
        st.task_loss += weight * task.value()[0];
        st.balance += weight * bal.value()[0];
        for (std::size_t l = 0; l <= loops; ++l) {
          const auto p = trace.predictions(l);
          st.depth_bce[l] += weight * bce(p, y);
        }
        double usage = 0.0;
        for (const RoutingEvent& ev : trace.routing) {
          std::vector<const moe::RoutingDecision*> ptrs;
          for (const auto& d : ev.decisions) ptrs.push_back(&d);
          const auto f = moe::dispatch_fractions(ptrs, mc.experts);
          usage += *std::max_element(f.begin(), f.end());
        }
        st.max_usage += weight * usage / static_cast<double>(trace.routing.size());
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / config.batch_size) + ": " + e.what());
      }
      seen += batch.size();
      ++st.batches;
    }
    const double n = static_cast<double>(seen);
    st.loss /= n;
    st.task_loss /= n;
    st.balance /= n;
    st.max_usage /= n;
    for (double& v : st.depth_bce) v /= n;
    if (on_epoch) on_epoch(st);
    history.epochs.push_back(std::move(st));
  }
  return history;
}

}  // namespace loopctr
