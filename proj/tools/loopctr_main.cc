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

// loopctr: data generation, training, evaluation, loop sweeps, serving
// simulation and cost reports from the command line.

#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "loopctr/autograd.h"
#include "loopctr/checkpoint.h"
#include "loopctr/config.h"
#include "loopctr/cost_model.h"
#include "loopctr/datagen.h"
#include "loopctr/errors.h"
#include "loopctr/model.h"
#include "loopctr/op_counter.h"
#include "loopctr/report.h"
#include "loopctr/sweep.h"
#include "loopctr/trainer.h"

namespace {

using namespace loopctr;
using Clock = std::chrono::steady_clock;

std::vector<std::size_t> parse_loop_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (item.empty() || pos != item.size() || item[0] == '-')
      throw ParseError("bad loop list `" + text + "`");
    out.push_back(v);
  }
  if (out.empty()) throw ParseError("empty loop list");
  return out;
}

std::span<const Sample> eval_split(const Dataset& ds) {
  return ds.test().empty() ? std::span<const Sample>(ds.samples) : ds.test();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void print_epoch(const EpochStats& s) {
  std::cout << "record=epoch epoch=" << s.epoch << " loss=" << s.loss << " task=" << s.task_loss
            << " balance=" << s.balance << " max_usage=" << s.max_usage << " bce=";
  for (std::size_t l = 0; l < s.depth_bce.size(); ++l) std::cout << (l ? "," : "") << s.depth_bce[l];
  std::cout << '\n' << std::flush;
}

int cmd_gen(const std::string& schema_path, std::size_t n, std::uint64_t seed,
            const std::string& out) {
  const FeatureSchema schema = read_schema_file(schema_path);
  const Dataset ds = generate_dataset(schema, n, seed);
  write_dataset(ds, out);
  std::size_t clicks = 0;
  for (const auto& s : ds.samples) clicks += static_cast<std::size_t>(s.label);
  std::cout << "record=gen n=" << ds.samples.size() << " train=" << ds.split
            << " test=" << ds.samples.size() - ds.split
            << " ctr=" << static_cast<double>(clicks) / static_cast<double>(ds.samples.size())
            << " out=" << out << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out) {
  const RunConfig rc = load_run_config(config_path);
  const Dataset ds = read_dataset(data_path);
  Model model(rc.model, ds.schema);
  std::cout << "record=model params=" << model.parameter_count()
            << " loop_params=" << model.loop_parameter_count()
            << " train_loops=" << rc.model.train_loops << " train_samples=" << ds.split << '\n';
  const auto t0 = Clock::now();
  train(model, rc.train, ds.train(), print_epoch);
  std::cout << "record=train_time seconds=" << seconds_since(t0) << '\n';
  save_checkpoint(model, out);
  std::cout << "record=checkpoint path=" << out << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, std::size_t loops,
             bool oracle, bool diagnostics) {
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = read_dataset(data_path);
  EvalOptions opts;
  opts.oracle = oracle;
  opts.diagnostics = diagnostics;
  const EvalReport report = evaluate(model, eval_split(ds), loops, opts);
  write_report(report, std::cout);
  std::cout << '\n';
  write_table(report, std::cout);
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& data_path,
              const std::string& train_list, const std::string& infer_list) {
  const RunConfig rc = load_run_config(config_path);
  const Dataset ds = read_dataset(data_path);
  const SweepResult r = run_sweep(rc, ds, parse_loop_list(train_list), parse_loop_list(infer_list),
                                  [](const std::string& msg) { std::cerr << msg << '\n'; });
  write_sweep_table(r, std::cout);
  std::cout << '\n';
  write_sweep_records(r, std::cout);
  return 0;
}

// Candidates keep the request's global ids except for the item and its
// category, which come from later samples of the split.
std::vector<std::vector<std::uint32_t>> make_candidates(const FeatureSchema& schema,
                                                        std::span<const Sample> pool,
                                                        std::size_t n) {
  require(pool.size() >= 2, "serve-sim needs at least two samples");
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<std::uint32_t> ids = pool[0].global_ids;
    const Sample& donor = pool[1 + c % (pool.size() - 1)];
    for (std::size_t f = 0; f < schema.global_fields.size(); ++f) {
      const std::string& name = schema.global_fields[f].name;
      if (name == "item" || name == "category") ids[f] = donor.global_ids[f];
    }
    out.push_back(std::move(ids));
  }
  return out;
}

int cmd_serve(const std::string& ckpt, const std::string& data_path, std::size_t n, bool no_cache) {
  require(n >= 1, "--candidates must be >= 1");
  const Model model = load_checkpoint(ckpt);
  const Dataset ds = read_dataset(data_path);
  const auto pool = eval_split(ds);
  const auto candidates = make_candidates(ds.schema, pool, n);
  const Sample& request = pool[0];
  const std::size_t loops = model.config().train_loops;

  auto measure = [&](bool cached, std::vector<double>& scores) {
    op_counter::reset();
    const auto t0 = Clock::now();
    scores = cached ? score_candidates_cached(model, request, candidates, loops)
                    : score_candidates_naive(model, request, candidates, loops);
    const double secs = seconds_since(t0);
    const OpCounts counts = op_counter::snapshot();
    std::cout << "record=serve mode=" << (cached ? "cached" : "naive") << " candidates=" << n
              << " user_flops=" << 2 * counts.side(Side::kUser)
              << " item_flops=" << 2 * counts.side(Side::kItem)
              << " total_flops=" << 2 * counts.total() << " wall_ms=" << secs * 1e3
              << " clock=machine_relative\n";
    return counts;
  };

  std::vector<double> naive, cached;
  const OpCounts naive_counts = measure(false, naive);
  if (!no_cache) {
    const OpCounts cached_counts = measure(true, cached);
    double max_diff = 0.0;
    for (std::size_t c = 0; c < n; ++c) max_diff = std::max(max_diff, std::abs(cached[c] - naive[c]));
    std::cout << "record=serve_equivalence max_abs_diff=" << max_diff
              << " identical=" << (cached == naive ? "true" : "false")
              << " flops_ratio=" << static_cast<double>(cached_counts.total()) /
                                        static_cast<double>(naive_counts.total())
              << '\n';
  }
  const ServingCost sc = serving_cost(model.config(), model.schema(), loops, n);
  std::cout << "record=serve_analytic candidates=" << n << " naive_flops=" << 2 * sc.naive
            << " cached_flops=" << 2 * sc.cached << '\n';
  const auto& scores = no_cache ? naive : cached;
  for (std::size_t c = 0; c < n; ++c)
    std::cout << "record=score candidate=" << c << " value=" << scores[c] << '\n';
  return 0;
}

int cmd_cost(const std::string& config_path, std::size_t loops, std::size_t candidates) {
  require(candidates >= 1, "--candidates must be >= 1");
  const RunConfig rc = load_run_config(config_path);
  write_cost_report(cost_report(rc.model, rc.schema, loops, candidates), std::cout);

  // Machine-relative latency of a fixed-batch forward at the final depth.
  constexpr std::size_t kBatch = 64;
  Model model(rc.model, rc.schema);
  const Dataset ds = generate_dataset(rc.schema, kBatch, rc.model.seed);
  ForwardOptions fo;
  fo.all_depths = false;
  ag::NoGradGuard no_grad;
  op_counter::reset();
  const auto t0 = Clock::now();
  forward_samples(model, ds.samples, loops, fo);
  const double secs = seconds_since(t0);
  const OpCounts counts = op_counter::snapshot();
  std::cout << "record=measured batch=" << kBatch
            << " flops_per_sample=" << 2 * counts.total() / kBatch
            << " instantiated_params=" << model.parameter_count()
            << " latency_ms=" << secs * 1e3 << " clock=machine_relative\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop-scaled CTR model toolkit"};
  app.require_subcommand(1);

  std::string schema, out, config, data, ckpt, train_list, infer_list;
  std::size_t n = 0, loops = 0, candidates = 1;
  std::uint64_t seed = 0;
  bool oracle = false, diagnostics = false, no_cache = false;

  auto* gen = app.add_subcommand("gen", "Synthesize a dataset");
  gen->add_option("--schema", schema)->required();
  gen->add_option("--n", n)->required();
  gen->add_option("--seed", seed)->required();
  gen->add_option("--out", out)->required();

  auto* tr = app.add_subcommand("train", "Train and write a checkpoint");
  tr->add_option("--config", config)->required();
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint at every depth");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--loops", loops)->required();
  ev->add_flag("--oracle", oracle);
  ev->add_flag("--diagnostics", diagnostics);

  auto* sw = app.add_subcommand("sweep", "Train/inference loop sweep table");
  sw->add_option("--config", config)->required();
  sw->add_option("--data", data)->required();
  sw->add_option("--train-loops", train_list)->required();
  sw->add_option("--infer-loops", infer_list)->required();

  auto* sv = app.add_subcommand("serve-sim", "Cached vs naive candidate scoring");
  sv->add_option("--ckpt", ckpt)->required();
  sv->add_option("--data", data)->required();
  sv->add_option("--candidates", candidates)->required();
  sv->add_flag("--no-cache", no_cache);

  auto* co = app.add_subcommand("cost", "Analytic parameter and FLOPs report");
  co->add_option("--config", config)->required();
  co->add_option("--loops", loops)->required();
  co->add_option("--candidates", candidates);

  CLI11_PARSE(app, argc, argv);
  std::cout.precision(17);

  try {
    if (*gen) return cmd_gen(schema, n, seed, out);
    if (*tr) return cmd_train(config, data, out);
    if (*ev) return cmd_eval(ckpt, data, loops, oracle, diagnostics);
    if (*sw) return cmd_sweep(config, data, train_list, infer_list);
    if (*sv) return cmd_serve(ckpt, data, candidates, no_cache);
    if (*co) return cmd_cost(config, loops, candidates);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
