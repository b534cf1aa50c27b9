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

#include "loopctr/report.h"

#include <charconv>
#include <cstdio>
#include <ostream>

#include "loopctr/autograd.h"
#include "loopctr/errors.h"
#include "loopctr/losses.h"
#include "loopctr/metrics.h"
#include "loopctr/oracle.h"

namespace loopctr {
namespace {

template <typename Fn>
std::optional<double> defined_or_null(Fn&& fn) {
  try {
    return fn();
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fixed(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

}  // namespace

std::string format_metric(std::optional<double> v) { return v ? fmt(*v) : "undefined"; }

EvalReport evaluate_scores(const std::vector<std::vector<double>>& per_depth_scores,
                           std::span<const Sample> samples, bool with_oracle) {
  require(!per_depth_scores.empty(), "evaluate_scores: no depths");
  std::vector<double> labels(samples.size());
  std::vector<std::uint32_t> users(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    labels[s] = samples[s].label;
    users[s] = samples[s].user_id;
  }
  EvalReport r;
  r.loops = per_depth_scores.size() - 1;
  r.samples = samples.size();
  for (std::size_t l = 0; l < per_depth_scores.size(); ++l) {
    const auto& scores = per_depth_scores[l];
    require(scores.size() == samples.size(), "evaluate_scores: score count mismatch");
    DepthMetrics m;
    m.depth = l;
    m.auc = defined_or_null([&] { return auc(scores, labels); });
    m.gauc = defined_or_null([&] { return gauc(scores, labels, users); });
    m.ne = defined_or_null([&] { return ne(scores, labels); });
    m.logloss = bce(scores, labels);
    r.depths.push_back(m);
  }
  if (with_oracle) {
    const OracleSelection sel = oracle_select(per_depth_scores, labels);
    OracleMetrics o;
    o.auc = defined_or_null([&] { return auc(sel.score, labels); });
    o.gauc = defined_or_null([&] { return gauc(sel.score, labels, users); });
    o.ne = defined_or_null([&] { return ne(sel.score, labels); });
    o.logloss = bce(sel.score, labels);
    o.histogram = sel.histogram;
    r.oracle = std::move(o);
  }
  return r;
}

EvalReport evaluate(const Model& model, std::span<const Sample> samples, std::size_t loops,
                    const EvalOptions& options) {
  require(!samples.empty(), "evaluate: no samples");
  require(options.batch_size >= 1, "evaluate: batch_size must be >= 1");
  ag::NoGradGuard no_grad;
  std::vector<std::vector<double>> scores(loops + 1);
  SimilarityAccumulator similarity;
  RoutingAccumulator routing(model.config().experts);
  HcrAccumulator hcr;
  ForwardOptions fw;
  fw.capture_hcr = options.diagnostics && model.config().residual == ResidualMode::kHcr;
  for (std::size_t start = 0; start < samples.size(); start += options.batch_size) {
    const std::size_t n = std::min(options.batch_size, samples.size() - start);
    const LoopTrace trace = forward_samples(model, samples.subspan(start, n), loops, fw);
    for (std::size_t l = 0; l <= loops; ++l) {
      const auto p = trace.predictions(l);
      scores[l].insert(scores[l].end(), p.begin(), p.end());
    }
    if (options.diagnostics) {
      similarity.add(trace);
      routing.add(trace);
      hcr.add(trace);
    }
  }
  EvalReport r = evaluate_scores(scores, samples, options.oracle);
  if (options.diagnostics) {
    r.cosine = similarity.result();
    r.routing = routing.result();
    r.hcr = hcr.result();
  }
  return r;
}

void write_report(const EvalReport& r, std::ostream& out) {
  out << "record=summary loops=" << r.loops << " samples=" << r.samples << '\n';
  for (const auto& m : r.depths) {
    out << "record=depth i=" << m.depth << " auc=" << format_metric(m.auc)
        << " gauc=" << format_metric(m.gauc) << " ne=" << format_metric(m.ne)
        << " logloss=" << fmt(m.logloss) << '\n';
  }
  if (r.oracle) {
    const OracleMetrics& o = *r.oracle;
    out << "record=oracle auc=" << format_metric(o.auc) << " gauc=" << format_metric(o.gauc)
        << " ne=" << format_metric(o.ne) << " logloss=" << fmt(o.logloss) << '\n';
    for (std::size_t l = 0; l < o.histogram.size(); ++l)
      out << "record=oracle_hist depth=" << l << " frac=" << fmt(o.histogram[l]) << '\n';
  }
  for (std::size_t l = 0; l < r.cosine.size(); ++l)
    out << "record=cosine pair=" << l << '-' << l + 1 << " value=" << format_metric(r.cosine[l]) << '\n';
  for (const auto& s : r.routing) {
    out << "record=routing depth=" << s.depth << " site=" << s.site << " f=";
    for (std::size_t e = 0; e < s.usage.size(); ++e) out << (e ? "," : "") << fmt(s.usage[e]);
    out << '\n';
  }
  for (const auto& h : r.hcr) {
    out << "record=hcr block=" << h.block << " depth=" << h.depth << " sublayer=" << h.sublayer
        << " coeff=" << h.coeff << " mean=" << fmt(h.mean) << " p30=" << fmt(h.p30)
        << " p70=" << fmt(h.p70) << '\n';
  }
}

void write_table(const EvalReport& r, std::ostream& out) {
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %9s\n", "depth", "AUC", "GAUC", "NE", "logloss");
  out << line;
  for (const auto& m : r.depths) {
    std::snprintf(line, sizeof line, "%-8zu %8s %8s %8s %9.5f\n", m.depth, fixed(m.auc).c_str(),
                  fixed(m.gauc).c_str(), fixed(m.ne).c_str(), m.logloss);
    out << line;
  }
  if (r.oracle) {
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %9.5f\n", "oracle", fixed(r.oracle->auc).c_str(),
                  fixed(r.oracle->gauc).c_str(), fixed(r.oracle->ne).c_str(), r.oracle->logloss);
    out << line;
  }
}

}  // namespace loopctr
