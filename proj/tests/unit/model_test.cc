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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "loopctr/attention.h"
#include "loopctr/errors.h"
#include "loopctr/grad_check.h"
#include "loopctr/model.h"
#include "loopctr/op_counter.h"
#include "test_support.h"

namespace loopctr {
namespace {

using testing::uniform_tensor;

Model tiny_model(std::size_t train_loops = 1) {
  ModelConfig c = testing::tiny_config();
  c.train_loops = train_loops;
  return Model(c, testing::tiny_schema());
}

// Rows [b*rows_per, b*rows_per + count) of a depth output.
std::vector<double> rows_of(const ag::Var& v, std::size_t first, std::size_t count) {
  std::vector<double> out;
  for (std::size_t r = first; r < first + count; ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out.push_back(v.value()(r, c));
  return out;
}

std::vector<std::vector<std::uint32_t>> candidate_ids(const FeatureSchema& s, std::size_t n,
                                                      std::uint64_t seed) {
  const auto pool = generate_dataset(s, std::max<std::size_t>(n, 2), seed).samples;
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[i].global_ids);
  return out;
}

TEST(PrefixMask, TwoSequentialOneGlobal) {
  const PrefixMask m = build_prefix_mask({0, 1}, {2}, {1, 1, 1});
  EXPECT_EQ(m.matrix, Tensor::matrix(3, 3, {1, 1, 0, 1, 1, 0, 1, 1, 1}));
}

TEST(PrefixMask, NoGlobalTokensIsFullyVisible) {
  const PrefixMask m = build_prefix_mask({0, 1, 2}, {}, {1, 1, 1});
  EXPECT_EQ(m.matrix, Tensor::matrix(3, 3, {1, 1, 1, 1, 1, 1, 1, 1, 1}));
}

TEST(PrefixMask, PadKeysHiddenExceptOwnDiagonal) {
  const PrefixMask m = build_prefix_mask({0, 1}, {2}, {1, 0, 1});
  EXPECT_FALSE(m.allowed(0, 1));
  EXPECT_FALSE(m.allowed(2, 1));
  EXPECT_TRUE(m.allowed(1, 1));
  EXPECT_TRUE(m.allowed(1, 0));
}

// Property: for random role splits, no sequential query ever sees a global
// key and every global query sees every valid key.
TEST(PrefixMaskProperty, SequentialNeverSeesGlobal) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = testing::uniform_size(rng, 1, 12);
    std::vector<std::size_t> idx(t);
    for (std::size_t i = 0; i < t; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t ns = testing::uniform_size(rng, 0, t);
    const std::vector<std::size_t> seq(idx.begin(), idx.begin() + ns), glb(idx.begin() + ns, idx.end());
    std::vector<std::uint8_t> valid(t);
    for (auto& v : valid) v = testing::uniform_size(rng, 0, 3) != 0;
    const PrefixMask m = build_prefix_mask(seq, glb, valid);
    for (std::size_t q : seq)
      for (std::size_t k : glb) ASSERT_FALSE(m.allowed(q, k));
    for (std::size_t q : glb)
      for (std::size_t k = 0; k < t; ++k)
        if (valid[k]) ASSERT_TRUE(m.allowed(q, k));
  }
}

TEST(Entry, GroupsDoNotMixAtDepthZero) {
  const Model m = tiny_model();
  const auto samples = testing::tiny_samples(2, 3);
  Sample other = samples[0];
  std::reverse(other.long_seq.begin(), other.long_seq.end());
  other.long_seq.push_back(1);
  other.long_seq.erase(other.long_seq.begin());
  const std::vector<Sample> a{samples[0]}, b{other};
  const LoopTrace ta = forward_samples(m, a, 1), tb = forward_samples(m, b, 1);
  const std::size_t short_len = m.schema().short_len;
  EXPECT_EQ(rows_of(ta.depths[0].seq, 0, short_len), rows_of(tb.depths[0].seq, 0, short_len));
  EXPECT_NE(rows_of(ta.depths[0].seq, short_len, 2), rows_of(tb.depths[0].seq, short_len, 2));
  // The loop block mixes the groups.
  EXPECT_NE(rows_of(ta.depths[1].seq, 0, short_len), rows_of(tb.depths[1].seq, 0, short_len));
}

TEST(Entry, GroupProjectionsDistinguishIdenticalTokens) {
  const Model m = tiny_model();
  const auto samples = testing::tiny_samples(2, 4);
  TokenCollection tc = embed_sample(samples[0], m.tables);
  std::mt19937_64 rng(5);
  const Tensor same = uniform_tensor({1, m.config().d}, rng);
  tc.groups[2].tokens = ag::Var::constant(same);  // user
  tc.groups[4].tokens = ag::Var::constant(same);  // category
  const LoopTrace t = model_forward(m, tc, 0);
  EXPECT_NE(rows_of(t.depths[0].glb, 0, 1), rows_of(t.depths[0].glb, 2, 1));
}

TEST(Loop, GlobalTokensNeverLeakIntoSequentialStates) {
  const Model m = tiny_model(3);
  const auto samples = testing::tiny_samples(2, 6);
  Sample other = samples[0];
  other.global_ids = samples[1].global_ids;
  const std::vector<Sample> a{samples[0]}, b{other};
  const LoopTrace ta = forward_samples(m, a, 3), tb = forward_samples(m, b, 3);
  ASSERT_EQ(ta.depths.size(), 4u);
  for (std::size_t l = 0; l <= 3; ++l) {
    EXPECT_EQ(ta.depths[l].seq.value(), tb.depths[l].seq.value()) << "depth " << l;
    EXPECT_NE(ta.depths[l].glb.value(), tb.depths[l].glb.value()) << "depth " << l;
  }
}

TEST(Model, ParameterCountIndependentOfTrainLoops) {
  EXPECT_EQ(tiny_model(1).parameter_count(), tiny_model(4).parameter_count());
  EXPECT_EQ(tiny_model(1).loop_parameter_count(), tiny_model(4).loop_parameter_count());
}

TEST(Model, StackedLoopParametersScaleWithLayers) {
  ModelConfig c = testing::tiny_config();
  c.train_loops = 3;
  const std::size_t shared = Model(c, testing::tiny_schema()).loop_parameter_count();
  c.weight_sharing = false;
  const Model stacked(c, testing::tiny_schema());
  EXPECT_EQ(stacked.loop.size(), 3u);
  EXPECT_EQ(stacked.loop_parameter_count(), 3 * shared);
  EXPECT_EQ(stacked.parameter_count(), tiny_model(3).parameter_count() + 2 * shared);
}

TEST(Model, StackedModelCannotRunPastItsLayers) {
  ModelConfig c = testing::tiny_config();
  c.train_loops = 2;
  c.weight_sharing = false;
  const Model m(c, testing::tiny_schema());
  const auto samples = testing::tiny_samples(2, 7);
  EXPECT_NO_THROW(forward_samples(m, samples, 2));
  EXPECT_THROW(forward_samples(m, samples, 3), ContractViolation);
}

TEST(Model, SharedWeightsExtrapolatePastTrainLoops) {
  const Model m = tiny_model(1);
  const auto samples = testing::tiny_samples(4, 8);
  const LoopTrace t = forward_samples(m, samples, 5);
  ASSERT_EQ(t.depths.size(), 6u);
  for (double p : t.predictions(5)) EXPECT_TRUE(std::isfinite(p));
}

TEST(Trace, ZeroLoopsRunsNoLoopBlock) {
  const Model m = tiny_model(3);
  const auto samples = testing::tiny_samples(3, 9);
  op_counter::reset();
  const LoopTrace t0 = forward_samples(m, samples, 0);
  EXPECT_EQ(op_counter::snapshot().component(Component::kLoop), 0u);
  EXPECT_EQ(t0.depths.size(), 1u);
  EXPECT_EQ(t0.predictions(0).size(), 3u);
  op_counter::reset();
  const LoopTrace t3 = forward_samples(m, samples, 3);
  EXPECT_GT(op_counter::snapshot().component(Component::kLoop), 0u);
  ASSERT_EQ(t3.depths.size(), 4u);
  for (std::size_t l = 0; l <= 3; ++l) EXPECT_EQ(t3.depths[l].depth, l);
  // Depth 0 does not depend on how many loops follow it.
  EXPECT_EQ(t3.predictions(0), t0.predictions(0));
}

TEST(Trace, FinalDepthOnly) {
  const Model m = tiny_model(2);
  const auto samples = testing::tiny_samples(3, 9);
  ForwardOptions opts;
  opts.all_depths = false;
  const LoopTrace t = forward_samples(m, samples, 2, opts);
  ASSERT_EQ(t.depths.size(), 1u);
  EXPECT_EQ(t.depths[0].depth, 2u);
  EXPECT_EQ(t.predictions(0), forward_samples(m, samples, 2).predictions(2));
}

// Property over random seeds and loop counts: predictions lie in (0, 1).
TEST(ModelProperty, PredictionsAreProbabilities) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 8; ++trial) {
    ModelConfig c = testing::tiny_config();
    c.seed = rng();
    c.embed_init_std = 2.0;
    const Model m(c, testing::tiny_schema());
    const auto samples = testing::tiny_samples(testing::uniform_size(rng, 2, 6), rng());
    const LoopTrace t = forward_samples(m, samples, testing::uniform_size(rng, 0, 3));
    for (const auto& depth : t.depths)
      for (std::size_t b = 0; b < t.batch; ++b) {
        const double p = depth.pred.value()(b, 0);
        ASSERT_GT(p, 0.0);
        ASSERT_LT(p, 1.0);
      }
  }
}

TEST(Model, NoValidSequentialTokensSkipsCrossAttention) {
  ModelConfig c = testing::tiny_config();
  c.long_seq = false;
  Model m(c, testing::tiny_schema());
  Sample x = testing::tiny_samples(2, 11).front();
  x.short_seq.clear();
  const std::vector<Sample> one{x};
  const double before = forward_samples(m, one, 1).predictions(1)[0];
  EXPECT_TRUE(std::isfinite(before));
  for (auto& e : m.exit.output_experts)
    for (double& v : e.mutable_value().data()) v *= 3.0;
  EXPECT_EQ(forward_samples(m, one, 1).predictions(1)[0], before);
}

TEST(Model, ShortSequenceOrderDoesNotMatterWithoutPositions) {
  const Model m = tiny_model(2);
  Sample x = testing::tiny_samples(2, 12).front();
  x.short_seq = {3, 7, 11};
  Sample y = x;
  y.short_seq = {11, 3, 7};
  const std::vector<Sample> a{x}, b{y};
  const auto pa = forward_samples(m, a, 2).predictions(2), pb = forward_samples(m, b, 2).predictions(2);
  EXPECT_NEAR(pa[0], pb[0], 1e-12);
}

TEST(Model, HcrAtInitMatchesPreNorm) {
  ModelConfig c = testing::tiny_config();
  c.train_loops = 2;
  const Model hcr_model(c, testing::tiny_schema());
  c.residual = ResidualMode::kPreNorm;
  const Model plain(c, testing::tiny_schema());
  const auto samples = testing::tiny_samples(6, 13);
  const auto a = forward_samples(hcr_model, samples, 2).predictions(2);
  const auto b = forward_samples(plain, samples, 2).predictions(2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(std::abs(a[i] - b[i]), 1e-6);
}

TEST(Model, SameSeedSameModelSamePredictions) {
  const Model a = tiny_model(2), b = tiny_model(2);
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].first, pb[i].first);
    EXPECT_EQ(pa[i].second.value(), pb[i].second.value()) << pa[i].first;
  }
  const auto samples = testing::tiny_samples(5, 14);
  EXPECT_EQ(forward_samples(a, samples, 2).predictions(2), forward_samples(b, samples, 2).predictions(2));
}

TEST(KvCache, MatchesNaiveScoringExactly) {
  const Model m = tiny_model(2);
  const Sample request = testing::tiny_samples(2, 15).front();
  const auto cands = candidate_ids(m.schema(), 8, 16);
  EXPECT_EQ(score_candidates_cached(m, request, cands, 2),
            score_candidates_naive(m, request, cands, 2));
}

TEST(KvCache, UserSideCostIndependentOfCandidates) {
  const Model m = tiny_model(2);
  const Sample request = testing::tiny_samples(2, 15).front();
  auto user_macs = [&](std::size_t n) {
    const auto cands = candidate_ids(m.schema(), n, 17);
    op_counter::reset();
    score_candidates_cached(m, request, cands, 2);
    return op_counter::snapshot();
  };
  const OpCounts one = user_macs(1), eight = user_macs(8);
  EXPECT_EQ(one.side(Side::kUser), eight.side(Side::kUser));
  EXPECT_EQ(eight.side(Side::kItem), 8 * one.side(Side::kItem));
}

TEST(KvCache, SingleCandidateCostsOneForward) {
  const Model m = tiny_model(2);
  const Sample request = testing::tiny_samples(2, 18).front();
  const auto cands = candidate_ids(m.schema(), 1, 19);
  op_counter::reset();
  score_candidates_cached(m, request, cands, 2);
  const std::uint64_t cached = op_counter::snapshot().total();
  op_counter::reset();
  score_candidates_naive(m, request, cands, 2);
  EXPECT_EQ(cached, op_counter::snapshot().total());
}

TEST(Attention, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(20);
  auto q = ag::Var::parameter(uniform_tensor({6, 4}, rng));
  auto k = ag::Var::parameter(uniform_tensor({8, 4}, rng));
  auto v = ag::Var::parameter(uniform_tensor({8, 4}, rng));
  auto pattern = std::make_shared<const AttentionPattern>(
      2, 3, 4, [](std::size_t b, std::size_t i, std::size_t j) { return (i + j + b) % 3 != 0; });
  EXPECT_LT(grad_check_parameters(
                [&] { return testing::random_projection(attention(q, k, v, pattern, 2), 21); },
                {q, k, v}, 1e-6),
            1e-5);
}

TEST(Model, AllParametersPassGradientCheck) {
  const Model m = tiny_model(2);
  const auto samples = testing::tiny_samples(3, 22);
  const double err = grad_check_parameters(
      [&] {
        const LoopTrace t = forward_samples(m, samples, 2);
        ag::Var total = t.depths[0].pred;
        for (std::size_t l = 1; l < t.depths.size(); ++l) total = ag::add(total, t.depths[l].pred);
        return testing::random_projection(total, 23);
      },
      m.parameters(), 1e-6);
  EXPECT_LT(err, 1e-4);
}

}  // namespace
}  // namespace loopctr
