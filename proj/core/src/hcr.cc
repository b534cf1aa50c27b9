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

#include "loopctr/hcr.h"

#include "loopctr/errors.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"
#include "loopctr/ops.h"

namespace loopctr::hcr {

std::vector<ag::Var> Params::parameters() const {
  return {static_mix, static_residual, static_out, proj_mix,
          proj_residual, proj_out, scale_alpha, scale_beta};
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

Params init(std::size_t streams, std::size_t sublayer, std::size_t width,
            double gate_scale) {
  require(streams >= 1 && width >= 1, "hcr::init needs n >= 1 and d >= 1");
  Params p;
  p.streams = streams;
  p.sublayer = sublayer;
  p.width = width;
  Tensor mix({streams});
  mix[sublayer % streams] = 1.0;
  Tensor residual({streams, streams});
  for (std::size_t i = 0; i < streams; ++i) residual(i, i) = 1.0;
  p.static_mix = ag::Var::parameter(std::move(mix));
  p.static_residual = ag::Var::parameter(std::move(residual));
  p.static_out = ag::Var::parameter(Tensor({streams}, 1.0));
  p.proj_mix = ag::Var::parameter(Tensor({width, 1}));
  p.proj_residual = ag::Var::parameter(Tensor({width, streams}));
  p.proj_out = ag::Var::parameter(Tensor({width, 1}));
  p.scale_alpha = ag::Var::parameter(Tensor::scalar(gate_scale));
  p.scale_beta = ag::Var::parameter(Tensor::scalar(gate_scale));
  return p;
}

Coefficients coefficients(const ag::Var& state, const Params& params) {
  const std::size_t n = params.streams;
  require(state.cols() == params.width, "hcr::coefficients: width mismatch");
  require(state.rows() % n == 0, "hcr::coefficients: rows not a multiple of n");
  const std::size_t tokens = state.rows() / n;

  const ag::Var normed = ag::rmsnorm_rows(state, kRmsNormEpsilon);
  auto gated = [&](const ag::Var& proj, const ag::Var& scale, std::size_t cols) {
    ag::Var dyn = ag::reshape(ag::matmul(normed, proj), {tokens, cols});
    return ag::scale_by(ag::tanh(dyn), scale);
  };
  Coefficients c;
  c.mix = ag::add_row(gated(params.proj_mix, params.scale_alpha, n), params.static_mix);
  c.residual = ag::add_row(gated(params.proj_residual, params.scale_alpha, n * n),
                           params.static_residual);
  c.out = ag::add_row(gated(params.proj_out, params.scale_beta, n), params.static_out);
  return c;
}

ag::Var mix_in(const ag::Var& state, const ag::Var& mix, std::size_t streams) {
  const std::size_t n = streams;
  const std::size_t d = state.cols();
  const std::size_t tokens = state.rows() / n;
  require(mix.rows() == tokens && mix.cols() == n, "hcr::mix_in: coefficient shape");
  const Tensor& h = state.value();
  const Tensor& m = mix.value();
  Tensor out({tokens, d});
  for (std::size_t r = 0; r < tokens; ++r) {
    auto dst = out.row(r);
    for (std::size_t s = 0; s < n; ++s) {
      const double w = m(r, s);
      auto src = h.row(r * n + s);
      for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
    }
  }
  op_counter::add_macs(static_cast<std::uint64_t>(tokens) * n * d);
  check_finite(out, "hcr::mix_in");
  return ag::make_result(std::move(out), {state, mix}, [n, d, tokens](ag::Node& self) {
    const Tensor& h = self.parents[0]->value;
    const Tensor& m = self.parents[1]->value;
    const Tensor& g = self.grad;
    if (self.parents[0]->requires_grad) {
      Tensor& gh = self.parents[0]->grad_buffer();
      for (std::size_t r = 0; r < tokens; ++r)
        for (std::size_t s = 0; s < n; ++s)
          {
            const double w = m(r, s);
            auto dst = gh.row(r * n + s);
            auto gr = g.row(r);
            for (std::size_t c = 0; c < d; ++c) dst[c] += w * gr[c];
          }
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gm = self.parents[1]->grad_buffer();
      for (std::size_t r = 0; r < tokens; ++r)
        for (std::size_t s = 0; s < n; ++s) {
          gm(r, s) += kernel::dot(h.row(r * n + s).data(), g.row(r).data(), d);
        }
    }
  });
}

ag::Var combine(const ag::Var& state, const ag::Var& residual, const ag::Var& out,
                const ag::Var& layer_out, std::size_t streams) {
  const std::size_t n = streams;
  const std::size_t d = state.cols();
  const std::size_t tokens = state.rows() / n;
  require(residual.rows() == tokens && residual.cols() == n * n,
          "hcr::combine: residual coefficient shape");
  require(out.rows() == tokens && out.cols() == n, "hcr::combine: output coefficient shape");
  require(layer_out.rows() == tokens && layer_out.cols() == d,
          "hcr::combine: sub-layer output shape");
  const Tensor& h = state.value();
  const Tensor& ar = residual.value();
  const Tensor& b = out.value();
  const Tensor& y = layer_out.value();
  Tensor res({tokens * n, d});
  for (std::size_t r = 0; r < tokens; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      auto dst = res.row(r * n + j);
      for (std::size_t i = 0; i < n; ++i) {
        const double w = ar(r, i * n + j);
        auto src = h.row(r * n + i);
        for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
      }
      const double bj = b(r, j);
      auto yr = y.row(r);
      for (std::size_t c = 0; c < d; ++c) dst[c] += bj * yr[c];
    }
  }
  op_counter::add_macs(static_cast<std::uint64_t>(tokens) * (n * n * d + n * d));
  check_finite(res, "hcr::combine");
  return ag::make_result(std::move(res), {state, residual, out, layer_out},
      [n, d, tokens](ag::Node& self) {
        const Tensor& h = self.parents[0]->value;
        const Tensor& ar = self.parents[1]->value;
        const Tensor& b = self.parents[2]->value;
        const Tensor& y = self.parents[3]->value;
        const Tensor& g = self.grad;
        Tensor* gh = self.parents[0]->requires_grad ? &self.parents[0]->grad_buffer() : nullptr;
        Tensor* gar = self.parents[1]->requires_grad ? &self.parents[1]->grad_buffer() : nullptr;
        Tensor* gb = self.parents[2]->requires_grad ? &self.parents[2]->grad_buffer() : nullptr;
        Tensor* gy = self.parents[3]->requires_grad ? &self.parents[3]->grad_buffer() : nullptr;
        for (std::size_t r = 0; r < tokens; ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            auto gj = g.row(r * n + j);
            for (std::size_t i = 0; i < n; ++i) {
              auto hi = h.row(r * n + i);
              if (gh) {
                const double w = ar(r, i * n + j);
                auto dst = gh->row(r * n + i);
                for (std::size_t c = 0; c < d; ++c) dst[c] += w * gj[c];
              }
              if (gar) {
                (*gar)(r, i * n + j) += kernel::dot(hi.data(), gj.data(), d);
              }
            }
            auto yr = y.row(r);
            if (gb) {
              (*gb)(r, j) += kernel::dot(yr.data(), gj.data(), d);
            }
            if (gy) {
              const double bj = b(r, j);
              auto dst = gy->row(r);
              for (std::size_t c = 0; c < d; ++c) dst[c] += bj * gj[c];
            }
          }
        }
      });
}

ag::Var apply(const ag::Var& state, const Params& params, const Sublayer& sublayer,
              Coefficients* coeffs_out) {
  Coefficients c = coefficients(state, params);
  const ag::Var x = mix_in(state, c.mix, params.streams);
  const ag::Var y = sublayer(x);
  ag::Var next = combine(state, c.residual, c.out, y, params.streams);
  if (coeffs_out) *coeffs_out = std::move(c);
  return next;
}

ag::Var expand(const ag::Var& hidden, std::size_t streams) {
  require(streams >= 1, "hcr::expand needs n >= 1");
  std::vector<std::int64_t> index;
  index.reserve(hidden.rows() * streams);
  for (std::size_t r = 0; r < hidden.rows(); ++r)
    for (std::size_t s = 0; s < streams; ++s) index.push_back(static_cast<std::int64_t>(r));
  return ag::gather_rows(hidden, std::move(index));
}

ag::Var collapse(const ag::Var& state, std::size_t streams, CollapseRule rule) {
  require(streams >= 1 && state.rows() % streams == 0, "hcr::collapse: bad stream count");
  const std::size_t n = streams;
  const std::size_t d = state.cols();
  const std::size_t tokens = state.rows() / n;
  const bool mean = rule == CollapseRule::kMean;
  const double factor = mean ? 1.0 / static_cast<double>(n) : 1.0;
  const Tensor& h = state.value();
  Tensor out({tokens, d});
  for (std::size_t r = 0; r < tokens; ++r) {
    auto dst = out.row(r);
    auto first = h.row(r * n);
    if (mean) {
      // Stream 0 plus the mean offset of the others: exact for identical streams.
      for (std::size_t s = 1; s < n; ++s) {
        auto src = h.row(r * n + s);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c] - first[c];
      }
      for (std::size_t c = 0; c < d; ++c) dst[c] = first[c] + dst[c] / static_cast<double>(n);
    } else {
      for (std::size_t s = 0; s < n; ++s) {
        auto src = h.row(r * n + s);
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
      }
    }
  }
  return ag::make_result(std::move(out), {state}, [n, d, tokens, factor](ag::Node& self) {
    Tensor& gh = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < tokens; ++r)
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t c = 0; c < d; ++c) gh(r * n + s, c) += factor * self.grad(r, c);
  });
}

}  // namespace loopctr::hcr
