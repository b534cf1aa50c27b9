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

#include "loopctr/ops.h"

#include <algorithm>
#include <cmath>

#include "loopctr/errors.h"
#include "loopctr/kernels.h"
#include "loopctr/op_counter.h"

namespace loopctr::ag {
namespace {

Tensor& parent_grad(Node& self, std::size_t i) {
  return self.parents[i]->grad_buffer();
}

bool parent_needs(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.rank() == 2 && bv.rank() == 2, "matmul expects rank-2 tensors");
  require(av.dim(1) == bv.dim(0), "matmul inner extents differ: " +
                                      shape_string(av.shape()) + " x " +
                                      shape_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), p = bv.dim(1);
  Tensor out({m, p});
  kernel::matmul_counted(av.data(), bv.data(), out.data(), m, k, p);
  check_finite(out, "matmul");
  return make_result(std::move(out), {a, b}, [m, k, p](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& a_val = self.parents[0]->value;
    const Tensor& b_val = self.parents[1]->value;
    if (parent_needs(self, 0)) {
      kernel::matmul_a_bt_accumulate(g.data(), b_val.data(),
                                     parent_grad(self, 0).data(), m, p, k);
    }
    if (parent_needs(self, 1)) {
      kernel::matmul_at_b_accumulate(a_val.data(), g.data(),
                                     parent_grad(self, 1).data(), m, k, p);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  check_finite(out, "add");
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!parent_needs(self, p)) continue;
      Tensor& pg = parent_grad(self, p);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  check_finite(out, "sub");
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (parent_needs(self, 0)) {
      Tensor& pg = parent_grad(self, 0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& pg = parent_grad(self, 1);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  check_finite(out, "mul");
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (parent_needs(self, 0)) {
      Tensor& pg = parent_grad(self, 0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * bv[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& pg = parent_grad(self, 1);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  check_finite(out, "scale");
  return make_result(std::move(out), {a}, [factor](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * factor;
  });
}

Var scale_by(const Var& a, const Var& s) {
  require(s.value().size() == 1, "scale_by: factor must hold one element");
  const double factor = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  check_finite(out, "scale_by");
  return make_result(std::move(out), {a, s}, [](Node& self) {
    const Tensor& av = self.parents[0]->value;
    const double f = self.parents[1]->value[0];
    if (parent_needs(self, 0)) {
      Tensor& pg = parent_grad(self, 0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * f;
    }
    if (parent_needs(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      parent_grad(self, 1)[0] += acc;
    }
  });
}

Var add_row(const Var& a, const Var& b) {
  const std::size_t cols = a.cols();
  require(b.value().size() == cols, "add_row: bias length " +
                                        std::to_string(b.value().size()) +
                                        " != cols " + std::to_string(cols));
  Tensor out = a.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) += b.value()[c];
  check_finite(out, "add_row");
  return make_result(std::move(out), {a, b}, [rows, cols](Node& self) {
    if (parent_needs(self, 0)) {
      Tensor& pg = parent_grad(self, 0);
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
    }
    if (parent_needs(self, 1)) {
      Tensor& pg = parent_grad(self, 1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) pg[c] += self.grad[r * cols + c];
    }
  });
}

Var tanh(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  check_finite(out, "tanh");
  return make_result(out, {a}, [out](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < pg.size(); ++i)
      pg[i] += self.grad[i] * (1.0 - out[i] * out[i]);
  });
}

Var gelu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = kernel::gelu(v);
  check_finite(out, "gelu");
  return make_result(std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * kernel::gelu_derivative(x[i]);
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.data()) {
    v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  check_finite(out, "sigmoid");
  return make_result(out, {a}, [out](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < pg.size(); ++i)
      pg[i] += self.grad[i] * out[i] * (1.0 - out[i]);
  });
}

Var rmsnorm_rows(const Var& a, double epsilon) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape());
  std::vector<double> inv(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    inv[r] = kernel::rms_inverse(x.row(r), epsilon);
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r, c) * inv[r];
  }
  op_counter::add_macs(static_cast<std::uint64_t>(rows) * cols);
  check_finite(out, "rmsnorm");
  return make_result(std::move(out), {a}, [inv = std::move(inv), rows, cols](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    Tensor& pg = parent_grad(self, 0);
    const double dn = static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += xv(r, c) * self.grad(r, c);
      const double s = inv[r], s3 = s * s * s;
      for (std::size_t c = 0; c < cols; ++c)
        pg(r, c) += s * self.grad(r, c) - s3 * xv(r, c) * dot / dn;
    }
  });
}

Var softmax_rows(const Var& a) {
  Tensor out = a.value();
  const std::size_t rows = out.rows();
  for (std::size_t r = 0; r < rows; ++r) kernel::softmax_inplace(out.row(r));
  check_finite(out, "softmax_rows");
  return make_result(out, {a}, [out](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t r = 0; r < out.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < out.cols(); ++c) dot += out(r, c) * self.grad(r, c);
      for (std::size_t c = 0; c < out.cols(); ++c)
        pg(r, c) += out(r, c) * (self.grad(r, c) - dot);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, [](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
  });
}

Var gather_rows(const Var& a, std::vector<std::int64_t> index) {
  const Tensor& src = a.value();
  const std::size_t cols = src.cols();
  const auto src_rows = static_cast<std::int64_t>(src.rows());
  require(!index.empty(), "gather_rows: empty index");
  Tensor out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::int64_t r = index[i];
    require(r >= -1 && r < src_rows, "gather_rows: row index out of range");
    if (r < 0) continue;
    auto from = src.row(static_cast<std::size_t>(r));
    std::copy(from.begin(), from.end(), out.row(i).begin());
  }
  return make_result(std::move(out), {a}, [index = std::move(index), cols](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] < 0) continue;
      auto dst = pg.row(static_cast<std::size_t>(index[i]));
      auto g = self.grad.row(i);
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->value.size();
      if (parent_needs(self, p)) {
        Tensor& pg = parent_grad(self, p);
        for (std::size_t i = 0; i < n; ++i) pg[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_result(Tensor::scalar(s), {a}, [](Node& self) {
    Tensor& pg = parent_grad(self, 0);
    const double g = self.grad[0];
    for (double& v : pg.data()) v += g;
  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var bce(const Var& pred, std::span<const double> labels) {
  const Tensor& p = pred.value();
  require(p.size() == labels.size(), "bce: prediction/label length mismatch");
  require(!labels.empty(), "bce: empty input");
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double q = std::clamp(p[i], kProbClamp, 1.0 - kProbClamp);
    total -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  std::vector<double> y(labels.begin(), labels.end());
  return make_result(Tensor::scalar(total / n), {pred}, [y = std::move(y), n](Node& self) {
    const Tensor& pv = self.parents[0]->value;
    Tensor& pg = parent_grad(self, 0);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double q = pv[i];
      if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
      pg[i] += g * -(y[i] / q - (1.0 - y[i]) / (1.0 - q)) / n;
    }
  });
}

}  // namespace loopctr::ag
