/* Copyright 2026 The invdet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace invdet {

using detail::make_result;
using detail::Node;

namespace {

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Offsets of each output element into a and b under broadcasting.
struct BroadcastPlan {
  Shape out;
  enum class Kind { kSame, kScalarB, kScalarA, kGeneral } kind;
  std::vector<std::size_t> a_off, b_off;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.kind = BroadcastPlan::Kind::kSame;
    return plan;
  }
  if (shape_numel(b) == 1 && b.size() <= a.size()) {
    plan.out = a;
    plan.kind = BroadcastPlan::Kind::kScalarB;
    return plan;
  }
  if (shape_numel(a) == 1 && a.size() <= b.size()) {
    plan.out = b;
    plan.kind = BroadcastPlan::Kind::kScalarA;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      fail(ErrorCode::kShapeMismatch, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  // Row-major strides with zero stride on broadcast axes.
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const std::size_t n = shape_numel(plan.out);
  plan.a_off.resize(n);
  plan.b_off.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  for (std::size_t k = 0; k < n; ++k) {
    plan.a_off[k] = oa;
    plan.b_off[k] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < plan.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  plan.kind = BroadcastPlan::Kind::kGeneral;
  return plan;
}

// f(a, b) forward; da(a, b, out) and db(a, b, out) local partials.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  const std::size_t n = shape_numel(plan->out);
  std::vector<double> out(n);
  auto A = a.data();
  auto B = b.data();
  auto ia = [&plan](std::size_t k) {
    switch (plan->kind) {
      case BroadcastPlan::Kind::kSame:
      case BroadcastPlan::Kind::kScalarB:
        return k;
      case BroadcastPlan::Kind::kScalarA:
        return std::size_t{0};
      default:
        return plan->a_off[k];
    }
  };
  auto ib = [&plan](std::size_t k) {
    switch (plan->kind) {
      case BroadcastPlan::Kind::kSame:
      case BroadcastPlan::Kind::kScalarA:
        return k;
      case BroadcastPlan::Kind::kScalarB:
        return std::size_t{0};
      default:
        return plan->b_off[k];
    }
  };
  if (plan->kind == BroadcastPlan::Kind::kSame) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(A[k], B[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(A[ia(k)], B[ib(k)]);
  }
  Shape shape = plan->out;
  return make_result(std::move(shape), std::move(out), {a, b}, [plan, da, db](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const auto& g = self.grad;
    const std::size_t n = g.size();
    auto ja = [&](std::size_t k) {
      switch (plan->kind) {
        case BroadcastPlan::Kind::kSame:
        case BroadcastPlan::Kind::kScalarB:
          return k;
        case BroadcastPlan::Kind::kScalarA:
          return std::size_t{0};
        default:
          return plan->a_off[k];
      }
    };
    auto jb = [&](std::size_t k) {
      switch (plan->kind) {
        case BroadcastPlan::Kind::kSame:
        case BroadcastPlan::Kind::kScalarA:
          return k;
        case BroadcastPlan::Kind::kScalarB:
          return std::size_t{0};
        default:
          return plan->b_off[k];
      }
    };
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = ja(k), j = jb(k);
        ga[i] += g[k] * da(pa.data[i], pb.data[j], self.data[k]);
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = ja(k), j = jb(k);
        gb[j] += g[k] * db(pa.data[i], pb.data[j], self.data[k]);
      }
    }
  });
}

template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D d) {
  auto X = x.data();
  std::vector<double> out(X.size());
  for (std::size_t k = 0; k < X.size(); ++k) out[k] = f(X[k]);
  return make_result(x.shape(), std::move(out), {x}, [d](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t k = 0; k < gp.size(); ++k) {
      gp[k] += self.grad[k] * d(p.data[k], self.data[k]);
    }
  });
}

// Splits shape around axis into outer * len * inner.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  INVDET_REQUIRE(axis < shape.size(), ErrorCode::kShapeMismatch,
                 "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    INVDET_REQUIRE(v != 0.0, ErrorCode::kDomain, "div: zero divisor");
  }
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Tensor add(const Tensor& a, double b) {
  return unary_op(a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary_op(a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor maximum(const Tensor& a, double b) {
  return unary_op(
      a, [b](double x) { return x >= b ? x : b; },
      [b](double x, double) { return x >= b ? 1.0 : 0.0; });
}

Tensor operator-(const Tensor& a) { return mul(a, -1.0); }

Tensor pow(const Tensor& x, double p) {
  const bool integral = std::floor(p) == p;
  if (!integral) {
    for (double v : x.data()) {
      INVDET_REQUIRE(v >= 0.0, ErrorCode::kDomain, "pow: negative base with non-integer exponent");
    }
  }
  return unary_op(
      x, [p](double v) { return std::pow(v, p); },
      [p](double v, double) {
        if (v == 0.0 && p < 1.0) return 0.0;
        return p * std::pow(v, p - 1.0);
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    INVDET_REQUIRE(v > 0.0, ErrorCode::kDomain, "log: nonpositive argument");
  }
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return v >= lo && v <= hi ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    const double g = self.grad[0];
    for (auto& v : gp) v += g;
  });
}

Tensor mean(const Tensor& x) {
  INVDET_REQUIRE(x.numel() > 0, ErrorCode::kShapeMismatch, "mean of empty tensor");
  return mul(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  const AxisSplit s = split_axis(x.shape(), axis);
  auto X = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const double* src = X.data() + (o * s.len + l) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(reduced_shape(x.shape(), axis, keepdim), std::move(out), {x}, [s](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.len; ++l) {
        double* dst = gp.data() + (o * s.len + l) * s.inner;
        const double* g = self.grad.data() + o * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor mean(const Tensor& x, std::size_t axis, bool keepdim) {
  const std::size_t len = split_axis(x.shape(), axis).len;
  INVDET_REQUIRE(len > 0, ErrorCode::kShapeMismatch, "mean over empty axis");
  return mul(sum(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

Tensor max(const Tensor& x, std::size_t axis, bool keepdim) {
  const AxisSplit s = split_axis(x.shape(), axis);
  INVDET_REQUIRE(s.len > 0, ErrorCode::kShapeMismatch, "max over empty axis");
  auto X = x.data();
  std::vector<double> out(s.outer * s.inner);
  auto arg = std::make_shared<std::vector<std::size_t>>(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double bv = X[o * s.len * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = X[(o * s.len + l) * s.inner + i];
        if (v > bv) {
          bv = v;
          best = l;
        }
      }
      out[o * s.inner + i] = bv;
      (*arg)[o * s.inner + i] = (o * s.len + best) * s.inner + i;
    }
  }
  return make_result(reduced_shape(x.shape(), axis, keepdim), std::move(out), {x},
                     [arg](Node& self) {
                       Node& p = parent(self, 0);
                       auto& gp = p.grad_buffer();
                       for (std::size_t k = 0; k < arg->size(); ++k) {
                         gp[(*arg)[k]] += self.grad[k];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  INVDET_REQUIRE(shape_numel(shape) == x.numel(), ErrorCode::kShapeMismatch,
                 "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), x.to_vector(), {x}, [](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] += self.grad[k];
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  INVDET_REQUIRE(!parts.empty(), ErrorCode::kInvalidArgument, "concat of nothing");
  const Shape& first = parts[0].shape();
  INVDET_REQUIRE(!first.empty(), ErrorCode::kShapeMismatch, "concat of scalars");
  const Shape lead(first.begin(), first.end() - 1);
  const std::size_t rows = shape_numel(lead);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    INVDET_REQUIRE(s.size() == first.size() && std::equal(lead.begin(), lead.end(), s.begin()),
                   ErrorCode::kShapeMismatch,
                   "concat: " + shape_str(s) + " vs " + shape_str(first));
    widths.push_back(s.back());
    total += s.back();
  }
  std::vector<double> out(rows * total);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto D = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(D.data() + r * widths[p], widths[p], out.data() + r * total + col);
    }
    col += widths[p];
  }
  Shape shape = lead;
  shape.push_back(total);
  return make_result(std::move(shape), std::move(out), parts, [widths, rows, total](Node& self) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      Node& par = parent(self, p);
      if (par.requires_grad) {
        auto& gp = par.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[p]; ++c) {
            gp[r * widths[p] + c] += self.grad[r * total + col + c];
          }
        }
      }
      col += widths[p];
    }
  });
}

Tensor take_last(const Tensor& x, const std::vector<std::size_t>& index) {
  INVDET_REQUIRE(x.rank() >= 1, ErrorCode::kShapeMismatch, "take_last on scalar");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(width, 1);
  for (auto i : index) {
    INVDET_REQUIRE(i < width, ErrorCode::kShapeMismatch, "take_last: index out of range");
  }
  auto X = x.data();
  const std::size_t m = index.size();
  std::vector<double> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = X[r * width + index[j]];
  }
  Shape shape = x.shape();
  shape.back() = m;
  return make_result(std::move(shape), std::move(out), {x}, [index, rows, width](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    const std::size_t m = index.size();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < m; ++j) {
        gp[r * width + index[j]] += self.grad[r * m + j];
      }
    }
  });
}

Tensor pick(const Tensor& x, const std::vector<std::size_t>& index) {
  INVDET_REQUIRE(x.rank() == 2 && x.dim(0) == index.size(), ErrorCode::kShapeMismatch,
                 "pick: expected [B,N] with B indices, got " + shape_str(x.shape()));
  const std::size_t n = x.dim(1);
  auto X = x.data();
  std::vector<double> out(index.size());
  for (std::size_t b = 0; b < index.size(); ++b) {
    INVDET_REQUIRE(index[b] < n, ErrorCode::kShapeMismatch, "pick: index out of range");
    out[b] = X[b * n + index[b]];
  }
  return make_result({index.size()}, std::move(out), {x}, [index, n](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t b = 0; b < index.size(); ++b) {
      gp[b * n + index[b]] += self.grad[b];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  INVDET_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), ErrorCode::kShapeMismatch,
                 "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto A = a.data();
  auto B = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const double* G = self.grad.data();
    if (pa.requires_grad) {
      // dA = G B^T
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb.data.data() + p * n;
          const double* grow = G + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T G
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa.data[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          const double* grow = G + i * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t stride, pad;
  std::size_t oh, ow;
};

// Unfolds one image [C,H,W] into col[(c,ky,kx), (y,x)], zero outside.
void im2col(const double* src, const ConvGeom& g, double* col) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* img = src + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* dst = col + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* drow = dst + y * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(drow, g.ow, 0.0);
            continue;
          }
          const double* srow = img + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            drow[x] = ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)
                          ? 0.0
                          : srow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates col back into the image gradient.
void col2im_add(const double* col, const ConvGeom& g, double* dst) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* img = dst + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* src = col + ((c * g.kh + ky) * g.kw + kx) * plane;
        for (std::size_t y = 0; y < g.oh; ++y) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(y * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* irow = img + static_cast<std::size_t>(iy) * g.width;
          const double* srow = src + y * g.ow;
          for (std::size_t x = 0; x < g.ow; ++x) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              irow[static_cast<std::size_t>(ix)] += srow[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias, Conv2dParams params) {
  INVDET_REQUIRE(input.rank() == 4 && kernel.rank() == 4, ErrorCode::kShapeMismatch,
                 "conv2d expects [B,C,H,W] input and [O,C,KH,KW] kernel, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  INVDET_REQUIRE(
      input.dim(1) == kernel.dim(1), ErrorCode::kShapeMismatch,
      "conv2d channel mismatch: " + shape_str(input.shape()) + " vs " + shape_str(kernel.shape()));
  INVDET_REQUIRE(params.stride >= 1, ErrorCode::kInvalidArgument, "conv2d stride 0");
  ConvGeom g{input.dim(0),
             input.dim(1),
             input.dim(2),
             input.dim(3),
             kernel.dim(0),
             kernel.dim(2),
             kernel.dim(3),
             params.stride,
             params.padding,
             0,
             0};
  INVDET_REQUIRE(g.kh <= g.height + 2 * g.pad && g.kw <= g.width + 2 * g.pad,
                 ErrorCode::kShapeMismatch,
                 "conv2d kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  if (bias) {
    INVDET_REQUIRE(bias->rank() == 1 && bias->dim(0) == g.out_channels, ErrorCode::kShapeMismatch,
                   "conv2d bias shape");
  }
  g.oh = (g.height + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.width + 2 * g.pad - g.kw) / g.stride + 1;

  auto X = input.data();
  auto K = kernel.data();
  const std::size_t plane = g.oh * g.ow;
  const std::size_t kdim = g.channels * g.kh * g.kw;
  std::vector<double> out(g.batch * g.out_channels * plane, 0.0);
  std::vector<double> col(kdim * plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(X.data() + b * g.channels * g.height * g.width, g, col.data());
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* dst = out.data() + (b * g.out_channels + o) * plane;
      if (bias) std::fill_n(dst, plane, bias->data()[o]);
      const double* krow = K.data() + o * kdim;
      for (std::size_t k = 0; k < kdim; ++k) {
        const double w = krow[k];
        const double* crow = col.data() + k * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += w * crow[p];
      }
    }
  }

  std::vector<Tensor> parents{input, kernel};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_result({g.batch, g.out_channels, g.oh, g.ow}, std::move(out), std::move(parents),
                     [g, has_bias](Node& self) {
                       Node& pin = parent(self, 0);
                       Node& pk = parent(self, 1);
                       const std::size_t plane = g.oh * g.ow;
                       const std::size_t kdim = g.channels * g.kh * g.kw;
                       const std::size_t image = g.channels * g.height * g.width;
                       const double* G = self.grad.data();
                       if (has_bias && parent(self, 2).requires_grad) {
                         auto& gb = parent(self, 2).grad_buffer();
                         for (std::size_t b = 0; b < g.batch; ++b) {
                           for (std::size_t o = 0; o < g.out_channels; ++o) {
                             const double* gp = G + (b * g.out_channels + o) * plane;
                             double acc = 0.0;
                             for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                             gb[o] += acc;
                           }
                         }
                       }
                       double* gin = pin.requires_grad ? pin.grad_buffer().data() : nullptr;
                       double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
                       if (!gin && !gk) return;
                       std::vector<double> col(kdim * plane), gcol(kdim * plane);
                       for (std::size_t b = 0; b < g.batch; ++b) {
                         const double* gb = G + b * g.out_channels * plane;
                         if (gk) {
                           im2col(pin.data.data() + b * image, g, col.data());
                           for (std::size_t o = 0; o < g.out_channels; ++o) {
                             const double* gp = gb + o * plane;
                             for (std::size_t k = 0; k < kdim; ++k) {
                               const double* crow = col.data() + k * plane;
                               double acc = 0.0;
                               for (std::size_t p = 0; p < plane; ++p) acc += gp[p] * crow[p];
                               gk[o * kdim + k] += acc;
                             }
                           }
                         }
                         if (gin) {
                           std::fill(gcol.begin(), gcol.end(), 0.0);
                           for (std::size_t o = 0; o < g.out_channels; ++o) {
                             const double* gp = gb + o * plane;
                             const double* krow = pk.data.data() + o * kdim;
                             for (std::size_t k = 0; k < kdim; ++k) {
                               const double w = krow[k];
                               double* grow = gcol.data() + k * plane;
                               for (std::size_t p = 0; p < plane; ++p) grow[p] += w * gp[p];
                             }
                           }
                           col2im_add(gcol.data(), g, gin + b * image);
                         }
                       }
                     });
}

Tensor max_pool2d(const Tensor& input, std::size_t k) {
  INVDET_REQUIRE(input.rank() == 4, ErrorCode::kShapeMismatch,
                 "max_pool2d expects [B,C,H,W], got " + shape_str(input.shape()));
  INVDET_REQUIRE(k >= 1 && input.dim(2) >= k && input.dim(3) >= k, ErrorCode::kShapeMismatch,
                 "max_pool2d window larger than input");
  const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t oh = H / k, ow = W / k;
  auto X = input.data();
  std::vector<double> out(B * C * oh * ow);
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + (y * k) * W + x * k;
        for (std::size_t dy = 0; dy < k; ++dy) {
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = base + (y * k + dy) * W + x * k + dx;
            if (X[idx] > X[best]) best = idx;
          }
        }
        out[o] = X[best];
        (*arg)[o] = best;
      }
    }
  }
  return make_result({B, C, oh, ow}, std::move(out), {input}, [arg](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < arg->size(); ++i) gp[(*arg)[i]] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x) {
  INVDET_REQUIRE(x.rank() >= 1 && x.shape().back() > 0, ErrorCode::kShapeMismatch,
                 "softmax on empty axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto X = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = X.data() + r * n;
    double* y = out.data() + r * n;
    const double m = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (y[i] = std::exp(z[i] - m));
    for (std::size_t i = 0; i < n; ++i) y[i] /= s;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) gp[r * n + i] += y[i] * (g[i] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  INVDET_REQUIRE(x.rank() >= 1 && x.shape().back() > 0, ErrorCode::kShapeMismatch,
                 "log_softmax on empty axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto X = x.data();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = X.data() + r * n;
    double* y = out.data() + r * n;
    const double m = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - m);
    const double lse = m + std::log(s);
    for (std::size_t i = 0; i < n; ++i) y[i] = z[i] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * n;
      const double* g = self.grad.data() + r * n;
      double gs = 0.0;
      for (std::size_t i = 0; i < n; ++i) gs += g[i];
      for (std::size_t i = 0; i < n; ++i) {
        gp[r * n + i] += g[i] - std::exp(y[i]) * gs;
      }
    }
  });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& target,
                       const std::vector<double>& weight) {
  const std::size_t n = logits.numel();
  INVDET_REQUIRE(n > 0 && target.size() == n && weight.size() == n, ErrorCode::kShapeMismatch,
                 "bce_with_logits: size mismatch");
  auto O = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double o = O[i];
    const double l = std::max(o, 0.0) - o * target[i] + std::log1p(std::exp(-std::fabs(o)));
    total += weight[i] * l;
  }
  const double scale = 1.0 / static_cast<double>(n);
  return make_result({}, {total * scale}, {logits}, [target, weight, scale](Node& self) {
    Node& p = parent(self, 0);
    auto& gp = p.grad_buffer();
    const double g = self.grad[0] * scale;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double o = p.data[i];
      const double s = o >= 0 ? 1.0 / (1.0 + std::exp(-o)) : std::exp(o) / (1.0 + std::exp(o));
      gp[i] += g * weight[i] * (s - target[i]);
    }
  });
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

void SparseMatrix::add(std::size_t row, std::size_t col, double value) {
  INVDET_REQUIRE(row < rows_ && col < cols_, ErrorCode::kShapeMismatch,
                 "SparseMatrix::add out of range");
  pending_.push_back({row, col, value});
}

void SparseMatrix::finalize() {
  std::stable_sort(pending_.begin(), pending_.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  row_start_.assign(rows_ + 1, 0);
  col_.clear();
  value_.clear();
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    const Entry& e = pending_[i];
    // Merge duplicates so each (row, col) appears once.
    if (!col_.empty() && i > 0 && pending_[i - 1].row == e.row && pending_[i - 1].col == e.col) {
      value_.back() += e.value;
      continue;
    }
    col_.push_back(e.col);
    value_.push_back(e.value);
    ++row_start_[e.row + 1];
  }
  for (std::size_t r = 0; r < rows_; ++r) row_start_[r + 1] += row_start_[r];
  pending_.clear();
}

void SparseMatrix::apply(const double* x, double* y) const {
  for (std::size_t r = 0; r < rows_; ++r) {
    double acc = 0.0;
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
      acc += value_[k] * x[col_[k]];
    }
    y[r] = acc;
  }
}

void SparseMatrix::apply_transpose_add(const double* y_grad, double* x_grad) const {
  for (std::size_t r = 0; r < rows_; ++r) {
    const double g = y_grad[r];
    for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) {
      x_grad[col_[k]] += value_[k] * g;
    }
  }
}

Tensor sparse_map(const Tensor& x, std::shared_ptr<const SparseMatrix> map) {
  INVDET_REQUIRE(x.rank() >= 1 && x.dim(0) > 0, ErrorCode::kShapeMismatch,
                 "sparse_map expects a leading batch dim");
  const std::size_t batch = x.dim(0);
  const std::size_t width = x.numel() / batch;
  INVDET_REQUIRE(width == map->cols(), ErrorCode::kShapeMismatch,
                 "sparse_map: input row width " + std::to_string(width) + " vs operator cols " +
                     std::to_string(map->cols()));
  const std::size_t out_width = map->rows();
  auto X = x.data();
  std::vector<double> out(batch * out_width);
  for (std::size_t b = 0; b < batch; ++b) {
    map->apply(X.data() + b * width, out.data() + b * out_width);
  }
  Shape shape = out_width == width ? x.shape() : Shape{batch, out_width};
  return make_result(
      std::move(shape), std::move(out), {x}, [map, batch, width, out_width](Node& self) {
        Node& p = parent(self, 0);
        auto& gp = p.grad_buffer();
        for (std::size_t b = 0; b < batch; ++b) {
          map->apply_transpose_add(self.grad.data() + b * out_width, gp.data() + b * width);
        }
      });
}

}  // namespace invdet
