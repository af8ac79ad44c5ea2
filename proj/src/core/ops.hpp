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

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace invdet {

// Elementwise arithmetic with numpy-style broadcasting. Gradients of
// broadcast operands are reduce-summed over the broadcast axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);      // kDomain on a zero divisor
Tensor maximum(const Tensor& a, const Tensor& b);  // ties route grad to a

Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
Tensor maximum(const Tensor& a, double b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return add(a, -b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator/(const Tensor& a, double b) { return mul(a, 1.0 / b); }
Tensor operator-(const Tensor& a);

// x^p. A negative base with a non-integer exponent is a domain error. Where
// the derivative is unbounded (base 0, p < 1) the gradient is taken as 0.
Tensor pow(const Tensor& x, double p);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // kDomain on nonpositive input
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);
// Max along an axis; the gradient goes to the first maximal element.
Tensor max(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
// Concatenation along the last axis; leading dims must agree.
Tensor concat_last(const std::vector<Tensor>& parts);
// out[..., j] = x[..., index[j]] along the last axis.
Tensor take_last(const Tensor& x, const std::vector<std::size_t>& index);
// out[b] = x[b, index[b]] for x of shape [B, N].
Tensor pick(const Tensor& x, const std::vector<std::size_t>& index);

Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// Cross-correlation. input [B,C,H,W], kernel [O,C,KH,KW], bias [O] or empty.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias,
              Conv2dParams params = {});
// Non-overlapping max pooling with window == stride == k.
Tensor max_pool2d(const Tensor& input, std::size_t k);

// Row-wise (last axis) softmax and log-softmax with max subtraction.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// Mean weighted binary cross-entropy on logits: target in {0,1}.
Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& target,
                       const std::vector<double>& weight);

// Fixed sparse linear operator y = W x applied to each row of x [B, D].
class SparseMatrix {
 public:
  SparseMatrix(std::size_t rows, std::size_t cols);

  void add(std::size_t row, std::size_t col, double value);
  void finalize();

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  // Dense y = W x for one row.
  void apply(const double* x, double* y) const;
  // x_grad += W^T y_grad.
  void apply_transpose_add(const double* y_grad, double* x_grad) const;

 private:
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::size_t rows_, cols_;
  std::vector<Entry> pending_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> col_;
  std::vector<double> value_;
};

// x is [B, ...] with the trailing dims flattening to map.cols(). The result
// keeps x's shape when the map is square, otherwise it is [B, map.rows()].
Tensor sparse_map(const Tensor& x, std::shared_ptr<const SparseMatrix> map);

}  // namespace invdet
