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

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "attacks/attacks.hpp"
#include "classifier/classifier.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "detectors/detectors.hpp"
#include "transforms/transforms.hpp"

namespace invdet::testing {

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero in magnitude: |x| in [0.2, 1.5].
inline Tensor away_from_zero(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 1.5);
  return Tensor::from(std::move(shape), std::move(v));
}

// Relative error between the backprop gradient of sum(w * f(inputs)) and its
// central finite difference, over all input elements at once:
// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8).
inline double gradient_error(const TensorFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                             double h = 1e-6) {
  std::vector<Tensor> leaves;
  for (const auto& t : inputs) leaves.push_back(Tensor::from(t.shape(), t.to_vector(), true));
  const Tensor y = f(leaves);
  std::vector<double> w(y.numel());
  for (double& x : w) x = rng.normal();
  sum(mul(y, Tensor::from(y.shape(), w))).backward();

  auto loss = [&](const std::vector<Tensor>& in) {
    NoGradGuard no_grad;
    const Tensor out = f(in);
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) s += w[i] * out[i];
    return s;
  };

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = leaves[k].grad();
    const auto base = inputs[k].to_vector();
    for (std::size_t j = 0; j < base.size(); ++j) {
      std::vector<Tensor> in = inputs;
      auto v = base;
      v[j] = base[j] + h;
      in[k] = Tensor::from(inputs[k].shape(), v);
      const double up = loss(in);
      v[j] = base[j] - h;
      in[k] = Tensor::from(inputs[k].shape(), v);
      const double down = loss(in);
      const double numeric = (up - down) / (2 * h);
      diff2 += (analytic[j] - numeric) * (analytic[j] - numeric);
      a2 += analytic[j] * analytic[j];
      n2 += numeric * numeric;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-8});
}

// One randomized gradient check; draws its own instance from rng.
struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

inline GradCase unary(std::string name, std::function<Tensor(const Tensor&)> op,
                      std::function<Tensor(Rng&)> draw) {
  return {std::move(name), [op, draw](Rng& rng) {
            return gradient_error([&](const std::vector<Tensor>& in) { return op(in[0]); },
                                  {draw(rng)}, rng);
          }};
}

inline GradCase binary(std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op,
                       std::function<std::vector<Tensor>(Rng&)> draw) {
  return {std::move(name), [op, draw](Rng& rng) {
            return gradient_error([&](const std::vector<Tensor>& in) { return op(in[0], in[1]); },
                                  draw(rng), rng);
          }};
}

inline std::vector<GradCase> op_cases() {
  std::vector<GradCase> cases;
  auto plain = [](Shape s) { return [s](Rng& r) { return random_tensor(r, s); }; };
  auto pair = [](Shape a, Shape b) {
    return [a, b](Rng& r) { return std::vector<Tensor>{random_tensor(r, a), random_tensor(r, b)}; };
  };

  cases.push_back(binary("add", [](auto& a, auto& b) { return add(a, b); }, pair({2, 3}, {3})));
  cases.push_back(binary("sub", [](auto& a, auto& b) { return sub(a, b); }, pair({2, 3}, {2, 1})));
  cases.push_back(
      binary("mul", [](auto& a, auto& b) { return mul(a, b); }, pair({2, 1, 3}, {4, 1})));
  cases.push_back(binary(
      "div", [](auto& a, auto& b) { return div(a, b); },
      [](Rng& r) {
        return std::vector<Tensor>{random_tensor(r, {3, 2}), away_from_zero(r, {2})};
      }));
  cases.push_back(
      binary("maximum", [](auto& a, auto& b) { return maximum(a, b); }, pair({2, 3}, {2, 3})));
  cases.push_back(unary("add_scalar", [](auto& x) { return x + 0.7; }, plain({5})));
  cases.push_back(unary("mul_scalar", [](auto& x) { return x * -1.3; }, plain({5})));
  cases.push_back(unary(
      "maximum_scalar", [](auto& x) { return maximum(x, 0.1); },
      [](Rng& r) { return add(away_from_zero(r, {6}), 0.1); }));
  cases.push_back(unary("neg", [](auto& x) { return -x; }, plain({4})));
  cases.push_back(unary(
      "pow", [](auto& x) { return pow(x, 1.7); },
      [](Rng& r) { return random_tensor(r, {5}, 0.3, 2.0); }));
  cases.push_back(unary(
      "pow_negative_exponent", [](auto& x) { return pow(x, -0.6); },
      [](Rng& r) { return random_tensor(r, {5}, 0.3, 2.0); }));
  cases.push_back(
      unary("pow_integer_negative_base", [](auto& x) { return pow(x, 3.0); }, plain({5})));
  cases.push_back(unary("exp", [](auto& x) { return exp(x); }, plain({5})));
  cases.push_back(unary(
      "log", [](auto& x) { return log(x); },
      [](Rng& r) { return random_tensor(r, {5}, 0.2, 3.0); }));
  cases.push_back(unary("tanh", [](auto& x) { return tanh(x); }, plain({5})));
  cases.push_back(unary("sigmoid", [](auto& x) { return sigmoid(x); }, plain({5})));
  cases.push_back(unary(
      "relu", [](auto& x) { return relu(x); }, [](Rng& r) { return away_from_zero(r, {6}); }));
  cases.push_back(
      unary("abs", [](auto& x) { return abs(x); }, [](Rng& r) { return away_from_zero(r, {6}); }));
  cases.push_back(unary(
      "clamp", [](auto& x) { return clamp(x, -0.5, 0.5); },
      [](Rng& r) {
        // Keep clear of the bounds so the check never straddles a kink.
        std::vector<double> v(8);
        for (double& x : v) {
          do x = r.uniform(-1.5, 1.5);
          while (std::fabs(std::fabs(x) - 0.5) < 0.05);
        }
        return Tensor::from({8}, v);
      }));
  cases.push_back(unary("sum", [](auto& x) { return sum(x); }, plain({2, 3})));
  cases.push_back(unary("mean", [](auto& x) { return mean(x); }, plain({2, 3})));
  cases.push_back(unary("sum_axis", [](auto& x) { return sum(x, 1); }, plain({2, 3, 4})));
  cases.push_back(
      unary("sum_axis_keepdim", [](auto& x) { return sum(x, 0, true); }, plain({2, 3, 4})));
  cases.push_back(unary("mean_axis", [](auto& x) { return mean(x, 2, true); }, plain({2, 3, 4})));
  cases.push_back(unary("max_axis", [](auto& x) { return max(x, 1); }, plain({3, 5})));
  cases.push_back(unary("reshape", [](auto& x) { return exp(reshape(x, {2, 3})); }, plain({3, 2})));
  cases.push_back(binary(
      "concat_last", [](auto& a, auto& b) { return mul(concat_last({a, b}), concat_last({b, a})); },
      pair({2, 3}, {2, 3})));
  cases.push_back(
      unary("take_last", [](auto& x) { return take_last(x, {2, 0, 2, 1}); }, plain({2, 3})));
  cases.push_back(unary("pick", [](auto& x) { return pick(x, {1, 0, 3}); }, plain({3, 4})));
  cases.push_back(
      binary("matmul", [](auto& a, auto& b) { return matmul(a, b); }, pair({3, 4}, {4, 2})));
  cases.push_back(
      {"conv2d_bias_padding", [](Rng& r) {
         return gradient_error(
             [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], &in[2], {1, 1}); },
             {random_tensor(r, {2, 2, 5, 5}), random_tensor(r, {3, 2, 3, 3}),
              random_tensor(r, {3})},
             r);
       }});
  cases.push_back(
      {"conv2d_stride", [](Rng& r) {
         return gradient_error(
             [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], nullptr, {2, 0}); },
             {random_tensor(r, {1, 2, 6, 6}), random_tensor(r, {2, 2, 2, 2})}, r);
       }});
  cases.push_back(
      unary("max_pool2d", [](auto& x) { return max_pool2d(x, 2); }, plain({2, 2, 4, 4})));
  cases.push_back(unary("softmax", [](auto& x) { return softmax(x); }, plain({3, 4})));
  cases.push_back(unary("log_softmax", [](auto& x) { return log_softmax(x); }, plain({3, 4})));
  cases.push_back(unary(
      "bce_with_logits",
      [](auto& x) { return bce_with_logits(x, {1, 0, 0, 1, 1}, {0.5, 1.5, 1.0, 2.0, 0.25}); },
      [](Rng& r) { return random_tensor(r, {5, 1}, -3, 3); }));
  cases.push_back({"sparse_map", [](Rng& r) {
                     auto m = std::make_shared<SparseMatrix>(6, 8);
                     for (std::size_t i = 0; i < 6; ++i)
                       for (int k = 0; k < 3; ++k) m->add(i, r.below(8), r.uniform(-1, 1));
                     m->finalize();
                     std::shared_ptr<const SparseMatrix> map = m;
                     return gradient_error(
                         [map](const std::vector<Tensor>& in) { return sparse_map(in[0], map); },
                         {random_tensor(r, {2, 8})}, r);
                   }});
  cases.push_back(
      {"cross_entropy", [](Rng& r) {
         const std::vector<std::size_t> labels{r.below(4), r.below(4), r.below(4)};
         return gradient_error(
             [&](const std::vector<Tensor>& in) { return cross_entropy(in[0], labels); },
             {random_tensor(r, {3, 4}, -3, 3)}, r);
       }});
  cases.push_back(
      {"kl_divergence_logits", [](Rng& r) {
         const double temps[] = {0.15, 1.0, 3.0};
         const double t = temps[r.below(3)];
         return gradient_error(
             [t](const std::vector<Tensor>& in) { return kl_divergence_logits(in[0], in[1], t); },
             {random_tensor(r, {2, 4}, -2, 2), random_tensor(r, {2, 4}, -2, 2)}, r);
       }});
  return cases;
}

// Transforms checked at interior points: pixels in [0.25, 0.75] keep every
// transform's output away from the clamp.
inline std::vector<GradCase> transform_cases() {
  const ImageDims dims{3, 6, 6};
  std::vector<GradCase> cases;
  for (const char* text : {"hflip", "zoom:1.05", "zoom:1.03", "gamma:0.6", "shift:0.5,0.5",
                           "contrast:1.2", "brightness:0.1", "gray", "hblur:3"}) {
    const Transform t(TransformSpec::parse(text), dims);
    cases.push_back(
        {std::string("transform ") + text, [t, dims](Rng& r) {
           return gradient_error(
               [&t](const std::vector<Tensor>& in) { return t(in[0]); },
               {random_tensor(r, {2, dims.channels, dims.height, dims.width}, 0.25, 0.75)}, r);
         }});
  }
  return cases;
}

// End-to-end checks through the classifier and the combined model G.
inline std::vector<GradCase> model_cases() {
  const ImageDims dims{3, 8, 8};
  auto f = std::make_shared<ClassifierModel>(ClassifierModel::make_default(dims, 4, 5));
  std::vector<GradCase> cases;
  cases.push_back({"classifier logits", [f, dims](Rng& r) {
                     return gradient_error(
                         [&](const std::vector<Tensor>& in) { return f->logits(in[0]); },
                         {random_tensor(r, {1, dims.channels, dims.height, dims.width}, 0, 1)}, r);
                   }});
  cases.push_back(
      {"combined model G", [f, dims](Rng& r) {
         const CombinedModelG g(*f, {TransformSpec::hflip(), 0.5, 0.01});
         return gradient_error(
             [&](const std::vector<Tensor>& in) { return g.logits(in[0]); },
             {random_tensor(r, {1, dims.channels, dims.height, dims.width}, 0.25, 0.75)}, r);
       }});
  return cases;
}

}  // namespace invdet::testing
