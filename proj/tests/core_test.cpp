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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/kv_config.hpp"
#include "core/ops.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "grad_check.hpp"

using namespace invdet;
using invdet::testing::gradient_error;
using invdet::testing::random_tensor;

namespace {

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(t[i] == doctest::Approx(expected[i]).epsilon(tol));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected invdet::Error");
  return ErrorCode::kRuntime;
}

}  // namespace

TEST_CASE("broadcasting forward values") {
  const Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::from({3}, {1, 2, 4});
  check_values(a + b, {2, 4, 7, 5, 7, 10});
  check_values(a - b, {0, 0, -1, 3, 3, 2});
  check_values(a * b, {1, 4, 12, 4, 10, 24});
  check_values(a / b, {1, 1, 0.75, 4, 2.5, 1.5});
  check_values(mul(a, Tensor::from({2, 1}, {10, -1})), {10, 20, 30, -4, -5, -6});
  CHECK((add(Tensor::zeros({2, 1, 3}), Tensor::zeros({4, 1}))).shape() == Shape{2, 4, 3});
}

TEST_CASE("incompatible shapes and bad domains are reported") {
  CHECK(code_of([] { add(Tensor::zeros({2, 3}), Tensor::zeros({2})); }) ==
        ErrorCode::kShapeMismatch);
  CHECK(code_of([] { matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})); }) ==
        ErrorCode::kShapeMismatch);
  CHECK(code_of([] { div(Tensor::full({2}, 1.0), Tensor::from({2}, {1, 0})); }) ==
        ErrorCode::kDomain);
  CHECK(code_of([] { log(Tensor::from({2}, {1, 0})); }) == ErrorCode::kDomain);
  CHECK(code_of([] { pow(Tensor::from({1}, {-2}), 0.5); }) == ErrorCode::kDomain);
  check_values(pow(Tensor::from({1}, {-2}), 3.0), {-8});
}

TEST_CASE("reductions, max and indexing") {
  const Tensor x = Tensor::from({2, 3}, {1, 5, 2, 7, 0, 7});
  check_values(sum(x), {22});
  check_values(mean(x), {22.0 / 6});
  check_values(sum(x, 0), {8, 5, 9});
  check_values(mean(x, 1), {8.0 / 3, 14.0 / 3});
  check_values(max(x, 1), {5, 7});
  check_values(take_last(x, {2, 2, 0}), {2, 2, 1, 7, 7, 7});
  check_values(pick(x, {1, 2}), {5, 7});
  check_values(concat_last({x, Tensor::from({2, 1}, {9, 8})}), {1, 5, 2, 9, 7, 0, 7, 8});
  check_values(matmul(x, Tensor::from({3, 1}, {1, 1, 1})), {8, 14});
}

TEST_CASE("max routes the gradient to the first maximal element") {
  const Tensor x = Tensor::from({1, 3}, {7, 2, 7}, true);
  sum(max(x, 1)).backward();
  CHECK(x.grad() == std::vector<double>{1, 0, 0});
}

TEST_CASE("softmax is stable for large logits") {
  const Tensor p = softmax(Tensor::from({1, 2}, {1000, 0}));
  CHECK(p[0] == 1.0);
  CHECK(p[1] == doctest::Approx(0.0));
  const Tensor lp = log_softmax(Tensor::from({1, 2}, {1000, 0}));
  CHECK(std::isfinite(lp[1]));
  CHECK(lp[1] == doctest::Approx(-1000));
}

TEST_CASE("conv2d and max pooling against hand-computed values") {
  // 1x1x3x3 input, 2x2 all-ones kernel, stride 1: each output is a 2x2 window sum.
  const Tensor in = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
  const Tensor bias = Tensor::from({1}, {0.5});
  check_values(conv2d(in, k, &bias), {12.5, 16.5, 24.5, 28.5});
  // Padding 1 adds zero borders: the corner window sees only the corner pixel.
  CHECK(conv2d(in, k, nullptr, {1, 1})[0] == 1.0);
  check_values(max_pool2d(Tensor::from({1, 1, 2, 4}, {1, 3, 2, 0, 4, 2, 5, 9}), 2), {4, 9});
}

TEST_CASE("gradients accumulate across backward calls and reset with zero_grad") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  sum(mul(x, x)).backward();
  CHECK(x.grad() == std::vector<double>{4, 8});
  x.zero_grad();
  CHECK_FALSE(x.has_grad());
  CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("a tensor used twice receives the sum of both paths") {
  const Tensor x = Tensor::scalar(3.0, true);
  (x * x + x * 2.0).backward();
  CHECK(x.grad()[0] == doctest::Approx(8.0));
}

TEST_CASE("NoGradGuard stops graph construction") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    const Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
  CHECK(grad_enabled());
  CHECK(mul(x, x).requires_grad());
}

TEST_CASE("detach cuts the graph") {
  const Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor y = mul(x, 3.0).detach();
  CHECK_FALSE(y.requires_grad());
  check_values(y, {3, 6});
}

TEST_CASE("sparse_map applies W and W transpose") {
  auto m = std::make_shared<SparseMatrix>(2, 3);
  m->add(0, 0, 1.0);
  m->add(0, 2, 2.0);
  m->add(1, 1, -1.0);
  m->add(1, 1, -1.0);  // duplicates add up
  m->finalize();
  const Tensor x = Tensor::from({1, 3}, {1, 2, 3}, true);
  const Tensor y = sparse_map(x, m);
  check_values(y, {7, -4});
  sum(y).backward();
  CHECK(x.grad() == std::vector<double>{1, -2, 2});
}

TEST_CASE("finite-difference checks for every op") {
  Rng rng(11);
  for (const auto& c : invdet::testing::op_cases()) {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) worst = std::max(worst, c.run(rng));
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient check helper catches a wrong backward rule") {
  Rng rng(3);
  // Forward is x^2 but the backward rule claims 3x.
  auto bad = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * x[i];
    return detail::make_result(x.shape(), v, {x}, [x](detail::Node& self) {
      auto& g = x.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 3 * x[i];
    });
  };
  CHECK(gradient_error(bad, {random_tensor(rng, {4}, 0.5, 1.0)}, rng) > 0.1);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(5);
  Checkpoint ck;
  ck.put("a", random_tensor(rng, {2, 3}));
  ck.put("b/weight", Tensor::from({1}, {1.0 / 3.0}));
  const Checkpoint back = Checkpoint::deserialize(ck.serialize());
  CHECK(back.get("a").to_vector() == ck.get("a").to_vector());
  CHECK(back.get("a").shape() == Shape{2, 3});
  CHECK(back.get("b/weight")[0] == 1.0 / 3.0);

  const auto path = std::filesystem::temp_directory_path() / "invdet_core_test.ivdc";
  ck.save(path);
  CHECK(Checkpoint::load(path).get("a").to_vector() == ck.get("a").to_vector());
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are format errors") {
  Checkpoint ck;
  ck.put("a", Tensor::from({2}, {1, 2}));
  const std::string bytes = ck.serialize();
  CHECK(code_of([&] { Checkpoint::deserialize("XXXX" + bytes.substr(4)); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { Checkpoint::deserialize(bytes.substr(0, bytes.size() - 3)); }) ==
        ErrorCode::kFormat);
  CHECK(code_of([&] { Checkpoint::deserialize(bytes + "x"); }) == ErrorCode::kFormat);
  CHECK(code_of([&] { ck.get("missing"); }) == ErrorCode::kFormat);
  CHECK(code_of([] { Checkpoint::load("/nonexistent/dir/x.ivdc"); }) == ErrorCode::kIo);
}

TEST_CASE("key = value configuration") {
  const KvConfig kv = KvConfig::parse(
      "# comment\n"
      "a = 1\n"
      "b=hello world  # trailing\n"
      "list = 1, 2.5 ,3\n"
      "flag = yes\n"
      "a = 2\n");
  CHECK(kv.get_int("a", 0) == 2);
  CHECK(kv.get("b") == "hello world");
  CHECK(kv.get_doubles("list", {}) == std::vector<double>{1, 2.5, 3});
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("missing", 0.5) == 0.5);
  CHECK(code_of([&] { kv.get("missing"); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { kv.get_int("b", 0); }) == ErrorCode::kInvalidArgument);
  CHECK(KvConfig::parse(kv.to_string()).values() == kv.values());

  KvConfig over;
  over.set("a", "7");
  KvConfig merged = kv;
  merged.merge(over);
  CHECK(merged.get_int("a", 0) == 7);
  CHECK(split_list(" x , y,,z ") == std::vector<std::string>{"x", "y", "", "z"});
}

TEST_CASE("parallel_for covers every index once and rethrows the lowest failure") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
  for (auto& h : hits) CHECK(h.load() == 1);

  try {
    parallel_for(50, 3, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error("item " + std::to_string(i));
    });
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "item 7");
  }
}

TEST_CASE("rng streams are reproducible and derive_seed separates keys") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng r(9);
  double s = 0;
  bool in_range = true;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    in_range = in_range && u >= 0.0 && u < 1.0 && r.below(7) < 7;
    s += u;
  }
  CHECK(in_range);
  CHECK(s / 20000 == doctest::Approx(0.5).epsilon(0.02));
}
