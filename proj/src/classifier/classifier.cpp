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

#include "classifier/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace invdet {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  std::vector<double> m(shape_numel(shape));
  const double keep = 1.0 / (1.0 - rate);
  for (auto& v : m) v = rng.bernoulli(rate) ? 0.0 : keep;
  return Tensor::from(shape, std::move(m));
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t n = t.dim(1);
  auto d = t.data();
  return {d.begin() + static_cast<std::ptrdiff_t>(r * n),
          d.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)};
}

}  // namespace

ClassifierModel ClassifierModel::make_default(ImageDims input, std::size_t num_classes,
                                              std::uint64_t seed, double dropout_rate,
                                              std::size_t hidden) {
  INVDET_REQUIRE(input.size() > 0 && num_classes >= 2, ErrorCode::kInvalidArgument,
                 "make_default: bad input dims or class count");
  INVDET_REQUIRE(input.height >= 4 && input.width >= 4, ErrorCode::kInvalidArgument,
                 "make_default: images must be at least 4x4");
  INVDET_REQUIRE(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::kInvalidArgument,
                 "make_default: dropout rate must be in [0, 1)");
  Rng rng(seed);
  ClassifierModel m;
  m.input_ = input;
  m.num_classes_ = num_classes;
  const std::size_t c1 = 8, c2 = 16;
  auto conv = [&](std::size_t in, std::size_t out) {
    Layer l{Layer::Kind::kConv, he_normal({out, in, 3, 3}, in * 9, rng),
            Tensor::zeros({out}, true)};
    l.padding = 1;
    return l;
  };
  auto dense = [&](std::size_t in, std::size_t out) {
    return Layer{Layer::Kind::kDense, he_normal({in, out}, in, rng), Tensor::zeros({out}, true)};
  };
  m.layers_.push_back({Layer::Kind::kCenter});
  m.layers_.push_back(conv(input.channels, c1));
  m.layers_.push_back({Layer::Kind::kRelu});
  m.layers_.push_back({Layer::Kind::kMaxPool});
  m.layers_.push_back(conv(c1, c2));
  m.layers_.push_back({Layer::Kind::kRelu});
  m.layers_.push_back({Layer::Kind::kMaxPool});
  m.layers_.push_back({Layer::Kind::kFlatten});
  const std::size_t flat = c2 * (input.height / 4) * (input.width / 4);
  m.layers_.push_back(dense(flat, hidden));
  m.layers_.push_back({Layer::Kind::kRelu});
  Layer drop{Layer::Kind::kDropout};
  drop.rate = dropout_rate;
  m.layers_.push_back(drop);
  m.layers_.push_back(dense(hidden, num_classes));
  return m;
}

void ClassifierModel::check_input(const Tensor& images) const {
  INVDET_REQUIRE(images.rank() == 4 && images.dim(1) == input_.channels &&
                     images.dim(2) == input_.height && images.dim(3) == input_.width,
                 ErrorCode::kShapeMismatch,
                 "classifier expects [B," + std::to_string(input_.channels) + "," +
                     std::to_string(input_.height) + "," + std::to_string(input_.width) +
                     "], got " + shape_str(images.shape()));
}

Tensor ClassifierModel::forward(const Tensor& images, Mode mode, Rng* rng) const {
  check_input(images);
  Tensor h = images;
  for (const Layer& l : layers_) {
    switch (l.kind) {
      case Layer::Kind::kConv:
        h = conv2d(h, l.weight, &l.bias, {l.stride, l.padding});
        break;
      case Layer::Kind::kRelu:
        h = relu(h);
        break;
      case Layer::Kind::kMaxPool:
        h = max_pool2d(h, l.pool);
        break;
      case Layer::Kind::kFlatten:
        h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
        break;
      case Layer::Kind::kDense:
        h = add(matmul(h, l.weight), l.bias);
        break;
      case Layer::Kind::kCenter:
        h = sub(h, mean(mean(h, 3, true), 2, true));
        break;
      case Layer::Kind::kDropout:
        if (mode != Mode::kEval && l.rate > 0.0) {
          INVDET_REQUIRE(rng != nullptr, ErrorCode::kInvalidArgument,
                         "forward: dropout needs an rng outside eval mode");
          h = mul(h, dropout_mask(h.shape(), l.rate, *rng));
        }
        break;
    }
  }
  return h;
}

bool ClassifierModel::has_dropout() const {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.kind == Layer::Kind::kDropout; });
}

double ClassifierModel::dropout_rate() const {
  for (const Layer& l : layers_) {
    if (l.kind == Layer::Kind::kDropout) return l.rate;
  }
  return 0.0;
}

void ClassifierModel::set_dropout_rate(double rate) {
  INVDET_REQUIRE(rate >= 0.0 && rate < 1.0, ErrorCode::kInvalidArgument,
                 "dropout rate must be in [0, 1)");
  for (Layer& l : layers_) {
    if (l.kind == Layer::Kind::kDropout) l.rate = rate;
  }
}

std::vector<Tensor> ClassifierModel::parameters() const {
  std::vector<Tensor> out;
  for (const Layer& l : layers_) {
    if (l.kind == Layer::Kind::kConv || l.kind == Layer::Kind::kDense) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  }
  return out;
}

void ClassifierModel::set_trainable(bool on) {
  for (auto& p : parameters()) {
    p.zero_grad();
    p.set_requires_grad(on);
  }
}

Checkpoint ClassifierModel::to_checkpoint() const {
  Checkpoint ck;
  ck.put("meta", Tensor::from(
                     {4}, {static_cast<double>(input_.channels), static_cast<double>(input_.height),
                           static_cast<double>(input_.width), static_cast<double>(num_classes_)}));
  std::vector<double> arch;
  for (const Layer& l : layers_) {
    arch.insert(arch.end(), {static_cast<double>(l.kind), static_cast<double>(l.stride),
                             static_cast<double>(l.padding), static_cast<double>(l.pool), l.rate});
  }
  ck.put("arch", Tensor::from({layers_.size(), 5}, std::move(arch)));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.kind == Layer::Kind::kConv || l.kind == Layer::Kind::kDense) {
      ck.put("layer" + std::to_string(i) + ".weight", l.weight);
      ck.put("layer" + std::to_string(i) + ".bias", l.bias);
    }
  }
  return ck;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& ck) {
  const Tensor& meta = ck.get("meta");
  INVDET_REQUIRE(meta.numel() == 4, ErrorCode::kFormat, "classifier checkpoint: bad meta");
  ClassifierModel m;
  m.input_ = {static_cast<std::size_t>(meta[0]), static_cast<std::size_t>(meta[1]),
              static_cast<std::size_t>(meta[2])};
  m.num_classes_ = static_cast<std::size_t>(meta[3]);
  const Tensor& arch = ck.get("arch");
  INVDET_REQUIRE(arch.rank() == 2 && arch.dim(1) == 5, ErrorCode::kFormat,
                 "classifier checkpoint: bad arch");
  for (std::size_t i = 0; i < arch.dim(0); ++i) {
    Layer l{static_cast<Layer::Kind>(static_cast<int>(arch[i * 5]))};
    INVDET_REQUIRE(arch[i * 5] >= 0 && arch[i * 5] <= static_cast<double>(Layer::Kind::kCenter),
                   ErrorCode::kFormat, "classifier checkpoint: unknown layer kind");
    l.stride = static_cast<std::size_t>(arch[i * 5 + 1]);
    l.padding = static_cast<std::size_t>(arch[i * 5 + 2]);
    l.pool = static_cast<std::size_t>(arch[i * 5 + 3]);
    l.rate = arch[i * 5 + 4];
    if (l.kind == Layer::Kind::kConv || l.kind == Layer::Kind::kDense) {
      l.weight = ck.get("layer" + std::to_string(i) + ".weight").detach();
      l.bias = ck.get("layer" + std::to_string(i) + ".bias").detach();
    }
    m.layers_.push_back(std::move(l));
  }
  return m;
}

PosteriorDist softmax_t(std::span<const double> logits, double temperature) {
  INVDET_REQUIRE(temperature > 0.0 && std::isfinite(temperature), ErrorCode::kInvalidArgument,
                 "softmax temperature must be positive and finite");
  INVDET_REQUIRE(!logits.empty(), ErrorCode::kShapeMismatch, "softmax of empty logits");
  PosteriorDist p;
  p.temperature = temperature;
  p.probs.resize(logits.size());
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    s += (p.probs[i] = std::exp((logits[i] - m) / temperature));
  }
  for (auto& v : p.probs) v /= s;
  return p;
}

std::size_t argmax(std::span<const double> values) {
  INVDET_REQUIRE(!values.empty(), ErrorCode::kShapeMismatch, "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> image_logits(const ClassifierModel& model, const LabeledImage& image) {
  NoGradGuard no_grad;
  return model.logits(image_tensor(image)).to_vector();
}

std::vector<std::vector<double>> batch_logits(const ClassifierModel& model, const Dataset& images,
                                              std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    std::vector<const LabeledImage*> chunk;
    for (std::size_t i = start; i < std::min(images.size(), start + batch_size); ++i) {
      chunk.push_back(&images[i]);
    }
    const Tensor z = model.logits(batch_tensor(chunk));
    for (std::size_t r = 0; r < chunk.size(); ++r) out.push_back(row(z, r));
  }
  return out;
}

std::size_t predict(const ClassifierModel& model, const LabeledImage& image) {
  return argmax(image_logits(model, image));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  return mean(-pick(log_softmax(logits), labels));
}

double accuracy(const ClassifierModel& model, const Dataset& images) {
  if (images.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto z = batch_logits(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (argmax(z[i]) == images[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

namespace {

void hflip_in_place(std::vector<double>& pixels, const ImageDims& d) {
  for (std::size_t c = 0; c < d.channels; ++c) {
    for (std::size_t y = 0; y < d.height; ++y) {
      double* r = pixels.data() + (c * d.height + y) * d.width;
      std::reverse(r, r + d.width);
    }
  }
}

}  // namespace

TrainReport train_classifier(ClassifierModel& model, const Dataset& train_set,
                             const TrainConfig& config, const Dataset* eval_set) {
  INVDET_REQUIRE(!train_set.empty(), ErrorCode::kInvalidArgument, "train: empty training set");
  INVDET_REQUIRE(config.batch > 0 && config.lr > 0.0, ErrorCode::kInvalidArgument,
                 "train: batch and lr must be positive");
  for (const auto& im : train_set) {
    INVDET_REQUIRE(im.label < model.num_classes(), ErrorCode::kInvalidArgument,
                   "train: label out of range");
  }
  model.set_trainable(true);
  auto params = model.parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.numel(), 0.0);

  TrainReport report;
  Rng order_rng(derive_seed(config.seed, 0x5eed));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  double lr = config.lr;
  const ImageDims dims = model.input_dims();

  {
    NoGradGuard no_grad;
    std::vector<std::size_t> labels;
    for (const auto& im : train_set) labels.push_back(im.label);
    double total = 0.0;
    for (std::size_t s = 0; s < train_set.size(); s += 256) {
      const std::size_t e = std::min(train_set.size(), s + 256);
      std::vector<const LabeledImage*> chunk;
      std::vector<std::size_t> y(labels.begin() + static_cast<std::ptrdiff_t>(s),
                                 labels.begin() + static_cast<std::ptrdiff_t>(e));
      for (std::size_t i = s; i < e; ++i) chunk.push_back(&train_set[i]);
      total +=
          cross_entropy(model.logits(batch_tensor(chunk)), y).item() * static_cast<double>(e - s);
    }
    report.initial_loss = total / static_cast<double>(train_set.size());
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (std::find(config.lr_steps.begin(), config.lr_steps.end(), epoch) != config.lr_steps.end()) {
      lr *= config.lr_gamma;
    }
    order_rng.shuffle(order.begin(), order.end());
    Rng aug_rng(derive_seed(config.seed, 1000 + epoch));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      std::vector<double> data;
      std::vector<std::size_t> labels;
      data.reserve((end - start) * dims.size());
      for (std::size_t i = start; i < end; ++i) {
        const LabeledImage& im = train_set[order[i]];
        std::vector<double> px = im.pixels;
        if (config.augment_flip && aug_rng.bernoulli(0.5)) hflip_in_place(px, dims);
        data.insert(data.end(), px.begin(), px.end());
        labels.push_back(im.label);
      }
      const Tensor x =
          Tensor::from({end - start, dims.channels, dims.height, dims.width}, std::move(data));
      Rng drop_rng(derive_seed(config.seed, (epoch << 32) + start));
      const Tensor loss = cross_entropy(model.forward(x, Mode::kTrain, &drop_rng), labels);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        model.set_trainable(false);
        fail(ErrorCode::kDivergence, "train: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", lr " + std::to_string(lr));
      }
      epoch_loss += lv * static_cast<double>(end - start);
      for (auto& p : params) p.zero_grad();
      loss.backward();
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].mutable_data();
        const auto g = params[k].grad();
        auto& v = velocity[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
          v[i] = config.momentum * v[i] + g[i] + config.weight_decay * w[i];
          w[i] -= lr * v[i];
        }
      }
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));
  }
  model.set_trainable(false);
  report.train_accuracy = accuracy(model, train_set);
  report.eval_accuracy =
      eval_set ? accuracy(model, *eval_set) : std::numeric_limits<double>::quiet_NaN();
  return report;
}

std::vector<PosteriorDist> stochastic_posteriors(const ClassifierModel& model,
                                                 const LabeledImage& image, std::size_t passes,
                                                 std::uint64_t seed, double temperature) {
  INVDET_REQUIRE(model.has_dropout(), ErrorCode::kInvalidArgument,
                 "stochastic_posteriors: model has no dropout layer");
  INVDET_REQUIRE(passes >= 2, ErrorCode::kInvalidArgument, "stochastic_posteriors: need K >= 2");
  NoGradGuard no_grad;
  const Tensor x = image_tensor(image);
  std::vector<PosteriorDist> out;
  out.reserve(passes);
  for (std::size_t k = 0; k < passes; ++k) {
    Rng rng(derive_seed(seed, k));
    const Tensor z = model.forward(x, Mode::kStochastic, &rng);
    out.push_back(softmax_t(z.data(), temperature));
  }
  return out;
}

}  // namespace invdet
