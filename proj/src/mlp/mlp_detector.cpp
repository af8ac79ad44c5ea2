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

#include "mlp/mlp_detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace invdet {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor feature_matrix(const std::vector<InvarianceFeature>& features,
                      const std::vector<std::size_t>& rows) {
  const std::size_t d = features.front().values.size();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (auto r : rows) {
    INVDET_REQUIRE(features[r].values.size() == d, ErrorCode::kShapeMismatch,
                   "mlp: inconsistent feature lengths");
    data.insert(data.end(), features[r].values.begin(), features[r].values.end());
  }
  return Tensor::from({rows.size(), d}, std::move(data));
}

}  // namespace

std::vector<std::size_t> descending_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

InvarianceFeature build_feature(std::span<const double> original_logits,
                                const std::vector<std::vector<double>>& transformed_logits,
                                std::size_t top_k, std::uint64_t image_id) {
  const std::size_t n = original_logits.size();
  INVDET_REQUIRE(n > 0, ErrorCode::kShapeMismatch, "build_feature: empty logits");
  INVDET_REQUIRE(top_k >= 1 && top_k <= n, ErrorCode::kInvalidArgument,
                 "build_feature: N' must be in [1, N]");
  for (const auto& t : transformed_logits) {
    INVDET_REQUIRE(t.size() == n, ErrorCode::kShapeMismatch,
                   "build_feature: transformed logits length " + std::to_string(t.size()) +
                       " != " + std::to_string(n));
  }
  const auto order = descending_order(original_logits);
  InvarianceFeature f;
  f.image_id = image_id;
  f.top_k = top_k;
  f.num_transforms = transformed_logits.size();
  f.values.reserve((transformed_logits.size() + 1) * top_k);
  for (std::size_t j = 0; j < top_k; ++j) f.values.push_back(original_logits[order[j]]);
  for (const auto& t : transformed_logits) {
    for (std::size_t j = 0; j < top_k; ++j) f.values.push_back(t[order[j]]);
  }
  return f;
}

int error_label(std::size_t predicted, std::size_t label) { return predicted != label ? 1 : -1; }

ClassWeights inverse_frequency_weights(const std::vector<int>& labels) {
  std::size_t errors = 0;
  for (int l : labels) errors += l > 0 ? 1 : 0;
  const std::size_t corrects = labels.size() - errors;
  ClassWeights w;
  if (errors == 0 || corrects == 0) return w;
  const double n = static_cast<double>(labels.size());
  w.error = n / (2.0 * static_cast<double>(errors));
  w.correct = n / (2.0 * static_cast<double>(corrects));
  return w;
}

MlpModel::MlpModel(std::size_t input_size, const MlpConfig& config)
    : input_size_(input_size),
      hidden_(config.hidden),
      dropout_(config.dropout),
      bn_after_relu_(config.bn_after_relu) {
  INVDET_REQUIRE(input_size > 0 && config.hidden > 0, ErrorCode::kInvalidArgument,
                 "MlpModel: sizes must be positive");
  INVDET_REQUIRE(config.dropout >= 0.0 && config.dropout < 1.0, ErrorCode::kInvalidArgument,
                 "MlpModel: dropout must be in [0, 1)");
  Rng rng(derive_seed(config.seed, 0x41));
  std::size_t in = input_size;
  for (int i = 0; i < 2; ++i) {
    Block b;
    b.weight = he_normal({in, hidden_}, in, rng);
    b.bias = Tensor::zeros({hidden_}, true);
    b.gamma = Tensor::full({hidden_}, 1.0, true);
    b.beta = Tensor::zeros({hidden_}, true);
    b.running_mean.assign(hidden_, 0.0);
    b.running_var.assign(hidden_, 1.0);
    blocks_.push_back(std::move(b));
    in = hidden_;
  }
  out_weight_ = he_normal({hidden_, 1}, hidden_, rng);
  out_bias_ = Tensor::zeros({1}, true);
}

Tensor MlpModel::block_eval(const Block& b, const Tensor& x) const {
  auto bn = [&](const Tensor& h) {
    std::vector<double> scale(hidden_), shift(hidden_);
    for (std::size_t j = 0; j < hidden_; ++j) {
      scale[j] = b.gamma[j] / std::sqrt(b.running_var[j] + kBnEps);
      shift[j] = b.beta[j] - b.running_mean[j] * scale[j];
    }
    // gamma/beta enter through constants here; eval mode never trains.
    return add(mul(h, Tensor::from({hidden_}, scale)), Tensor::from({hidden_}, shift));
  };
  Tensor h = add(matmul(x, b.weight), b.bias);
  return bn_after_relu_ ? bn(relu(h)) : relu(bn(h));
}

Tensor MlpModel::block_train(Block& b, const Tensor& x, Rng& rng) {
  auto bn = [&](const Tensor& h) {
    const double n = static_cast<double>(h.dim(0));
    const Tensor m = mean(h, 0, true);
    const Tensor centered = sub(h, m);
    const Tensor var = mean(mul(centered, centered), 0, true);
    for (std::size_t j = 0; j < hidden_; ++j) {
      const double unbiased = n > 1 ? var[j] * n / (n - 1) : var[j];
      b.running_mean[j] = (1 - kBnMomentum) * b.running_mean[j] + kBnMomentum * m[j];
      b.running_var[j] = (1 - kBnMomentum) * b.running_var[j] + kBnMomentum * unbiased;
    }
    const Tensor normed = div(centered, pow(add(var, kBnEps), 0.5));
    return add(mul(normed, b.gamma), b.beta);
  };
  Tensor h = add(matmul(x, b.weight), b.bias);
  h = bn_after_relu_ ? bn(relu(h)) : relu(bn(h));
  if (dropout_ > 0.0) {
    std::vector<double> mask(h.numel());
    const double keep = 1.0 / (1.0 - dropout_);
    for (auto& v : mask) v = rng.bernoulli(dropout_) ? 0.0 : keep;
    h = mul(h, Tensor::from(h.shape(), std::move(mask)));
  }
  return h;
}

Tensor MlpModel::forward_eval(const Tensor& features) const {
  INVDET_REQUIRE(features.rank() == 2 && features.dim(1) == input_size_, ErrorCode::kShapeMismatch,
                 "mlp: expected [B," + std::to_string(input_size_) + "] features, got " +
                     shape_str(features.shape()));
  Tensor h = features;
  for (const Block& b : blocks_) h = block_eval(b, h);
  return add(matmul(h, out_weight_), out_bias_);
}

Tensor MlpModel::forward_train(const Tensor& features, Rng& rng) {
  INVDET_REQUIRE(features.rank() == 2 && features.dim(1) == input_size_, ErrorCode::kShapeMismatch,
                 "mlp: expected [B," + std::to_string(input_size_) + "] features, got " +
                     shape_str(features.shape()));
  INVDET_REQUIRE(features.dim(0) >= 2, ErrorCode::kInvalidArgument,
                 "mlp: batchnorm training needs at least 2 rows");
  Tensor h = features;
  for (Block& b : blocks_) h = block_train(b, h, rng);
  return add(matmul(h, out_weight_), out_bias_);
}

std::vector<Tensor> MlpModel::parameters() const {
  std::vector<Tensor> out;
  for (const Block& b : blocks_) {
    out.insert(out.end(), {b.weight, b.bias, b.gamma, b.beta});
  }
  out.push_back(out_weight_);
  out.push_back(out_bias_);
  return out;
}

void MlpModel::set_trainable(bool on) {
  for (auto& p : parameters()) {
    p.zero_grad();
    p.set_requires_grad(on);
  }
}

Checkpoint MlpModel::to_checkpoint() const {
  Checkpoint ck;
  ck.put("mlp.meta",
         Tensor::from({4}, {static_cast<double>(input_size_), static_cast<double>(hidden_),
                            dropout_, bn_after_relu_ ? 1.0 : 0.0}));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "mlp.block" + std::to_string(i) + ".";
    const Block& b = blocks_[i];
    ck.put(p + "weight", b.weight);
    ck.put(p + "bias", b.bias);
    ck.put(p + "gamma", b.gamma);
    ck.put(p + "beta", b.beta);
    ck.put(p + "running_mean", Tensor::from({hidden_}, b.running_mean));
    ck.put(p + "running_var", Tensor::from({hidden_}, b.running_var));
  }
  ck.put("mlp.out.weight", out_weight_);
  ck.put("mlp.out.bias", out_bias_);
  return ck;
}

MlpModel MlpModel::from_checkpoint(const Checkpoint& ck) {
  const Tensor& meta = ck.get("mlp.meta");
  INVDET_REQUIRE(meta.numel() == 4, ErrorCode::kFormat, "mlp checkpoint: bad meta");
  MlpModel m;
  m.input_size_ = static_cast<std::size_t>(meta[0]);
  m.hidden_ = static_cast<std::size_t>(meta[1]);
  m.dropout_ = meta[2];
  m.bn_after_relu_ = meta[3] != 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string p = "mlp.block" + std::to_string(i) + ".";
    Block b;
    b.weight = ck.get(p + "weight").detach();
    b.bias = ck.get(p + "bias").detach();
    b.gamma = ck.get(p + "gamma").detach();
    b.beta = ck.get(p + "beta").detach();
    b.running_mean = ck.get(p + "running_mean").to_vector();
    b.running_var = ck.get(p + "running_var").to_vector();
    m.blocks_.push_back(std::move(b));
  }
  m.out_weight_ = ck.get("mlp.out.weight").detach();
  m.out_bias_ = ck.get("mlp.out.bias").detach();
  return m;
}

double mlp_score(const MlpModel& model, std::span<const double> feature) {
  INVDET_REQUIRE(feature.size() == model.input_size(), ErrorCode::kShapeMismatch,
                 "mlp_score: feature length " + std::to_string(feature.size()) +
                     " != " + std::to_string(model.input_size()));
  NoGradGuard no_grad;
  const double o =
      model.forward_eval(Tensor::from({1, feature.size()}, {feature.begin(), feature.end()}))
          .item();
  return o >= 0 ? 1.0 / (1.0 + std::exp(-o)) : std::exp(o) / (1.0 + std::exp(o));
}

double mlp_score(const MlpModel& model, const InvarianceFeature& feature) {
  return mlp_score(model, feature.values);
}

namespace {

// One shuffled SGD pass; returns the mean loss.
double sgd_epoch(MlpModel& model, const std::vector<InvarianceFeature>& features,
                 const std::vector<int>& labels, const MlpConfig& config, std::size_t epoch,
                 std::vector<std::vector<double>>& velocity, ClassWeights* used) {
  const ClassWeights w = inverse_frequency_weights(labels);
  if (used) *used = w;
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(config.seed, 0x100 + epoch));
  rng.shuffle(order.begin(), order.end());
  auto params = model.parameters();
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch) {
    std::size_t end = std::min(order.size(), start + config.batch);
    // A trailing single row cannot be batch-normalized; fold it into this batch.
    if (order.size() - end == 1) end = order.size();
    if (end - start < 2) break;
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<double> target, weight;
    for (auto r : rows) {
      target.push_back(labels[r] > 0 ? 1.0 : 0.0);
      weight.push_back(labels[r] > 0 ? w.error : w.correct);
    }
    const Tensor x = feature_matrix(features, rows);
    const Tensor loss = bce_with_logits(model.forward_train(x, rng), target, weight);
    INVDET_REQUIRE(std::isfinite(loss.item()), ErrorCode::kDivergence, "mlp training diverged");
    total += loss.item() * static_cast<double>(rows.size());
    for (auto& p : params) p.zero_grad();
    loss.backward();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto data = params[k].mutable_data();
      const auto g = params[k].grad();
      for (std::size_t i = 0; i < data.size(); ++i) {
        velocity[k][i] = config.momentum * velocity[k][i] + g[i] + config.weight_decay * data[i];
        data[i] -= config.lr * velocity[k][i];
      }
    }
    if (end == order.size()) break;
  }
  return total / static_cast<double>(features.size());
}

void check_labels(const std::vector<int>& labels) {
  std::size_t errors = 0;
  for (int l : labels) {
    INVDET_REQUIRE(l == 1 || l == -1, ErrorCode::kInvalidArgument, "mlp: labels must be +1 or -1");
    errors += l > 0 ? 1 : 0;
  }
  INVDET_REQUIRE(errors > 0 && errors < labels.size(), ErrorCode::kInvalidArgument,
                 "mlp: training set needs both correct and erroneous examples");
}

}  // namespace

MlpModel train_mlp(const std::vector<InvarianceFeature>& features, const std::vector<int>& labels,
                   const MlpConfig& config, MlpTrainReport* report) {
  INVDET_REQUIRE(!features.empty() && features.size() == labels.size(), ErrorCode::kInvalidArgument,
                 "train_mlp: features and labels must be non-empty and aligned");
  check_labels(labels);
  MlpModel model(features.front().values.size(), config);
  model.set_trainable(true);
  std::vector<std::vector<double>> velocity;
  for (const auto& p : model.parameters()) velocity.emplace_back(p.numel(), 0.0);
  MlpTrainReport local;
  for (int l : labels) (l > 0 ? local.errors : local.corrects)++;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    local.epoch_loss.push_back(
        sgd_epoch(model, features, labels, config, e, velocity, &local.weights));
  }
  model.set_trainable(false);
  if (report) *report = local;
  return model;
}

InvarianceFeature image_feature(const ClassifierModel& classifier, const LabeledImage& image,
                                const std::vector<Transform>& transforms, std::size_t top_k) {
  Dataset one{image};
  return dataset_features(classifier, one, transforms, top_k).front();
}

std::vector<InvarianceFeature> dataset_features(const ClassifierModel& classifier,
                                                const Dataset& images,
                                                const std::vector<Transform>& transforms,
                                                std::size_t top_k) {
  const auto original = batch_logits(classifier, images);
  std::vector<std::vector<std::vector<double>>> per_transform;
  for (const auto& t : transforms) {
    Dataset moved;
    moved.reserve(images.size());
    for (const auto& im : images) moved.push_back(t.apply(im));
    per_transform.push_back(batch_logits(classifier, moved));
  }
  std::vector<InvarianceFeature> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::vector<std::vector<double>> tz;
    for (const auto& z : per_transform) tz.push_back(z[i]);
    out.push_back(build_feature(original[i], tz, top_k, images[i].id));
  }
  return out;
}

MlpModel train_mlp_detector(const ClassifierModel& classifier, const Dataset& images,
                            const std::vector<Transform>& transforms, std::size_t top_k,
                            const MlpConfig& config, const DetectorAugmentation& augmentation,
                            MlpTrainReport* report) {
  INVDET_REQUIRE(!images.empty(), ErrorCode::kInvalidArgument, "train_mlp_detector: no images");
  const ImageDims dims = images.front().dims;
  const Transform flip(TransformSpec::hflip(), dims);

  // Clean labels decide whether both classes exist at all.
  const auto clean_logits = batch_logits(classifier, images);
  std::vector<int> clean_labels;
  for (std::size_t i = 0; i < images.size(); ++i) {
    clean_labels.push_back(error_label(argmax(clean_logits[i]), images[i].label));
  }
  check_labels(clean_labels);

  const std::size_t input = (transforms.size() + 1) * top_k;
  MlpModel model(input, config);
  model.set_trainable(true);
  std::vector<std::vector<double>> velocity;
  for (const auto& p : model.parameters()) velocity.emplace_back(p.numel(), 0.0);
  MlpTrainReport local;
  for (int l : clean_labels) (l > 0 ? local.errors : local.corrects)++;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Dataset epoch_images;
    if (augmentation.enabled) {
      Rng rng(derive_seed(config.seed, 0x200 + epoch));
      epoch_images.reserve(images.size());
      for (const auto& im : images) {
        LabeledImage a = im;
        if (rng.bernoulli(augmentation.flip_probability)) a = flip.apply(a);
        const double b = rng.uniform(-augmentation.brightness, augmentation.brightness);
        const double c = rng.uniform(1.0 - augmentation.contrast, 1.0 + augmentation.contrast);
        a = Transform(TransformSpec::brightness(b), dims).apply(a);
        a = Transform(TransformSpec::contrast(c), dims).apply(a);
        epoch_images.push_back(std::move(a));
      }
    } else {
      epoch_images = images;
    }
    const auto features = dataset_features(classifier, epoch_images, transforms, top_k);
    std::vector<int> epoch_labels;
    const auto z = batch_logits(classifier, epoch_images);
    for (std::size_t i = 0; i < epoch_images.size(); ++i) {
      epoch_labels.push_back(error_label(argmax(z[i]), epoch_images[i].label));
    }
    local.epoch_loss.push_back(
        sgd_epoch(model, features, epoch_labels, config, epoch, velocity, &local.weights));
  }
  model.set_trainable(false);
  if (report) *report = local;
  return model;
}

std::size_t default_top_k(std::size_t num_classes) { return std::min<std::size_t>(num_classes, 5); }

std::vector<TransformSpec> default_mlp_transforms() {
  return {TransformSpec::hflip(), TransformSpec::gamma(0.6), TransformSpec::contrast(1.2),
          TransformSpec::grayscale(), TransformSpec::hblur(3)};
}

}  // namespace invdet
