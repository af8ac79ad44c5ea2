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
#include <optional>
#include <span>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "data/dataset.hpp"

namespace invdet {

// Anything that maps an image batch [B,C,H,W] to class logits [B,K]
// differentiably. Attacks are written against this interface so they run
// unchanged on the plain classifier and on the combined classifier+detector.
class LogitModel {
 public:
  virtual ~LogitModel() = default;
  virtual Tensor logits(const Tensor& images) const = 0;
  virtual std::size_t num_classes() const = 0;
};

enum class Mode {
  kEval,        // dropout off
  kTrain,       // dropout on
  kStochastic,  // dropout on at inference (MC-dropout passes)
};

struct Layer {
  // kCenter subtracts each image's per-channel spatial mean.
  enum class Kind { kConv, kRelu, kMaxPool, kFlatten, kDense, kDropout, kCenter };
  Kind kind;
  Tensor weight;  // conv [O,C,KH,KW] / dense [in,out]
  Tensor bias;    // [O] / [out]
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t pool = 2;
  double rate = 0.0;
};

class ClassifierModel : public LogitModel {
 public:
  ClassifierModel() = default;

  // center conv(8, 3x3) relu pool2 conv(16, 3x3) relu pool2 flatten dense(hidden)
  // relu dropout dense(N). He-normal weights, zero biases.
  static ClassifierModel make_default(ImageDims input, std::size_t num_classes, std::uint64_t seed,
                                      double dropout_rate = 0.5, std::size_t hidden = 32);

  // rng is required for kTrain/kStochastic when a dropout layer is active.
  Tensor forward(const Tensor& images, Mode mode, Rng* rng = nullptr) const;
  Tensor logits(const Tensor& images) const override { return forward(images, Mode::kEval); }
  std::size_t num_classes() const override { return num_classes_; }
  const ImageDims& input_dims() const { return input_; }

  bool has_dropout() const;
  double dropout_rate() const;
  void set_dropout_rate(double rate);

  std::vector<Tensor> parameters() const;
  // Parameters only accumulate gradients while trainable. Frozen models can
  // be scored and attacked from several threads at once.
  void set_trainable(bool on);

  Checkpoint to_checkpoint() const;
  static ClassifierModel from_checkpoint(const Checkpoint& ck);

  const std::vector<Layer>& layers() const { return layers_; }

 private:
  void check_input(const Tensor& images) const;

  ImageDims input_;
  std::size_t num_classes_ = 0;
  std::vector<Layer> layers_;
};

// Temperature-scaled posterior over N classes.
struct PosteriorDist {
  std::vector<double> probs;
  double temperature = 1.0;
};

// exp(z_c / T) / sum_i exp(z_i / T) with max subtraction. T must be > 0.
PosteriorDist softmax_t(std::span<const double> logits, double temperature = 1.0);

// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Eval-mode logits for one image.
std::vector<double> image_logits(const ClassifierModel& model, const LabeledImage& image);
// Eval-mode logits for many images, row-major [n, N].
std::vector<std::vector<double>> batch_logits(const ClassifierModel& model, const Dataset& images,
                                              std::size_t batch_size = 64);
std::size_t predict(const ClassifierModel& model, const LabeledImage& image);

struct TrainConfig {
  std::size_t epochs = 12;
  double lr = 0.04;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  bool augment_flip = false;
  // lr is multiplied by lr_gamma at each of these epochs.
  std::vector<std::size_t> lr_steps = {8, 11};
  double lr_gamma = 0.2;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;  // NaN when no eval set was given
};

// Mini-batch SGD with momentum on mean cross-entropy. Deterministic given
// config.seed. The model is left frozen (see set_trainable) on return.
// Throws kDivergence on a non-finite loss.
TrainReport train_classifier(ClassifierModel& model, const Dataset& train_set,
                             const TrainConfig& config, const Dataset* eval_set = nullptr);

double accuracy(const ClassifierModel& model, const Dataset& images);

// K forward passes with dropout active, each with its own seeded stream.
std::vector<PosteriorDist> stochastic_posteriors(const ClassifierModel& model,
                                                 const LabeledImage& image, std::size_t passes,
                                                 std::uint64_t seed, double temperature = 1.0);

// Mean cross-entropy of logits [B,N] against labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

}  // namespace invdet
