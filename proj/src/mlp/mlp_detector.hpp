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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "classifier/classifier.hpp"
#include "core/checkpoint.hpp"
#include "transforms/transforms.hpp"

namespace invdet {

// Logits of an image and of its m transformed versions, all reordered by the
// descending order of the original logits, truncated to top_k entries and
// concatenated original-first. Length (m + 1) * top_k.
struct InvarianceFeature {
  std::vector<double> values;
  std::uint64_t image_id = 0;
  std::size_t top_k = 0;
  std::size_t num_transforms = 0;
};

// Stable descending argsort; equal values keep ascending index order.
std::vector<std::size_t> descending_order(std::span<const double> values);

InvarianceFeature build_feature(std::span<const double> original_logits,
                                const std::vector<std::vector<double>>& transformed_logits,
                                std::size_t top_k, std::uint64_t image_id = 0);

// +1 when the prediction is wrong, -1 when it is right. Training maps these
// to BCE targets 1 / 0.
int error_label(std::size_t predicted, std::size_t label);

struct ClassWeights {
  double error = 1.0;
  double correct = 1.0;
};
// Inverse class frequency, normalized so the mean weight over the set is 1.
ClassWeights inverse_frequency_weights(const std::vector<int>& labels);

struct MlpConfig {
  std::size_t hidden = 30;
  double dropout = 0.5;
  // ReLU then batchnorm in each hidden block; false swaps the two.
  bool bn_after_relu = true;
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
};

// dense(in,30) relu bn dropout dense(30,30) relu bn dropout dense(30,1)
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(std::size_t input_size, const MlpConfig& config);

  std::size_t input_size() const { return input_size_; }

  // Eval mode: running batchnorm statistics, no dropout. features [B, D].
  Tensor forward_eval(const Tensor& features) const;
  // Train mode: batch statistics (running stats updated), dropout from rng.
  Tensor forward_train(const Tensor& features, Rng& rng);

  std::vector<Tensor> parameters() const;
  void set_trainable(bool on);

  Checkpoint to_checkpoint() const;
  static MlpModel from_checkpoint(const Checkpoint& ck);

 private:
  struct Block {
    Tensor weight, bias;  // dense
    Tensor gamma, beta;   // batchnorm affine
    std::vector<double> running_mean, running_var;
  };
  Tensor block_eval(const Block& b, const Tensor& x) const;
  Tensor block_train(Block& b, const Tensor& x, Rng& rng);

  std::size_t input_size_ = 0;
  std::size_t hidden_ = 0;
  double dropout_ = 0.5;
  bool bn_after_relu_ = true;
  std::vector<Block> blocks_;
  Tensor out_weight_, out_bias_;
};

// Sigmoid of the output logit; probability that the classification is wrong.
double mlp_score(const MlpModel& model, std::span<const double> feature);
double mlp_score(const MlpModel& model, const InvarianceFeature& feature);

struct MlpTrainReport {
  std::vector<double> epoch_loss;
  ClassWeights weights;
  std::size_t errors = 0;
  std::size_t corrects = 0;
};

// Fixed features with labels in {+1, -1}. Both classes must be present.
MlpModel train_mlp(const std::vector<InvarianceFeature>& features, const std::vector<int>& labels,
                   const MlpConfig& config, MlpTrainReport* report = nullptr);

// Features of one image under the classifier and transform set.
InvarianceFeature image_feature(const ClassifierModel& classifier, const LabeledImage& image,
                                const std::vector<Transform>& transforms, std::size_t top_k);
std::vector<InvarianceFeature> dataset_features(const ClassifierModel& classifier,
                                                const Dataset& images,
                                                const std::vector<Transform>& transforms,
                                                std::size_t top_k);

struct DetectorAugmentation {
  bool enabled = true;
  double flip_probability = 0.5;
  double brightness = 0.1;  // delta ~ U(-b, b)
  double contrast = 0.2;    // factor ~ U(1 - c, 1 + c)
};

// Trains the learned detector on a held-out image set. Each epoch the
// images are randomly augmented (before the fixed transform set), logits and
// error labels are regenerated, and one pass of SGD runs over them.
MlpModel train_mlp_detector(const ClassifierModel& classifier, const Dataset& images,
                            const std::vector<Transform>& transforms, std::size_t top_k,
                            const MlpConfig& config, const DetectorAugmentation& augmentation,
                            MlpTrainReport* report = nullptr);

// Default N' = min(N, 5).
std::size_t default_top_k(std::size_t num_classes);
// hflip, gamma:0.6, contrast:1.2, gray, hblur:3
std::vector<TransformSpec> default_mlp_transforms();

}  // namespace invdet
