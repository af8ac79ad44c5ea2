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

#include "evaluation/run_config.hpp"

namespace invdet {

namespace {

std::size_t get_size(const KvConfig& kv, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(kv.get_u64(key, fallback));
}

}  // namespace

AttackConfig attack_config(const KvConfig& kv) {
  AttackConfig c;
  c.kind = parse_attack_kind(kv.get("attack.kind", attack_kind_name(c.kind)));
  c.targeted = kv.get_bool("attack.targeted", c.targeted);
  c.confidence = kv.get_double("attack.k", c.confidence);
  c.epsilon = kv.get_double("attack.epsilon", c.epsilon);
  c.step = kv.get_double("attack.step", c.step);
  c.pgd_iterations = get_size(kv, "attack.pgd_iterations", c.pgd_iterations);
  c.random_start = kv.get_bool("attack.random_start", c.random_start);
  c.search_steps = get_size(kv, "attack.search_steps", c.search_steps);
  c.iterations = get_size(kv, "attack.iterations", c.iterations);
  c.initial_c = kv.get_double("attack.initial_c", c.initial_c);
  c.c_min = kv.get_double("attack.c_min", c.c_min);
  c.c_max = kv.get_double("attack.c_max", c.c_max);
  c.lr = kv.get_double("attack.lr", c.lr);
  c.abort_early = kv.get_bool("attack.abort_early", c.abort_early);
  c.batch = get_size(kv, "attack.batch", c.batch);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

TrainConfig train_config(const KvConfig& kv) {
  TrainConfig c;
  c.epochs = get_size(kv, "train.epochs", c.epochs);
  c.lr = kv.get_double("train.lr", c.lr);
  c.momentum = kv.get_double("train.momentum", c.momentum);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.batch = get_size(kv, "train.batch", c.batch);
  c.augment_flip = kv.get_bool("train.augment_flip", c.augment_flip);
  if (kv.has("train.lr_steps")) {
    c.lr_steps.clear();
    for (double s : kv.get_doubles("train.lr_steps", {}))
      c.lr_steps.push_back(static_cast<std::size_t>(s));
  }
  c.lr_gamma = kv.get_double("train.lr_gamma", c.lr_gamma);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

MlpConfig mlp_config(const KvConfig& kv) {
  MlpConfig c;
  c.hidden = get_size(kv, "mlp.hidden", c.hidden);
  c.dropout = kv.get_double("mlp.dropout", c.dropout);
  c.bn_after_relu = kv.get_bool("mlp.bn_after_relu", c.bn_after_relu);
  c.epochs = get_size(kv, "mlp.epochs", c.epochs);
  c.batch = get_size(kv, "mlp.batch", c.batch);
  c.lr = kv.get_double("mlp.lr", c.lr);
  c.momentum = kv.get_double("mlp.momentum", c.momentum);
  c.weight_decay = kv.get_double("mlp.weight_decay", c.weight_decay);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

DetectorAugmentation detector_augmentation(const KvConfig& kv) {
  DetectorAugmentation a;
  a.enabled = kv.get_bool("mlp.augment", a.enabled);
  a.flip_probability = kv.get_double("mlp.flip_probability", a.flip_probability);
  a.brightness = kv.get_double("mlp.brightness", a.brightness);
  a.contrast = kv.get_double("mlp.contrast", a.contrast);
  return a;
}

}  // namespace invdet
