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

#include "attacks/attacks.hpp"
#include "classifier/classifier.hpp"
#include "core/kv_config.hpp"
#include "mlp/mlp_detector.hpp"

namespace invdet {

// Typed views of a key = value run configuration. Missing keys keep the
// struct defaults.
//   attack.kind, attack.targeted, attack.k, attack.epsilon, attack.step,
//   attack.pgd_iterations, attack.random_start, attack.search_steps,
//   attack.iterations, attack.initial_c, attack.c_min, attack.c_max,
//   attack.lr, attack.abort_early, attack.batch, seed
AttackConfig attack_config(const KvConfig& kv);
//   train.epochs, train.lr, train.momentum, train.weight_decay, train.batch,
//   train.augment_flip, train.lr_steps, train.lr_gamma, seed
TrainConfig train_config(const KvConfig& kv);
//   mlp.hidden, mlp.dropout, mlp.bn_after_relu, mlp.epochs, mlp.batch,
//   mlp.lr, mlp.momentum, mlp.weight_decay, seed
MlpConfig mlp_config(const KvConfig& kv);
//   mlp.augment, mlp.flip_probability, mlp.brightness, mlp.contrast
DetectorAugmentation detector_augmentation(const KvConfig& kv);

}  // namespace invdet
