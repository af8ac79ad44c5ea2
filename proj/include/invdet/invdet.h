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

#ifndef INVDET_INVDET_H_
#define INVDET_INVDET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define INVDET_API __declspec(dllexport)
#else
#define INVDET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum invdet_status {
  INVDET_OK = 0,
  INVDET_INVALID_ARGUMENT = 1,
  INVDET_SHAPE_MISMATCH = 2,
  INVDET_DOMAIN = 3,
  INVDET_IO = 4,
  INVDET_FORMAT = 5,
  INVDET_DIVERGENCE = 6,
  INVDET_RUNTIME = 7,
} invdet_status;

typedef struct invdet_dataset invdet_dataset;
typedef struct invdet_classifier invdet_classifier;
typedef struct invdet_mlp invdet_mlp;

INVDET_API const char* invdet_version(void);
INVDET_API const char* invdet_status_name(invdet_status status);
// Message of the last failing call on this thread; "" after a success.
INVDET_API const char* invdet_last_error(void);

// Datasets. config_text uses the dataset.* and split.* keys; the handle
// holds every image of the source.
INVDET_API invdet_status invdet_dataset_load(const char* config_text, invdet_dataset** out);
INVDET_API invdet_status invdet_dataset_shapes(size_t n, size_t num_classes, size_t image_size,
                                               uint64_t seed, invdet_dataset** out);
INVDET_API void invdet_dataset_free(invdet_dataset* dataset);
INVDET_API size_t invdet_dataset_size(const invdet_dataset* dataset);
INVDET_API invdet_status invdet_dataset_dims(const invdet_dataset* dataset, size_t* channels,
                                             size_t* height, size_t* width);
// Copies image `index` (C*H*W doubles in [0, 1], planar) into pixels.
INVDET_API invdet_status invdet_dataset_image(const invdet_dataset* dataset, size_t index,
                                              double* pixels, size_t pixel_count, size_t* label,
                                              uint64_t* id);

// Classifiers.
INVDET_API invdet_status invdet_classifier_load(const char* path, invdet_classifier** out);
INVDET_API invdet_status invdet_classifier_save(const invdet_classifier* classifier,
                                                const char* path);
INVDET_API void invdet_classifier_free(invdet_classifier* classifier);
INVDET_API size_t invdet_classifier_num_classes(const invdet_classifier* classifier);
INVDET_API invdet_status invdet_classifier_logits(const invdet_classifier* classifier,
                                                  const double* pixels, size_t pixel_count,
                                                  double* logits, size_t num_classes);
// D_KL(F(x) || F(t(x))) at temperature T; transform is a spec such as
// "hflip" or "zoom:1.05".
INVDET_API invdet_status invdet_dkl_score(const invdet_classifier* classifier, const double* pixels,
                                          size_t pixel_count, const char* transform,
                                          double temperature, double* score);
INVDET_API invdet_status invdet_msr_score(const invdet_classifier* classifier, const double* pixels,
                                          size_t pixel_count, double* score);

// Learned natural-error detector.
INVDET_API invdet_status invdet_mlp_load(const char* path, invdet_mlp** out);
INVDET_API void invdet_mlp_free(invdet_mlp* mlp);
INVDET_API size_t invdet_mlp_input_size(const invdet_mlp* mlp);
INVDET_API invdet_status invdet_mlp_score(const invdet_mlp* mlp, const double* feature,
                                          size_t feature_size, double* score);

// Numerics.
INVDET_API invdet_status invdet_softmax(const double* logits, size_t n, double temperature,
                                        double* probs);
INVDET_API invdet_status invdet_kl_divergence(const double* p, const double* q, size_t n,
                                              double* out);
// positive[i] != 0 marks scores that should be rejected.
INVDET_API invdet_status invdet_auroc(const double* scores, const int* positive, size_t n,
                                      double* out);
INVDET_API invdet_status invdet_calibrate_threshold(const double* negative_scores, size_t n,
                                                    double target_fpr, double* threshold);

// Pipeline commands: train, train-detector, attack, score, eval, report.
// config_text is "key = value" lines; outputs go to outdir, starting with
// the echoed configuration in outdir/config.txt.
INVDET_API invdet_status invdet_run(const char* command, const char* config_text,
                                    const char* outdir);

#ifdef __cplusplus
}  // extern "C"
#endif

#endif  // INVDET_INVDET_H_
