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

#include <invdet/invdet.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <new>
#include <span>
#include <string>

#include "capi/commands.hpp"
#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "data/source.hpp"
#include "detectors/detectors.hpp"
#include "evaluation/metrics.hpp"
#include "mlp/mlp_detector.hpp"

struct invdet_dataset {
  invdet::Dataset images;
};

struct invdet_classifier {
  invdet::ClassifierModel model;
};

struct invdet_mlp {
  invdet::MlpModel model;
};

namespace {

thread_local std::string g_last_error;

invdet_status set_error(invdet_status status, const std::string& what) {
  g_last_error = what;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
invdet_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return INVDET_OK;
  } catch (const invdet::Error& e) {
    return set_error(static_cast<invdet_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(INVDET_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return set_error(INVDET_RUNTIME, e.what());
  } catch (...) {
    return set_error(INVDET_RUNTIME, "unknown error");
  }
}

void need(bool cond, const char* what) {
  if (!cond) invdet::fail(invdet::ErrorCode::kInvalidArgument, what);
}

invdet::LabeledImage image_from(const invdet::ClassifierModel& model, const double* pixels,
                                size_t count) {
  need(pixels != nullptr, "pixels is null");
  invdet::LabeledImage im;
  im.dims = model.input_dims();
  INVDET_REQUIRE(
      count == im.dims.size(), invdet::ErrorCode::kShapeMismatch,
      "expected " + std::to_string(im.dims.size()) + " pixels, got " + std::to_string(count));
  im.pixels.assign(pixels, pixels + count);
  return im;
}

}  // namespace

extern "C" {

const char* invdet_version(void) { return "1.0.0"; }

const char* invdet_status_name(invdet_status status) {
  switch (status) {
    case INVDET_OK:
      return "ok";
    case INVDET_INVALID_ARGUMENT:
      return "invalid argument";
    case INVDET_SHAPE_MISMATCH:
      return "shape mismatch";
    case INVDET_DOMAIN:
      return "domain error";
    case INVDET_IO:
      return "i/o error";
    case INVDET_FORMAT:
      return "format error";
    case INVDET_DIVERGENCE:
      return "divergence";
    case INVDET_RUNTIME:
      return "runtime error";
  }
  return "unknown status";
}

const char* invdet_last_error(void) { return g_last_error.c_str(); }

invdet_status invdet_dataset_load(const char* config_text, invdet_dataset** out) {
  return guarded([&] {
    need(config_text != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    invdet::LoadedData data =
        invdet::load_data(invdet::dataset_spec(invdet::KvConfig::parse(config_text)));
    invdet::Dataset all = std::move(data.train);
    all.insert(all.end(), data.detector_train.begin(), data.detector_train.end());
    all.insert(all.end(), data.detector_eval.begin(), data.detector_eval.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    *out = new invdet_dataset{std::move(all)};
  });
}

invdet_status invdet_dataset_shapes(size_t n, size_t num_classes, size_t image_size, uint64_t seed,
                                    invdet_dataset** out) {
  return guarded([&] {
    need(out != nullptr, "out is null");
    *out = nullptr;
    invdet::ShapesConfig c;
    c.n = n;
    c.num_classes = num_classes;
    c.image_size = image_size;
    c.seed = seed;
    *out = new invdet_dataset{invdet::generate_shapes(c)};
  });
}

void invdet_dataset_free(invdet_dataset* dataset) { delete dataset; }

size_t invdet_dataset_size(const invdet_dataset* dataset) {
  return dataset ? dataset->images.size() : 0;
}

invdet_status invdet_dataset_dims(const invdet_dataset* dataset, size_t* channels, size_t* height,
                                  size_t* width) {
  return guarded([&] {
    need(dataset != nullptr && channels && height && width, "null argument");
    need(!dataset->images.empty(), "dataset is empty");
    const auto& d = dataset->images.front().dims;
    *channels = d.channels;
    *height = d.height;
    *width = d.width;
  });
}

invdet_status invdet_dataset_image(const invdet_dataset* dataset, size_t index, double* pixels,
                                   size_t pixel_count, size_t* label, uint64_t* id) {
  return guarded([&] {
    need(dataset != nullptr && pixels != nullptr, "null argument");
    need(index < dataset->images.size(), "image index out of range");
    const auto& im = dataset->images[index];
    INVDET_REQUIRE(pixel_count == im.pixels.size(), invdet::ErrorCode::kShapeMismatch,
                   "pixel buffer has the wrong size");
    std::copy(im.pixels.begin(), im.pixels.end(), pixels);
    if (label) *label = im.label;
    if (id) *id = im.id;
  });
}

invdet_status invdet_classifier_load(const char* path, invdet_classifier** out) {
  return guarded([&] {
    need(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    auto model = invdet::ClassifierModel::from_checkpoint(invdet::Checkpoint::load(path));
    *out = new invdet_classifier{std::move(model)};
  });
}

invdet_status invdet_classifier_save(const invdet_classifier* classifier, const char* path) {
  return guarded([&] {
    need(classifier != nullptr && path != nullptr, "null argument");
    classifier->model.to_checkpoint().save(path);
  });
}

void invdet_classifier_free(invdet_classifier* classifier) { delete classifier; }

size_t invdet_classifier_num_classes(const invdet_classifier* classifier) {
  return classifier ? classifier->model.num_classes() : 0;
}

invdet_status invdet_classifier_logits(const invdet_classifier* classifier, const double* pixels,
                                       size_t pixel_count, double* logits, size_t num_classes) {
  return guarded([&] {
    need(classifier != nullptr && logits != nullptr, "null argument");
    INVDET_REQUIRE(num_classes == classifier->model.num_classes(),
                   invdet::ErrorCode::kShapeMismatch, "logit buffer has the wrong size");
    const auto z =
        invdet::image_logits(classifier->model, image_from(classifier->model, pixels, pixel_count));
    std::copy(z.begin(), z.end(), logits);
  });
}

invdet_status invdet_dkl_score(const invdet_classifier* classifier, const double* pixels,
                               size_t pixel_count, const char* transform, double temperature,
                               double* score) {
  return guarded([&] {
    need(classifier != nullptr && transform != nullptr && score != nullptr, "null argument");
    const auto im = image_from(classifier->model, pixels, pixel_count);
    const invdet::Transform t(invdet::TransformSpec::parse(transform), im.dims);
    *score = invdet::dkl_score(classifier->model, im, t, temperature);
  });
}

invdet_status invdet_msr_score(const invdet_classifier* classifier, const double* pixels,
                               size_t pixel_count, double* score) {
  return guarded([&] {
    need(classifier != nullptr && score != nullptr, "null argument");
    *score =
        invdet::msr_score(classifier->model, image_from(classifier->model, pixels, pixel_count));
  });
}

invdet_status invdet_mlp_load(const char* path, invdet_mlp** out) {
  return guarded([&] {
    need(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    auto model = invdet::MlpModel::from_checkpoint(invdet::Checkpoint::load(path));
    *out = new invdet_mlp{std::move(model)};
  });
}

void invdet_mlp_free(invdet_mlp* mlp) { delete mlp; }

size_t invdet_mlp_input_size(const invdet_mlp* mlp) { return mlp ? mlp->model.input_size() : 0; }

invdet_status invdet_mlp_score(const invdet_mlp* mlp, const double* feature, size_t feature_size,
                               double* score) {
  return guarded([&] {
    need(mlp != nullptr && feature != nullptr && score != nullptr, "null argument");
    *score = invdet::mlp_score(mlp->model, std::span<const double>(feature, feature_size));
  });
}

invdet_status invdet_softmax(const double* logits, size_t n, double temperature, double* probs) {
  return guarded([&] {
    need(logits != nullptr && probs != nullptr, "null argument");
    const auto p = invdet::softmax_t(std::span<const double>(logits, n), temperature);
    std::copy(p.probs.begin(), p.probs.end(), probs);
  });
}

invdet_status invdet_kl_divergence(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    need(p != nullptr && q != nullptr && out != nullptr, "null argument");
    *out = invdet::kl_divergence(std::span<const double>(p, n), std::span<const double>(q, n));
  });
}

invdet_status invdet_auroc(const double* scores, const int* positive, size_t n, double* out) {
  return guarded([&] {
    need(scores != nullptr && positive != nullptr && out != nullptr, "null argument");
    std::vector<invdet::ScoredSample> samples(n);
    for (size_t i = 0; i < n; ++i) samples[i] = {scores[i], positive[i] != 0};
    *out = invdet::mann_whitney_auroc(samples);
  });
}

invdet_status invdet_calibrate_threshold(const double* negative_scores, size_t n, double target_fpr,
                                         double* threshold) {
  return guarded([&] {
    need(negative_scores != nullptr && threshold != nullptr, "null argument");
    *threshold =
        invdet::calibrate_threshold(std::span<const double>(negative_scores, n), target_fpr)
            .threshold;
  });
}

invdet_status invdet_run(const char* command, const char* config_text, const char* outdir) {
  return guarded([&] {
    need(command != nullptr && config_text != nullptr && outdir != nullptr, "null argument");
    invdet::run_command(command, invdet::KvConfig::parse(config_text), outdir);
  });
}

}  // extern "C"
