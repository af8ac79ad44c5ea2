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

// Command-line front end. Everything goes through the C API.

#include <invdet/invdet.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace {

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help)
      : sub_(app.add_subcommand(name, help)), name_(name) {
    sub_->add_option("-c,--config", config_file_, "key = value configuration file");
    sub_->add_option("-o,--out", outdir_, "output directory")->capture_default_str();
    sub_->add_option("--set", sets_, "extra key=value settings (repeatable)");
    opt("--jobs", "jobs", "worker threads");
    opt("--seed", "seed", "master seed");
  }

  Command& opt(const std::string& flag, const std::string& key, const std::string& help) {
    auto& slot = values_[key];
    options_.emplace_back(sub_->add_option(flag, slot, help), key);
    return *this;
  }
  Command& flag(const std::string& flag, const std::string& key, const std::string& help) {
    switches_.emplace_back(sub_->add_flag(flag, help), key);
    return *this;
  }
  Command& dataset() {
    opt("--dataset", "dataset", "shapes | idx | cifar10");
    opt("--dataset-n", "dataset.n", "number of generated shapes images");
    opt("--classes", "dataset.classes", "number of classes");
    opt("--size", "dataset.size", "generated image size");
    opt("--dataset-seed", "dataset.seed", "generator seed");
    opt("--dataset-images", "dataset.images", "IDX image file");
    opt("--dataset-labels", "dataset.labels", "IDX label file");
    opt("--dataset-files", "dataset.files", "CIFAR-10 batch files, comma-separated");
    opt("--split", "split.fractions", "train,detector-train,detector-eval fractions");
    opt("--split-seed", "split.seed", "split seed");
    return *this;
  }
  Command& attack_flags(const std::string& k_key) {
    opt("--kind", "attack.kind", "fgsm | pgd | cw");
    flag("--targeted", "attack.targeted", "targeted attack");
    opt("--k", k_key, "C&W confidence");
    opt("--epsilon", "attack.epsilon", "L-inf budget for fgsm / pgd");
    opt("--step", "attack.step", "pgd step size");
    opt("--pgd-iterations", "attack.pgd_iterations", "pgd iterations");
    flag("--random-start", "attack.random_start", "pgd random start");
    opt("--search-steps", "attack.search_steps", "C&W binary search steps");
    opt("--iterations", "attack.iterations", "C&W iterations per search step");
    opt("--initial-c", "attack.initial_c", "C&W initial constant");
    opt("--attack-lr", "attack.lr", "C&W Adam learning rate");
    opt("--attack-batch", "attack.batch", "images per optimization batch");
    return *this;
  }

  CLI::App* app() const { return sub_; }

  // Config file, then --set, then named flags.
  std::string config_text() const {
    std::string text;
    if (!config_file_.empty()) {
      std::ifstream in(config_file_);
      if (!in) throw std::ios_base::failure("cannot read config file " + config_file_);
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str() + "\n";
    }
    for (const auto& s : sets_) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::runtime_error("--set expects key=value, got " + s);
      text += s.substr(0, eq) + " = " + s.substr(eq + 1) + "\n";
    }
    for (const auto& [o, key] : options_) {
      if (o->count() > 0) text += key + " = " + values_.at(key) + "\n";
    }
    for (const auto& [o, key] : switches_) {
      if (o->count() > 0) text += key + " = true\n";
    }
    return text;
  }
  const std::string& name() const { return name_; }
  const std::string& outdir() const { return outdir_; }

 private:
  CLI::App* sub_;
  std::string name_;
  std::string config_file_;
  std::string outdir_ = "invdet_out";
  std::vector<std::string> sets_;
  std::map<std::string, std::string> values_;
  std::vector<std::pair<CLI::Option*, std::string>> options_, switches_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformation-invariance error detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(invdet_version()));

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    commands.push_back(std::make_unique<Command>(app, name, help));
    return *commands.back();
  };

  add("train", "train the classifier F")
      .dataset()
      .opt("--epochs", "train.epochs", "training epochs")
      .opt("--lr", "train.lr", "learning rate")
      .opt("--batch", "train.batch", "mini-batch size")
      .flag("--augment-flip", "train.augment_flip", "random horizontal flips during training")
      .opt("--dropout", "classifier.dropout", "dropout rate of the hidden layer")
      .opt("--output", "output", "checkpoint file name inside the output directory");

  add("train-detector", "train the MLP natural-error detector")
      .dataset()
      .opt("--classifier", "classifier", "classifier checkpoint")
      .opt("--mlp-transforms", "mlp.transforms", "transform set for the features")
      .opt("--top-k", "mlp.top_k", "logit positions kept per transform")
      .opt("--mlp-epochs", "mlp.epochs", "training epochs")
      .opt("--mlp-lr", "mlp.lr", "learning rate")
      .opt("--output", "output", "checkpoint file name inside the output directory");

  add("attack", "run adversarial attacks")
      .dataset()
      .opt("--classifier", "classifier", "classifier checkpoint")
      .attack_flags("attack.k")
      .opt("--manifest", "manifest", "CSV of image ids and optional targets")
      .opt("--images", "images", "split to draw images from")
      .opt("--count", "count", "number of correctly classified images to attack")
      .opt("--detector", "attack.detector", "none (UD) or dkl (KD attack on G)")
      .opt("--transform", "transform", "detector transform for KD")
      .opt("--T", "T", "detector temperature for KD")
      .opt("--tau", "tau", "detector threshold for KD (default: calibrated)")
      .opt("--fpr", "fpr", "target false positive rate for calibration");

  add("score", "score images with a detector")
      .dataset()
      .opt("--classifier", "classifier", "classifier checkpoint")
      .opt("--detector", "detector", "dkl | msr | dropout | mlp")
      .opt("--transform", "transform", "transform or comma-separated list for dkl")
      .opt("--aggregate", "aggregate", "single | mean | max over transforms")
      .opt("--T", "T", "temperature")
      .opt("--images", "images", "split to score")
      .opt("--adversarials", "adversarials", "score adversarial images from an attack run")
      .opt("--mlp", "mlp", "MLP detector checkpoint")
      .opt("--fpr", "fpr", "target false positive rate for the threshold");

  add("eval", "run an experiment suite")
      .dataset()
      .attack_flags("k")
      .opt("--suite", "suite", "ud-sweep | transform-table | kd-temperature | natural-errors")
      .opt("--experiment", "experiment", "experiment id (output subdirectory)")
      .opt("--classifier", "classifier", "classifier checkpoint")
      .opt("--mlp", "mlp", "MLP detector checkpoint (natural-errors)")
      .opt("--mlp-transforms", "mlp.transforms", "MLP feature transform set")
      .opt("--top-k", "mlp.top_k", "MLP logit positions kept per transform")
      .opt("--mlp-epochs", "mlp.epochs", "MLP training epochs")
      .opt("--transforms", "transforms", "transform list")
      .opt("--T", "T", "temperature list")
      .opt("--fpr", "fpr", "target false positive rate")
      .opt("--eval-images", "eval.images", "clean evaluation images")
      .opt("--attack-images", "eval.attack_images", "attacked images per configuration")
      .flag("--full", "eval.full", "full-size sweeps");

  add("report", "recompute and summarize an experiment directory")
      .opt("--experiment-dir", "experiment_dir", "directory holding report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& cmd : commands) {
    if (!cmd->app()->parsed()) continue;
    std::string text;
    try {
      text = cmd->config_text();
    } catch (const std::ios_base::failure& e) {
      std::cerr << "invdet " << cmd->name() << ": " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "invdet " << cmd->name() << ": " << e.what() << "\n";
      return 2;
    }
    const invdet_status s = invdet_run(cmd->name().c_str(), text.c_str(), cmd->outdir().c_str());
    if (s != INVDET_OK) {
      std::cerr << "invdet " << cmd->name() << ": " << invdet_status_name(s) << ": "
                << invdet_last_error() << "\n";
      return 1;
    }
    return 0;
  }
  return 2;
}
