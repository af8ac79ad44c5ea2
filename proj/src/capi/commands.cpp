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

#include "capi/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "attacks/attacks.hpp"
#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "data/source.hpp"
#include "detectors/detectors.hpp"
#include "evaluation/experiments.hpp"
#include "evaluation/metrics.hpp"
#include "evaluation/plot.hpp"
#include "evaluation/run_config.hpp"
#include "evaluation/scoring.hpp"

namespace invdet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t jobs_of(const KvConfig& kv) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(kv.get_u64("jobs", 1)));
}

ClassifierModel load_classifier(const KvConfig& kv) {
  const fs::path path = kv.get("classifier", "");
  INVDET_REQUIRE(!path.empty(), ErrorCode::kInvalidArgument, "classifier checkpoint is required");
  INVDET_REQUIRE(fs::exists(path), ErrorCode::kIo,
                 "classifier checkpoint not found: " + path.string());
  return ClassifierModel::from_checkpoint(Checkpoint::load(path));
}

void check_match(const ClassifierModel& f, const LoadedData& data) {
  INVDET_REQUIRE(f.num_classes() == data.num_classes && f.input_dims() == data.dims,
                 ErrorCode::kShapeMismatch, "classifier does not match the dataset");
}

Dataset split_named(LoadedData& data, const std::string& name) {
  Dataset out;
  if (name == "detector_eval") {
    out = data.detector_eval;
  } else if (name == "detector_train") {
    out = data.detector_train;
  } else if (name == "train") {
    out = data.train;
  } else if (name == "all") {
    out = data.train;
    out.insert(out.end(), data.detector_train.begin(), data.detector_train.end());
    out.insert(out.end(), data.detector_eval.begin(), data.detector_eval.end());
  } else {
    fail(ErrorCode::kInvalidArgument,
         "unknown split '" + name + "' (train, detector_train, detector_eval, all)");
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

// Correctly classified images, the calibration set for thresholds.
Dataset correct_only(const ClassifierModel& f, const Dataset& images, std::size_t jobs) {
  const auto logits = parallel_logits(f, images, jobs);
  Dataset out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (argmax(logits[i]) == images[i].label) out.push_back(images[i]);
  }
  return out;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void cmd_train(const KvConfig& kv, const fs::path& out) {
  LoadedData data = load_data(dataset_spec(kv));
  ClassifierModel model = ClassifierModel::make_default(
      data.dims, data.num_classes, kv.get_u64("seed", 1), kv.get_double("classifier.dropout", 0.5),
      static_cast<std::size_t>(kv.get_u64("classifier.hidden", 32)));
  const TrainConfig tc = train_config(kv);
  const TrainReport rep = train_classifier(model, data.train, tc, &data.detector_eval);
  const fs::path ckpt = out / kv.get("output", "classifier.ivdc");
  model.to_checkpoint().save(ckpt);
  write_json(out / "train_report.json", {{"checkpoint", ckpt.string()},
                                         {"train_images", data.train.size()},
                                         {"eval_images", data.detector_eval.size()},
                                         {"initial_loss", rep.initial_loss},
                                         {"epoch_loss", rep.epoch_loss},
                                         {"train_accuracy", rep.train_accuracy},
                                         {"eval_accuracy", rep.eval_accuracy}});
}

std::vector<Transform> mlp_transforms(const KvConfig& kv, const ImageDims& dims) {
  auto specs = parse_transform_list(kv.get("mlp.transforms", ""));
  if (specs.empty()) specs = default_mlp_transforms();
  std::vector<Transform> out;
  for (const auto& s : specs) out.emplace_back(s, dims);
  return out;
}

void cmd_train_detector(const KvConfig& kv, const fs::path& out) {
  const ClassifierModel f = load_classifier(kv);
  LoadedData data = load_data(dataset_spec(kv));
  check_match(f, data);
  const auto transforms = mlp_transforms(kv, data.dims);
  const std::size_t top_k =
      static_cast<std::size_t>(kv.get_u64("mlp.top_k", default_top_k(data.num_classes)));
  MlpTrainReport rep;
  const Dataset train = split_named(data, "detector_train");
  const MlpModel mlp = train_mlp_detector(f, train, transforms, top_k, mlp_config(kv),
                                          detector_augmentation(kv), &rep);
  const fs::path ckpt = out / kv.get("output", "mlp.ivdm");
  mlp.to_checkpoint().save(ckpt);

  // Held-out AUROC for a quick sanity check.
  const Dataset eval = split_named(data, "detector_eval");
  const auto logits = parallel_logits(f, eval, jobs_of(kv));
  const auto scores = parallel_mlp(f, mlp, eval, transforms, top_k, jobs_of(kv));
  std::vector<ScoredSample> samples;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    samples.push_back({scores[i], argmax(logits[i]) != eval[i].label});
  }
  json auroc = nullptr;
  if (std::any_of(samples.begin(), samples.end(), [](auto& s) { return s.positive; }) &&
      std::any_of(samples.begin(), samples.end(), [](auto& s) { return !s.positive; })) {
    auroc = mann_whitney_auroc(samples);
  }
  write_json(out / "detector_report.json", {{"checkpoint", ckpt.string()},
                                            {"train_images", train.size()},
                                            {"train_errors", rep.errors},
                                            {"train_corrects", rep.corrects},
                                            {"epoch_loss", rep.epoch_loss},
                                            {"eval_images", eval.size()},
                                            {"eval_auroc", auroc}});
}

// tau from the key, or calibrated on correct detector-train images.
double detector_threshold(const KvConfig& kv, const ClassifierModel& f, LoadedData& data,
                          const Transform& t, double temperature) {
  if (kv.has("tau")) return kv.get_double("tau", 0.0);
  const Dataset calib = correct_only(f, split_named(data, "detector_train"), jobs_of(kv));
  const auto logits = parallel_logits(f, calib, jobs_of(kv));
  const auto scores = parallel_dkl(f, calib, logits, t, temperature, jobs_of(kv));
  return calibrate_threshold(scores, kv.get_double("fpr", kDefaultTargetFpr)).threshold;
}

void cmd_attack(const KvConfig& kv, const fs::path& out) {
  const ClassifierModel f = load_classifier(kv);
  LoadedData data = load_data(dataset_spec(kv));
  check_match(f, data);
  const AttackConfig ac = attack_config(kv);
  const std::size_t jobs = jobs_of(kv);

  Dataset images;
  std::vector<std::size_t> targets;
  if (kv.has("manifest")) {
    const Dataset all = split_named(data, "all");
    std::unordered_map<std::uint64_t, const LabeledImage*> by_id;
    for (const auto& im : all) by_id[im.id] = &im;
    for (const auto& row : read_attack_manifest(kv.get("manifest"))) {
      auto it = by_id.find(row.id);
      INVDET_REQUIRE(it != by_id.end(), ErrorCode::kInvalidArgument,
                     "manifest: unknown image id " + std::to_string(row.id));
      images.push_back(*it->second);
      targets.push_back(row.target == kNoTarget
                            ? random_target(it->second->label, data.num_classes, ac.seed, row.id)
                            : row.target);
    }
  } else {
    const Dataset pool =
        correct_only(f, split_named(data, kv.get("images", "detector_eval")), jobs);
    const std::size_t n = static_cast<std::size_t>(kv.get_u64("count", 100));
    images.assign(pool.begin(),
                  pool.begin() + static_cast<std::ptrdiff_t>(std::min(n, pool.size())));
    targets = assign_targets(images, data.num_classes, ac.seed);
  }
  INVDET_REQUIRE(!images.empty(), ErrorCode::kInvalidArgument, "no images to attack");

  const std::string detector = kv.get("attack.detector", "none");
  std::vector<AttackResult> results;
  json info = {{"kind", attack_kind_name(ac.kind)},
               {"targeted", ac.targeted},
               {"confidence", ac.confidence},
               {"images", images.size()}};
  if (detector == "none") {
    results = run_attack(f, nullptr, images, ac.targeted ? targets : std::vector<std::size_t>{}, ac,
                         jobs);
  } else {
    INVDET_REQUIRE(detector == "dkl", ErrorCode::kInvalidArgument,
                   "attack.detector must be none or dkl");
    const TransformSpec spec = TransformSpec::parse(kv.get("transform", "hflip"));
    const double temperature = kv.get_double("T", 1.0);
    const Transform t(spec, data.dims);
    const double tau = detector_threshold(kv, f, data, t, temperature);
    const CombinedModelG g = build_G(f, {spec, temperature, tau}, kv.get_double("kd.scale", 1.0));
    results = run_attack(f, &g, images, targets, ac, jobs);
    info["detector"] = {{"transform", spec.to_string()}, {"T", temperature}, {"tau", tau}};
  }
  write_attack_csv(results, out / "attacks.csv");
  save_adversarials(results, data.dims, out / "adversarials.adv");
  std::size_t successes = 0;
  std::vector<double> l2, linf;
  for (const auto& r : results) {
    if (!r.success) continue;
    ++successes;
    l2.push_back(r.l2);
    linf.push_back(r.linf);
  }
  const auto l2s = summarize(l2), linfs = summarize(linf);
  info["successes"] = successes;
  info["success_rate"] = static_cast<double>(successes) / static_cast<double>(results.size());
  info["l2_mean"] = std::isfinite(l2s.mean) ? json(l2s.mean) : json(nullptr);
  info["l2_median"] = std::isfinite(l2s.median) ? json(l2s.median) : json(nullptr);
  info["linf_mean"] = std::isfinite(linfs.mean) ? json(linfs.mean) : json(nullptr);
  write_json(out / "attack_report.json", info);
}

void cmd_score(const KvConfig& kv, const fs::path& out) {
  const ClassifierModel f = load_classifier(kv);
  LoadedData data = load_data(dataset_spec(kv));
  check_match(f, data);
  const std::size_t jobs = jobs_of(kv);
  const std::string detector = kv.get("detector", "dkl");
  const double temperature = kv.get_double("T", 1.0);
  INVDET_REQUIRE(temperature > 0.0, ErrorCode::kInvalidArgument, "T must be positive");

  Dataset images;
  if (kv.has("adversarials")) {
    images = load_adversarials(kv.get("adversarials")).images;
  } else {
    images = split_named(data, kv.get("images", "detector_eval"));
  }
  Dataset calib = correct_only(f, split_named(data, "detector_train"), jobs);

  std::string transform_text;
  auto score_set = [&](const Dataset& set) {
    const auto logits = parallel_logits(f, set, jobs);
    if (detector == "msr") return msr_scores(logits);
    if (detector == "dropout") {
      return parallel_dropout(
          f, set, static_cast<std::size_t>(kv.get_u64("dropout.passes", kDefaultDropoutPasses)),
          kv.get_u64("seed", 1), jobs);
    }
    if (detector == "mlp") {
      const fs::path path = kv.get("mlp", "");
      INVDET_REQUIRE(!path.empty() && fs::exists(path), ErrorCode::kIo,
                     "mlp detector checkpoint not found: " + path.string());
      const MlpModel mlp = MlpModel::from_checkpoint(Checkpoint::load(path));
      const auto transforms = mlp_transforms(kv, data.dims);
      const std::size_t top_k =
          static_cast<std::size_t>(kv.get_u64("mlp.top_k", default_top_k(data.num_classes)));
      INVDET_REQUIRE(
          mlp.input_size() == (transforms.size() + 1) * std::min(top_k, data.num_classes),
          ErrorCode::kShapeMismatch, "mlp detector does not match mlp.transforms / mlp.top_k");
      return parallel_mlp(f, mlp, set, transforms, top_k, jobs);
    }
    INVDET_REQUIRE(detector == "dkl", ErrorCode::kInvalidArgument,
                   "detector must be dkl, msr, dropout or mlp");
    auto specs = parse_transform_list(kv.get("transform", "hflip"));
    INVDET_REQUIRE(!specs.empty(), ErrorCode::kInvalidArgument, "dkl needs at least one transform");
    transform_text = transform_list_string(specs);
    const Aggregate mode =
        parse_aggregate(kv.get("aggregate", specs.size() == 1 ? "single" : "mean"));
    std::vector<std::vector<double>> per;
    for (const auto& s : specs)
      per.push_back(parallel_dkl(f, set, logits, Transform(s, data.dims), temperature, jobs));
    std::vector<double> agg(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
      std::vector<double> v;
      for (const auto& p : per) v.push_back(p[i]);
      agg[i] = aggregate_scores(v, mode);
    }
    return agg;
  };

  const auto scores = score_set(images);
  const auto logits = parallel_logits(f, images, jobs);
  std::ostringstream csv;
  csv << "id,label,predicted,score,detector,transform,T\n";
  const std::string transform_cell =
      transform_text.find(',') == std::string::npos ? transform_text : "\"" + transform_text + "\"";
  for (std::size_t i = 0; i < images.size(); ++i) {
    csv << images[i].id << ',' << images[i].label << ',' << argmax(logits[i]) << ','
        << fmt17(scores[i]) << ',' << detector << ',' << transform_cell << ',' << fmt17(temperature)
        << '\n';
  }
  write_text_file(out / "scores.csv", csv.str());

  json threshold = nullptr;
  if (detector != "mlp" && !calib.empty()) {
    const CalibrationResult c =
        calibrate_threshold(score_set(calib), kv.get_double("fpr", kDefaultTargetFpr));
    threshold = {{"tau", std::isfinite(c.threshold) ? json(c.threshold) : json(nullptr)},
                 {"achieved_fpr", c.achieved_fpr},
                 {"calibration_size", c.calibration_size},
                 {"undersized", c.undersized}};
  }
  write_json(out / "threshold.json", {{"detector", detector},
                                      {"transform", transform_text},
                                      {"T", temperature},
                                      {"images", images.size()},
                                      {"threshold", threshold}});
}

void cmd_eval(const KvConfig& kv, const fs::path& out) {
  const SuiteConfig config = suite_config(kv);
  INVDET_REQUIRE(!config.suite.empty(), ErrorCode::kInvalidArgument,
                 "eval needs a suite (ud-sweep, transform-table, kd-temperature, natural-errors)");
  run_experiment(config, out);
}

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_number_float()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v.get<double>());
    return buf;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

// Re-derives every aggregate of an experiment directory from its CSVs,
// checks it against report.json and writes a markdown summary.
void cmd_report(const KvConfig& kv, const fs::path& out) {
  const fs::path dir = kv.get("experiment_dir", "");
  INVDET_REQUIRE(!dir.empty(), ErrorCode::kInvalidArgument, "report needs experiment_dir");
  std::ifstream in(dir / "report.json");
  INVDET_REQUIRE(in.good(), ErrorCode::kIo, "cannot read " + (dir / "report.json").string());
  const json report = json::parse(in, nullptr, false);
  INVDET_REQUIRE(!report.is_discarded(), ErrorCode::kFormat, "report.json is not valid JSON");
  INVDET_REQUIRE(report.value("schema_version", 0) == kReportSchemaVersion, ErrorCode::kFormat,
                 "unsupported report schema version");
  const json rows = recompute_rows(dir);
  const bool consistent = rows == report.at("rows");

  std::ostringstream md;
  md << "# " << report.value("experiment", "") << " (" << report.value("suite", "") << ")\n\n";
  md << "eval accuracy " << cell(report["classifier"]["eval_accuracy"]) << ", eval images "
     << cell(report["eval_images"]) << ", attacked images " << cell(report["attack_images"])
     << ", target FPR " << cell(report["target_fpr"]) << "\n\n";
  const std::vector<std::string> cols = {
      "kind",   "config",    "detector", "transform", "T",         "tau",      "auroc",
      "bypass", "successes", "attempts", "l2_mean",   "l2_median", "linf_mean"};
  for (const auto& c : cols) md << "| " << c << " ";
  md << "|\n";
  for (std::size_t i = 0; i < cols.size(); ++i) md << "|---";
  md << "|\n";
  for (const auto& row : rows) {
    for (const auto& c : cols) md << "| " << (row.contains(c) ? cell(row[c]) : "-") << " ";
    md << "|\n";
  }
  md << "\nAggregates recomputed from scores.csv and attacks.csv "
     << (consistent ? "match" : "DO NOT match") << " report.json.\n";
  write_text_file(out / "summary.md", md.str());
  write_json(out / "recomputed_rows.json", rows);
  INVDET_REQUIRE(consistent, ErrorCode::kRuntime,
                 "report aggregates differ from the per-image CSVs in " + dir.string());
}

}  // namespace

void run_command(const std::string& command, const KvConfig& config, const fs::path& outdir) {
  static const char* const kCommands[] = {"train", "train-detector", "attack",
                                          "score", "eval",           "report"};
  INVDET_REQUIRE(std::find_if(std::begin(kCommands), std::end(kCommands),
                              [&](const char* c) { return command == c; }) != std::end(kCommands),
                 ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
  INVDET_REQUIRE(!outdir.empty(), ErrorCode::kInvalidArgument, "output directory is required");
  std::error_code ec;
  fs::create_directories(outdir, ec);
  INVDET_REQUIRE(!ec, ErrorCode::kIo, "cannot create " + outdir.string() + ": " + ec.message());
  write_text_file(outdir / "config.txt", "command = " + command + "\n" + config.to_string());

  if (command == "train") {
    cmd_train(config, outdir);
  } else if (command == "train-detector") {
    cmd_train_detector(config, outdir);
  } else if (command == "attack") {
    cmd_attack(config, outdir);
  } else if (command == "score") {
    cmd_score(config, outdir);
  } else if (command == "eval") {
    cmd_eval(config, outdir);
  } else {
    cmd_report(config, outdir);
  }
}

}  // namespace invdet
