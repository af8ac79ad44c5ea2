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

#include "evaluation/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "detectors/detectors.hpp"
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

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// One detector configuration. transform is empty for msr, dropout and mlp.
struct Det {
  std::string detector;
  std::string transform;
  double temperature = 1.0;

  std::string file_tag() const {
    std::string tag = detector;
    if (!transform.empty()) tag += "_" + transform;
    if (temperature != 1.0) tag += "_T" + fmt_short(temperature);
    for (char& c : tag) {
      if (c == ':' || c == ',') c = '_';
    }
    return tag;
  }
  std::string label() const {
    std::string s = detector;
    if (!transform.empty()) s += " " + transform;
    if (temperature != 1.0) s += " T=" + fmt_short(temperature);
    return s;
  }
};

// Rows of scores.csv. group is clean, calibration, adversarial or
// adversarial-failed; config names the attack run for adversarial rows.
struct ScoreRow {
  std::uint64_t id = 0;
  std::size_t label = 0, predicted = 0;
  double score = 0.0;
  std::string detector, transform;
  double temperature = 1.0;
  std::string group, config;
};

struct AttackRow {
  std::string config;
  AttackResult result;
};

const char* kScoresHeader = "id,label,predicted,score,detector,transform,T,group,config";

// Transform specs and run labels may contain commas.
std::string csv_cell(const std::string& s) {
  return s.find(',') == std::string::npos ? s : "\"" + s + "\"";
}

std::string score_csv_row(const ScoreRow& r) {
  return std::to_string(r.id) + "," + std::to_string(r.label) + "," + std::to_string(r.predicted) +
         "," + fmt17(r.score) + "," + r.detector + "," + csv_cell(r.transform) + "," +
         fmt17(r.temperature) + "," + r.group + "," + csv_cell(r.config);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

ScoreRow parse_score_row(const std::string& line) {
  const auto c = split_csv(line);
  INVDET_REQUIRE(c.size() == 9, ErrorCode::kFormat,
                 "scores.csv: expected 9 columns in '" + line + "'");
  ScoreRow r;
  try {
    r.id = std::stoull(c[0]);
    r.label = std::stoull(c[1]);
    r.predicted = std::stoull(c[2]);
    r.score = std::stod(c[3]);
    r.temperature = std::stod(c[6]);
  } catch (const std::logic_error&) {
    fail(ErrorCode::kFormat, "scores.csv: bad value in '" + line + "'");
  }
  r.detector = c[4];
  r.transform = c[5];
  r.group = c[7];
  r.config = c[8];
  return r;
}

bool matches(const ScoreRow& r, const Det& d) {
  return r.detector == d.detector && r.transform == d.transform && r.temperature == d.temperature;
}

// What a report row measures; aggregate() fills in the numbers.
struct RowSpec {
  std::string kind;  // ud, natural or kd
  std::string config;
  Det det;
};

json aggregate(const RowSpec& spec, double target_fpr, const std::vector<ScoreRow>& scores,
               const std::vector<AttackRow>& attacks) {
  std::vector<double> calibration, negatives, natural, adversarial, failed;
  for (const auto& r : scores) {
    if (!matches(r, spec.det)) continue;
    if (r.group == "calibration") {
      calibration.push_back(r.score);
    } else if (r.group == "clean") {
      (r.predicted == r.label ? negatives : natural).push_back(r.score);
    } else if (r.config == spec.config && r.group == "adversarial") {
      adversarial.push_back(r.score);
    } else if (r.config == spec.config && r.group == "adversarial-failed") {
      failed.push_back(r.score);
    }
  }
  const std::vector<double>& positives = spec.kind == "natural" ? natural : adversarial;
  const double tau = calibration.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : calibrate_threshold(calibration, target_fpr).threshold;

  json row;
  row["kind"] = spec.kind;
  row["config"] = spec.config;
  row["detector"] = spec.det.detector;
  row["transform"] = spec.det.transform;
  row["T"] = spec.det.temperature;
  row["tau"] = number_or_null(tau);
  row["calibration"] = calibration.size();

  if (spec.kind != "kd") {
    row["negatives"] = negatives.size();
    row["positives"] = positives.size();
    double auroc = std::numeric_limits<double>::quiet_NaN();
    if (!negatives.empty() && !positives.empty()) {
      auroc = mann_whitney_auroc(labeled_scores(negatives, positives));
    }
    row["auroc"] = number_or_null(auroc);
  }
  if (spec.kind == "natural") return row;

  std::vector<double> l2, linf;
  std::size_t attempts = 0, successes = 0;
  for (const auto& a : attacks) {
    if (a.config != spec.config) continue;
    ++attempts;
    if (!a.result.success) continue;
    ++successes;
    l2.push_back(a.result.l2);
    linf.push_back(a.result.linf);
  }
  row["attempts"] = attempts;
  row["successes"] = successes;
  double bypass = std::numeric_limits<double>::quiet_NaN();
  if (spec.kind == "kd") {
    // KD success already includes evading the detector.
    if (attempts > 0) bypass = static_cast<double>(successes) / static_cast<double>(attempts);
  } else if (!positives.empty() || !failed.empty()) {
    std::size_t evaded = 0;
    for (double s : positives) evaded += s < tau;
    bypass = static_cast<double>(evaded) / static_cast<double>(positives.size() + failed.size());
  }
  row["bypass"] = number_or_null(bypass);
  const auto l2s = summarize(l2), linfs = summarize(linf);
  row["l2_mean"] = number_or_null(l2s.mean);
  row["l2_median"] = number_or_null(l2s.median);
  row["linf_mean"] = number_or_null(linfs.mean);
  row["linf_median"] = number_or_null(linfs.median);
  return row;
}

RowSpec row_spec(const json& row) {
  RowSpec s;
  s.kind = row.at("kind").get<std::string>();
  s.config = row.at("config").get<std::string>();
  s.det.detector = row.at("detector").get<std::string>();
  s.det.transform = row.at("transform").get<std::string>();
  s.det.temperature = row.at("T").get<double>();
  return s;
}

std::vector<double> parse_list(const KvConfig& kv, const std::string& key) {
  return kv.get_doubles(key, {});
}

class Experiment {
 public:
  Experiment(const SuiteConfig& config, fs::path dir) : cfg_(config), dir_(std::move(dir)) {}

  json run();

 private:
  void load();
  std::vector<std::vector<double>> logits_of(const Dataset& images) const;
  std::vector<double> scores_of(const Det& d, const Dataset& images,
                                const std::vector<std::vector<double>>& logits) const;
  // Clean eval and calibration rows for d, once per detector configuration.
  void emit_reference(const Det& d);
  std::vector<AttackResult> attack(const std::string& config, const AttackConfig& ac,
                                   const CombinedModelG* g = nullptr);
  void emit_adversarial(const Det& d, const std::string& config,
                        const std::vector<AttackResult>& results);
  json add_row(const RowSpec& spec);
  void roc_files();
  void histogram(const std::string& name, const std::vector<std::string>& groups,
                 const std::vector<std::vector<double>>& values);
  void plot(const std::string& name, const std::vector<PlotSeries>& series, const PlotAxes& axes);

  void ud_sweep();
  void transform_table();
  void kd_temperature();
  void natural_errors();

  const SuiteConfig& cfg_;
  fs::path dir_;
  ClassifierModel f_;
  std::size_t num_classes_ = 0;
  ImageDims dims_;
  Dataset eval_, calib_, detector_train_;
  std::vector<std::vector<double>> eval_logits_, calib_logits_;
  Dataset attack_set_;
  std::vector<std::size_t> targets_;
  MlpModel mlp_;
  std::vector<Transform> mlp_transforms_;
  std::size_t top_k_ = 0;

  std::vector<ScoreRow> scores_;
  std::vector<AttackRow> attacks_;
  std::vector<std::pair<std::string, std::string>> emitted_;  // (det tag, reference)
  json rows_ = json::array();
  std::vector<RowSpec> specs_;
  json artifacts_ = json::object();
  std::vector<std::string> files_;
};

void Experiment::load() {
  INVDET_REQUIRE(!cfg_.classifier.empty(), ErrorCode::kInvalidArgument,
                 "experiment needs a classifier checkpoint (classifier = path)");
  INVDET_REQUIRE(fs::exists(cfg_.classifier), ErrorCode::kIo,
                 "classifier checkpoint not found: " + cfg_.classifier.string());
  f_ = ClassifierModel::from_checkpoint(Checkpoint::load(cfg_.classifier));
  LoadedData data = load_data(cfg_.data);
  num_classes_ = data.num_classes;
  dims_ = data.dims;
  INVDET_REQUIRE(f_.num_classes() == num_classes_ && f_.input_dims() == dims_,
                 ErrorCode::kShapeMismatch, "classifier does not match the dataset");

  auto by_id = [](const LabeledImage& a, const LabeledImage& b) { return a.id < b.id; };
  eval_ = std::move(data.detector_eval);
  std::sort(eval_.begin(), eval_.end(), by_id);
  if (eval_.size() > cfg_.eval_images) eval_.resize(cfg_.eval_images);
  INVDET_REQUIRE(!eval_.empty(), ErrorCode::kInvalidArgument, "no evaluation images");
  eval_logits_ = logits_of(eval_);

  // Thresholds come from the detector-train split, restricted to images F
  // classifies correctly.
  detector_train_ = std::move(data.detector_train);
  std::sort(detector_train_.begin(), detector_train_.end(), by_id);
  const auto train_logits = logits_of(detector_train_);
  for (std::size_t i = 0; i < detector_train_.size(); ++i) {
    if (argmax(train_logits[i]) == detector_train_[i].label) {
      calib_.push_back(detector_train_[i]);
      calib_logits_.push_back(train_logits[i]);
    }
  }

  for (std::size_t i = 0; i < eval_.size() && attack_set_.size() < cfg_.attack_images; ++i) {
    if (argmax(eval_logits_[i]) == eval_[i].label) attack_set_.push_back(eval_[i]);
  }
  targets_ = assign_targets(attack_set_, num_classes_, cfg_.seed);
}

std::vector<std::vector<double>> Experiment::logits_of(const Dataset& images) const {
  return parallel_logits(f_, images, cfg_.jobs);
}

std::vector<double> Experiment::scores_of(const Det& d, const Dataset& images,
                                          const std::vector<std::vector<double>>& logits) const {
  if (d.detector == "msr") return msr_scores(logits);
  if (d.detector == "dropout")
    return parallel_dropout(f_, images, cfg_.dropout_passes, cfg_.seed, cfg_.jobs);
  if (d.detector == "mlp")
    return parallel_mlp(f_, mlp_, images, mlp_transforms_, top_k_, cfg_.jobs);
  INVDET_REQUIRE(d.detector == "dkl", ErrorCode::kInvalidArgument,
                 "unknown detector " + d.detector);
  const Transform t(TransformSpec::parse(d.transform), dims_);
  return parallel_dkl(f_, images, logits, t, d.temperature, cfg_.jobs);
}

void Experiment::emit_reference(const Det& d) {
  const std::string tag = d.file_tag();
  for (const auto& e : emitted_) {
    if (e.first == tag) return;
  }
  emitted_.emplace_back(tag, "");
  const auto clean = scores_of(d, eval_, eval_logits_);
  for (std::size_t i = 0; i < eval_.size(); ++i) {
    scores_.push_back({eval_[i].id, eval_[i].label, argmax(eval_logits_[i]), clean[i], d.detector,
                       d.transform, d.temperature, "clean", ""});
  }
  if (d.detector == "mlp") return;  // trained on this split; no threshold needed
  const auto calib = scores_of(d, calib_, calib_logits_);
  for (std::size_t i = 0; i < calib_.size(); ++i) {
    scores_.push_back({calib_[i].id, calib_[i].label, calib_[i].label, calib[i], d.detector,
                       d.transform, d.temperature, "calibration", ""});
  }
}

std::vector<AttackResult> Experiment::attack(const std::string& config, const AttackConfig& ac,
                                             const CombinedModelG* g) {
  auto results = run_attack(
      f_, g, attack_set_, ac.targeted || g ? targets_ : std::vector<std::size_t>{}, ac, cfg_.jobs);
  for (const auto& r : results) {
    attacks_.push_back({config, r});
    attacks_.back().result.adversarial.clear();
  }
  return results;
}

void Experiment::emit_adversarial(const Det& d, const std::string& config,
                                  const std::vector<AttackResult>& results) {
  Dataset adv;
  for (std::size_t i = 0; i < results.size(); ++i) {
    LabeledImage im = attack_set_[i];
    im.pixels = results[i].adversarial;
    adv.push_back(std::move(im));
  }
  const auto logits = logits_of(adv);
  const auto s = scores_of(d, adv, logits);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    scores_.push_back({adv[i].id, adv[i].label, argmax(logits[i]), s[i], d.detector, d.transform,
                       d.temperature, results[i].success ? "adversarial" : "adversarial-failed",
                       config});
  }
}

json Experiment::add_row(const RowSpec& spec) {
  specs_.push_back(spec);
  rows_.push_back(aggregate(spec, cfg_.target_fpr, scores_, attacks_));
  return rows_.back();
}

void Experiment::plot(const std::string& name, const std::vector<PlotSeries>& series,
                      const PlotAxes& axes) {
  write_text_file(dir_ / name, line_plot_svg(series, axes));
  files_.push_back(name);
}

void Experiment::roc_files() {
  std::map<std::string, std::pair<std::string, std::vector<PlotSeries>>> per_det;
  for (const auto& spec : specs_) {
    if (spec.kind == "kd") continue;
    std::vector<double> neg, pos;
    for (const auto& r : scores_) {
      if (!matches(r, spec.det)) continue;
      if (r.group == "clean" && r.predicted == r.label) neg.push_back(r.score);
      if (spec.kind == "natural" && r.group == "clean" && r.predicted != r.label)
        pos.push_back(r.score);
      if (spec.kind == "ud" && r.group == "adversarial" && r.config == spec.config)
        pos.push_back(r.score);
    }
    if (neg.empty() || pos.empty()) continue;
    const auto samples = labeled_scores(neg, pos);
    const RocCurve roc = roc_auroc(samples);
    auto& [csv, series] = per_det[spec.det.file_tag()];
    if (csv.empty()) csv = "config,fpr,tpr\n";
    PlotSeries s{spec.config.empty() ? spec.det.label() : spec.config, {}, {}};
    for (const auto& p : roc.points) {
      csv += spec.config + "," + fmt17(p.fpr) + "," + fmt17(p.tpr) + "\n";
      s.x.push_back(p.fpr);
      s.y.push_back(p.tpr);
    }
    series.push_back(std::move(s));
  }
  for (const auto& [tag, entry] : per_det) {
    write_text_file(dir_ / ("roc_" + tag + ".csv"), entry.first);
    files_.push_back("roc_" + tag + ".csv");
    plot("roc_" + tag + ".svg", entry.second,
         {"ROC " + tag, "false positive rate", "true positive rate", false});
  }
}

void Experiment::histogram(const std::string& name, const std::vector<std::string>& groups,
                           const std::vector<std::vector<double>>& values) {
  std::vector<std::string> names;
  std::vector<std::vector<double>> kept;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (values[i].empty()) continue;
    names.push_back(groups[i]);
    kept.push_back(values[i]);
  }
  if (kept.empty()) return;
  for (bool log_x : {false, true}) {
    const Histogram h = score_histogram(names, kept, cfg_.histogram_bins, log_x);
    const std::string base = name + (log_x ? "_log" : "");
    std::string csv = "bin_lo,bin_hi";
    for (const auto& g : names) csv += "," + g;
    csv += "\n";
    for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
      csv += fmt17(h.edges[b]) + "," + fmt17(h.edges[b + 1]);
      for (const auto& c : h.counts) csv += "," + std::to_string(c[b]);
      csv += "\n";
    }
    write_text_file(dir_ / (base + ".csv"), csv);
    write_text_file(dir_ / (base + ".svg"), histogram_svg(h, "D_KL " + name));
    files_.push_back(base + ".csv");
    files_.push_back(base + ".svg");
  }
}

void Experiment::ud_sweep() {
  const std::vector<double> ks =
      cfg_.confidences.empty() ? std::vector<double>{0, 2, 4, 8} : cfg_.confidences;
  const std::string transform =
      cfg_.transforms.empty() ? "hflip" : cfg_.transforms.front().to_string();
  const double t = cfg_.temperatures.empty() ? 1.0 : cfg_.temperatures.front();
  const std::vector<Det> dets = {{"dkl", transform, t}, {"msr", "", 1.0}};
  for (const auto& d : dets) emit_reference(d);

  std::map<std::string, PlotSeries> curves;
  std::vector<double> adv_dkl;
  for (double k : ks) {
    AttackConfig ac = cfg_.attack;
    ac.confidence = k;
    const std::string config = "k=" + fmt_short(k);
    const auto results = attack(config, ac);
    for (const auto& d : dets) {
      emit_adversarial(d, config, results);
      const json row = add_row({"ud", config, d});
      auto& c = curves[d.label()];
      c.name = d.label();
      c.x.push_back(row["l2_mean"].is_null() ? NAN : row["l2_mean"].get<double>());
      c.y.push_back(row["auroc"].is_null() ? NAN : row["auroc"].get<double>());
    }
    if (k == ks.front()) {
      for (const auto& r : scores_) {
        if (r.group == "adversarial" && r.config == config && matches(r, dets[0]))
          adv_dkl.push_back(r.score);
      }
    }
  }
  std::vector<PlotSeries> series;
  for (auto& [name, c] : curves) series.push_back(c);
  plot("auroc_vs_l2.svg", series, {"AUROC vs distortion", "mean L2", "AUROC", false});

  std::vector<double> correct, errors;
  for (const auto& r : scores_) {
    if (r.group != "clean" || !matches(r, dets[0])) continue;
    (r.predicted == r.label ? correct : errors).push_back(r.score);
  }
  histogram("hist_dkl", {"correct", "natural-error", "adversarial"}, {correct, errors, adv_dkl});
}

void Experiment::transform_table() {
  const std::vector<TransformSpec> transforms =
      cfg_.transforms.empty()
          ? std::vector<TransformSpec>{TransformSpec::hflip(), TransformSpec::gamma(0.6),
                                       TransformSpec::zoom(1.05)}
          : cfg_.transforms;
  const double t = cfg_.temperatures.empty() ? 1.0 : cfg_.temperatures.front();
  AttackConfig ac = cfg_.attack;
  ac.confidence = cfg_.confidences.empty() ? 0.0 : cfg_.confidences.front();
  const std::string config = "k=" + fmt_short(ac.confidence);
  const auto results = attack(config, ac);
  PlotSeries s{"dkl", {}, {}};
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    const Det d{"dkl", transforms[i].to_string(), t};
    emit_reference(d);
    emit_adversarial(d, config, results);
    const json row = add_row({"ud", config, d});
    s.x.push_back(static_cast<double>(i));
    s.y.push_back(row["auroc"].is_null() ? NAN : row["auroc"].get<double>());
  }
  plot("auroc_by_transform.svg", {s},
       {"AUROC per transform (index order as report rows)", "transform", "AUROC", false});
}

void Experiment::kd_temperature() {
  const std::vector<TransformSpec> transforms =
      cfg_.transforms.empty()
          ? std::vector<TransformSpec>{TransformSpec::hflip(), TransformSpec::zoom(1.03),
                                       TransformSpec::shift(0.5, 0.5)}
          : cfg_.transforms;
  const std::vector<double> temps =
      cfg_.temperatures.empty() ? std::vector<double>{1.0, 0.5, 0.15} : cfg_.temperatures;
  AttackConfig ud = cfg_.attack;
  ud.confidence = cfg_.confidences.empty() ? 0.0 : cfg_.confidences.front();
  const auto ud_results = attack("ud", ud);
  AttackConfig kd = ud;
  kd.targeted = true;

  std::map<std::string, PlotSeries> bypass, l2;
  std::size_t index = 0;
  for (const auto& spec : transforms) {
    for (double t : temps) {
      const Det d{"dkl", spec.to_string(), t};
      emit_reference(d);
      emit_adversarial(d, "ud", ud_results);
      const json ud_row = add_row({"ud", "ud", d});

      const DetectorSpec ds{spec, t, ud_row["tau"].get<double>()};
      const CombinedModelG g = build_G(f_, ds);
      const std::string config = "kd " + d.transform + " T=" + fmt_short(t);
      const auto results = attack(config, kd, &g);
      const std::string file = "kd_" + std::to_string(index++) + ".adv";
      save_adversarials(results, dims_, dir_ / file);
      files_.push_back(file);
      artifacts_[config] = {{"adversarials", file}, {"tau", ds.threshold}};
      const json row = add_row({"kd", config, d});

      auto& b = bypass["KD " + d.transform];
      b.name = "KD " + d.transform;
      b.x.push_back(t);
      b.y.push_back(row["bypass"].get<double>());
      auto& u = bypass["UD " + d.transform];
      u.name = "UD " + d.transform;
      u.x.push_back(t);
      u.y.push_back(ud_row["bypass"].is_null() ? NAN : ud_row["bypass"].get<double>());
      auto& m = l2[d.transform];
      m.name = "KD " + d.transform;
      m.x.push_back(t);
      m.y.push_back(row["l2_median"].is_null() ? NAN : row["l2_median"].get<double>());
    }
  }
  std::vector<PlotSeries> bs, ls;
  for (auto& [k, v] : bypass) bs.push_back(v);
  for (auto& [k, v] : l2) ls.push_back(v);
  plot("bypass_vs_T.svg", bs,
       {"bypass rate at the target FPR", "temperature T", "bypass rate", true});
  plot("l2_vs_T.svg", ls,
       {"median L2 of successful KD bypasses", "temperature T", "L2 (0-255)", true});
}

void Experiment::natural_errors() {
  const std::string transform =
      cfg_.transforms.empty() ? "hflip" : cfg_.transforms.front().to_string();
  const double t = cfg_.temperatures.empty() ? 1.0 : cfg_.temperatures.front();

  top_k_ = cfg_.top_k ? cfg_.top_k : default_top_k(num_classes_);
  for (const auto& s :
       cfg_.mlp_transforms.empty() ? default_mlp_transforms() : cfg_.mlp_transforms) {
    mlp_transforms_.emplace_back(s, dims_);
  }
  const std::size_t feature_size = (mlp_transforms_.size() + 1) * std::min(top_k_, num_classes_);
  if (!cfg_.mlp.empty()) {
    INVDET_REQUIRE(fs::exists(cfg_.mlp), ErrorCode::kIo,
                   "mlp checkpoint not found: " + cfg_.mlp.string());
    mlp_ = MlpModel::from_checkpoint(Checkpoint::load(cfg_.mlp));
  } else {
    mlp_ = train_mlp_detector(f_, detector_train_, mlp_transforms_, top_k_, cfg_.mlp_config,
                              cfg_.augmentation);
    mlp_.to_checkpoint().save(dir_ / "mlp.ivdm");
    files_.push_back("mlp.ivdm");
  }
  INVDET_REQUIRE(mlp_.input_size() == feature_size, ErrorCode::kShapeMismatch,
                 "mlp detector expects " + std::to_string(mlp_.input_size()) +
                     " features, the transform set gives " + std::to_string(feature_size));

  std::vector<Det> dets = {{"msr", "", 1.0}, {"dkl", transform, t}};
  if (f_.has_dropout()) dets.push_back({"dropout", "", 1.0});
  dets.push_back({"mlp", "", 1.0});
  for (const auto& d : dets) {
    emit_reference(d);
    add_row({"natural", "", d});
  }
  std::vector<double> correct, errors;
  for (const auto& r : scores_) {
    if (r.group != "clean" || !matches(r, dets[1])) continue;
    (r.predicted == r.label ? correct : errors).push_back(r.score);
  }
  histogram("hist_dkl", {"correct", "natural-error"}, {correct, errors});
}

json Experiment::run() {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(dir_);
  load();
  if (cfg_.suite == "ud-sweep") {
    ud_sweep();
  } else if (cfg_.suite == "transform-table") {
    transform_table();
  } else if (cfg_.suite == "kd-temperature") {
    kd_temperature();
  } else if (cfg_.suite == "natural-errors") {
    natural_errors();
  } else {
    fail(ErrorCode::kInvalidArgument,
         "unknown suite '" + cfg_.suite +
             "' (ud-sweep, transform-table, kd-temperature, natural-errors)");
  }
  roc_files();

  std::string csv = std::string(kScoresHeader) + "\n";
  for (const auto& r : scores_) csv += score_csv_row(r) + "\n";
  write_text_file(dir_ / "scores.csv", csv);
  csv = "config," + attack_csv_header() + "\n";
  for (const auto& a : attacks_) csv += csv_cell(a.config) + "," + attack_csv_row(a.result) + "\n";
  write_text_file(dir_ / "attacks.csv", csv);

  std::size_t correct = 0;
  for (std::size_t i = 0; i < eval_.size(); ++i)
    correct += argmax(eval_logits_[i]) == eval_[i].label;

  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["experiment"] = cfg_.id;
  report["suite"] = cfg_.suite;
  report["config"] = cfg_.source.values();
  report["target_fpr"] = cfg_.target_fpr;
  report["classifier"] = {
      {"path", cfg_.classifier.string()},
      {"num_classes", num_classes_},
      {"eval_accuracy", static_cast<double>(correct) / static_cast<double>(eval_.size())}};
  report["eval_images"] = eval_.size();
  report["natural_errors"] = eval_.size() - correct;
  report["calibration_images"] = calib_.size();
  report["attack_images"] = attack_set_.size();
  report["rows"] = rows_;
  report["artifacts"] = artifacts_;
  files_.insert(files_.begin(), {"scores.csv", "attacks.csv"});
  report["files"] = files_;
  report["runtime_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text_file(dir_ / "report.json", report.dump(2) + "\n");
  return report;
}

}  // namespace

SuiteConfig suite_config(const KvConfig& kv) {
  SuiteConfig c;
  c.source = kv;
  c.suite = kv.get("suite", "");
  c.id = kv.get("experiment", c.suite);
  c.classifier = kv.get("classifier", "");
  c.mlp = kv.get("mlp", "");
  c.data = dataset_spec(kv);
  const bool full = kv.get_bool("eval.full", false);
  c.eval_images = static_cast<std::size_t>(
      kv.get_u64("eval.images", full ? std::numeric_limits<std::uint64_t>::max() : c.eval_images));
  c.attack_images =
      static_cast<std::size_t>(kv.get_u64("eval.attack_images", full ? 500 : c.attack_images));
  c.confidences = parse_list(kv, "k");
  c.transforms = parse_transform_list(kv.get("transforms", ""));
  c.temperatures = parse_list(kv, "T");
  for (double t : c.temperatures) {
    INVDET_REQUIRE(t > 0.0, ErrorCode::kInvalidArgument, "temperatures must be positive");
  }
  c.target_fpr = kv.get_double("fpr", c.target_fpr);
  c.histogram_bins = static_cast<std::size_t>(kv.get_u64("eval.bins", c.histogram_bins));
  c.dropout_passes = static_cast<std::size_t>(kv.get_u64("dropout.passes", c.dropout_passes));
  c.attack = attack_config(kv);
  c.attack.targeted = kv.get_bool("attack.targeted", true);
  c.mlp_config = mlp_config(kv);
  c.augmentation = detector_augmentation(kv);
  c.mlp_transforms = parse_transform_list(kv.get("mlp.transforms", ""));
  c.top_k = static_cast<std::size_t>(kv.get_u64("mlp.top_k", 0));
  c.seed = kv.get_u64("seed", c.seed);
  c.jobs = std::max<std::size_t>(1, static_cast<std::size_t>(kv.get_u64("jobs", 1)));
  INVDET_REQUIRE(
      !c.id.empty() && c.id.find('/') == std::string::npos && c.id != "." && c.id != "..",
      ErrorCode::kInvalidArgument, "experiment id must be a plain name");
  return c;
}

json run_experiment(const SuiteConfig& config, const fs::path& outdir) {
  return Experiment(config, outdir / config.id).run();
}

json recompute_rows(const fs::path& dir) {
  std::ifstream in(dir / "report.json");
  INVDET_REQUIRE(in.good(), ErrorCode::kIo, "cannot read " + (dir / "report.json").string());
  json report;
  try {
    report = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("report.json: ") + e.what());
  }
  const double fpr = report.at("target_fpr").get<double>();

  std::vector<ScoreRow> scores;
  std::ifstream sin(dir / "scores.csv");
  INVDET_REQUIRE(sin.good(), ErrorCode::kIo, "cannot read scores.csv");
  std::string line;
  std::getline(sin, line);
  while (std::getline(sin, line)) {
    if (!line.empty()) scores.push_back(parse_score_row(line));
  }
  std::vector<AttackRow> attacks;
  std::ifstream ain(dir / "attacks.csv");
  INVDET_REQUIRE(ain.good(), ErrorCode::kIo, "cannot read attacks.csv");
  std::getline(ain, line);
  while (std::getline(ain, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',', line[0] == '"' ? line.find('"', 1) : 0);
    INVDET_REQUIRE(comma != std::string::npos, ErrorCode::kFormat,
                   "attacks.csv: bad row '" + line + "'");
    attacks.push_back(
        {split_csv(line.substr(0, comma)).front(), parse_attack_csv_row(line.substr(comma + 1))});
  }
  json rows = json::array();
  for (const auto& row : report.at("rows"))
    rows.push_back(aggregate(row_spec(row), fpr, scores, attacks));
  return rows;
}

}  // namespace invdet
