// Copyright 2026 The xdiag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "xdiag/cli.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "xdiag/attribution.h"
#include "xdiag/corpus.h"
#include "xdiag/diagnostics.h"
#include "xdiag/digest.h"
#include "xdiag/guided_trainer.h"
#include "xdiag/model_port.h"
#include "xdiag/random.h"
#include "xdiag/report.h"
#include "xdiag/toy_models.h"

namespace xdiag {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Bad flags, missing inputs, invalid combinations: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list({text})) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string dataset_name(const Dataset& d, const fs::path& path) {
  return d.header.name.empty() ? path.stem().string() : d.header.name;
}

struct ResolvedModel {
  std::unique_ptr<ModelPort> port;
  std::string digest;
  std::string label;
};

// A spec without an explicit seed takes the global one.
ResolvedModel resolve_model(const std::string& text, uint64_t global_seed,
                            const Dataset& train,
                            const std::optional<fs::path>& weights) {
  ResolvedModel r;
  r.label = text;
  if (weights) {
    r.port = load_weights(*weights);
  } else {
    ModelSpec spec;
    try {
      spec = parse_model_spec(text);
    } catch (const ModelError& e) {
      throw UsageError(e.what());
    }
    if (text.find("seed=") == std::string::npos) spec.seed = global_seed;
    r.port = build_model(spec, &train);
  }
  if (const auto* toy = dynamic_cast<const ToyModel*>(r.port.get())) {
    r.digest = model_spec_digest(toy->spec());
  } else {
    r.digest = sha256_hex(text);
  }
  return r;
}

void finish_manifest(RunManifest& m, const std::vector<std::string>& argv,
                     const std::vector<fs::path>& outputs,
                     Clock::time_point start, const fs::path& manifest_path) {
  m.argv = argv;
  m.timestamp = utc_timestamp();
  m.version = kToolkitVersion;
  for (const auto& p : outputs) m.outputs[p.string()] = file_sha256(p);
  m.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  write_manifest(manifest_path, m);
}

// Runs fn(i) for i in [0, n) on `workers` threads; the first exception wins.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn fn) {
  const size_t threads = std::clamp<size_t>(static_cast<size_t>(std::max(workers, 1)),
                                            1, std::max<size_t>(n, 1));
  if (threads == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// saliency

struct SaliencyArgs {
  std::string data;
  std::string model;
  std::vector<std::string> techniques;
  uint64_t seed = 0;
  std::string out;
  int workers = 1;
  std::string train_data;
  std::string weights;
  int n_samples = 100;
  int n_perturbations = 500;
  std::string output_space = "probability";
};

int cmd_saliency(const SaliencyArgs& a, const std::vector<std::string>& argv,
                 std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const std::vector<std::string> techniques = split_list(a.techniques);
  if (techniques.empty()) throw UsageError("no technique given");
  for (const auto& t : techniques) {
    if (!is_technique_tag(t)) {
      std::string valid;
      for (const auto& tag : technique_tags()) valid += (valid.empty() ? "" : ", ") + tag;
      throw UsageError("unknown technique '" + t + "'; valid techniques: " + valid);
    }
  }
  AttributionOptions base;
  if (a.output_space == "probability") {
    base.output = OutputSpace::kProbability;
  } else if (a.output_space == "logit") {
    base.output = OutputSpace::kLogit;
  } else {
    throw UsageError("--output-space must be probability or logit");
  }
  base.shapley_samples = a.n_samples;
  base.lime_perturbations = a.n_perturbations;

  const Dataset data = load_dataset(a.data);
  const Dataset train = a.train_data.empty() ? data : load_dataset(a.train_data);
  const ResolvedModel model =
      resolve_model(a.model, a.seed, train,
                    a.weights.empty() ? std::nullopt
                                      : std::optional<fs::path>(a.weights));
  const std::string data_digest = file_sha256(a.data);
  const char* cache_env = std::getenv("XDIAG_CACHE");
  const int workers = model.port->thread_safe() ? a.workers : 1;

  std::vector<SaliencyMap> all;
  for (const auto& t : techniques) {
    std::optional<fs::path> cache_file;
    if (cache_env != nullptr && *cache_env != '\0') {
      const std::string key = sha256_hex(
          data_digest + "|" + model.digest + "|" + t + "|" + std::to_string(a.seed) +
          "|" + a.output_space + "|" + std::to_string(a.n_samples) + "|" +
          std::to_string(a.n_perturbations));
      cache_file = fs::path(cache_env) / (key + ".jsonl");
    }
    std::vector<SaliencyMap> maps;
    if (cache_file && fs::exists(*cache_file)) {
      maps = read_saliency_file(*cache_file);
      err << "saliency: " << t << " loaded from cache\n";
    } else {
      maps.resize(data.instances.size());
      parallel_for(data.instances.size(), workers, [&](size_t i) {
        AttributionOptions o = base;
        o.seed = derive_seed(a.seed, t, data.instances[i].id);
        maps[i] = compute_saliency(t, data.instances[i], *model.port, o);
      });
      if (cache_file) {
        fs::create_directories(cache_file->parent_path());
        write_saliency_file(*cache_file, maps);
      }
    }
    for (auto& m : maps) all.push_back(std::move(m));
  }
  write_saliency_file(a.out, all);
  out << "wrote " << all.size() << " saliency maps to " << a.out << "\n";

  RunManifest m;
  m.seed = a.seed;
  m.dataset_digest = data_digest;
  m.model_digests = {model.digest};
  m.techniques = techniques;
  finish_manifest(m, argv, {a.out}, start, manifest_path_for(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diag

struct DiagArgs {
  std::string data;
  std::vector<std::string> models;
  std::vector<std::string> saliency;
  std::vector<std::string> properties;
  std::string thresholds;
  std::string perf = "macro_f1";
  bool gold_class = true;
  bool upsample = false;
  int folds = 5;
  size_t n_top = 2000;
  size_t n_rand = 2000;
  uint64_t seed = 0;
  std::string out;
  std::string train_data;
  std::vector<std::string> weights;
};

// Maps of one file grouped by technique, in first-seen order.
std::vector<std::pair<std::string, std::vector<SaliencyMap>>> group_by_technique(
    std::vector<SaliencyMap> maps) {
  std::vector<std::pair<std::string, std::vector<SaliencyMap>>> groups;
  for (auto& m : maps) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == m.technique; });
    if (it == groups.end()) {
      groups.push_back({m.technique, {}});
      it = groups.end() - 1;
    }
    it->second.push_back(std::move(m));
  }
  return groups;
}

int cmd_diag(const DiagArgs& a, const std::vector<std::string>& argv,
             std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  std::vector<Property> properties;
  for (const auto& p : split_list(a.properties)) {
    try {
      properties.push_back(parse_property(p));
    } catch (const DiagnosticsError& e) {
      throw UsageError(e.what());
    }
  }
  if (properties.empty()) throw UsageError("no property given");
  const auto needs = [&](Property p) {
    return std::find(properties.begin(), properties.end(), p) != properties.end();
  };
  if (a.saliency.empty()) throw UsageError("at least one --saliency file is needed");
  if (needs(Property::kRC) && a.models.size() < 2) {
    throw UsageError("RC requires ≥2 models");
  }
  if ((needs(Property::kF) || needs(Property::kDC)) && a.models.empty()) {
    throw UsageError("F and DC require --model");
  }
  if (needs(Property::kRC) && a.saliency.size() < a.models.size()) {
    throw UsageError("RC requires one --saliency file per model");
  }
  if (!a.weights.empty() && a.weights.size() != a.models.size()) {
    throw UsageError("--weights must be given once per --model");
  }
  MaskingSchedule schedule;
  if (!a.thresholds.empty()) schedule.thresholds = parse_numbers(a.thresholds);
  try {
    schedule.validate();
  } catch (const DiagnosticsError& e) {
    throw UsageError(e.what());
  }
  PerfMetric perf;
  try {
    perf = parse_perf_metric(a.perf);
  } catch (const DiagnosticsError& e) {
    throw UsageError(e.what());
  }

  const Dataset data = load_dataset(a.data);
  const Dataset train = a.train_data.empty() ? data : load_dataset(a.train_data);
  const std::string name = dataset_name(data, a.data);
  std::vector<ResolvedModel> models;
  for (size_t i = 0; i < a.models.size(); ++i) {
    models.push_back(resolve_model(
        a.models[i], a.seed, train,
        a.weights.empty() ? std::nullopt : std::optional<fs::path>(a.weights[i])));
  }
  std::vector<std::vector<std::pair<std::string, std::vector<SaliencyMap>>>> files;
  for (const auto& path : a.saliency) {
    files.push_back(group_by_technique(read_saliency_file(path)));
  }

  Report report;
  if (!a.out.empty() && fs::exists(a.out)) report = read_report(a.out);
  std::vector<std::string> techniques;
  auto add = [&](const std::string& model_digest, const std::string& label,
                 const std::string& technique, PropertyScore score) {
    for (const auto& w : score.warnings) {
      err << "warning: " << to_string(score.property) << " / " << technique
          << ": " << w << "\n";
    }
    out << name << '\t' << (label.empty() ? "-" : label) << '\t' << technique
        << '\t' << to_string(score.property) << '\t' << score.value << "\n";
    report.upsert({name, model_digest, label, technique, std::move(score)});
    if (std::find(techniques.begin(), techniques.end(), technique) ==
        techniques.end()) {
      techniques.push_back(technique);
    }
  };
  // Degenerate inputs (constant distances, no positives) skip one entry.
  auto try_add = [&](const std::string& model_digest, const std::string& label,
                     const std::string& technique, Property property,
                     const std::function<PropertyScore()>& score) {
    try {
      add(model_digest, label, technique, score());
    } catch (const ZeroVarianceError& e) {
      err << "warning: " << to_string(property) << " / " << technique
          << " skipped: " << e.what() << "\n";
    } catch (const NoPositivesError& e) {
      err << "warning: " << to_string(property) << " / " << technique
          << " skipped: " << e.what() << "\n";
    }
  };

  for (size_t f = 0; f < files.size(); ++f) {
    const ResolvedModel* model =
        models.empty() ? nullptr : &models[std::min(f, models.size() - 1)];
    const std::string digest = model != nullptr ? model->digest : "none";
    const std::string label = model != nullptr ? model->label : "";
    for (const auto& [technique, maps] : files[f]) {
      for (Property p : properties) {
        switch (p) {
          case Property::kHA:
            try_add(digest, label, technique, p, [&] {
              return human_agreement(data, maps, a.gold_class);
            });
            break;
          case Property::kCI:
            try_add(digest, label, technique, p, [&] {
              return confidence_indication(
                  maps, {a.folds, a.upsample, derive_seed(a.seed, "ci", technique)});
            });
            break;
          case Property::kF:
            try_add(digest, label, technique, p, [&] {
              return faithfulness_auc_tp(data, *model->port, maps, schedule, perf);
            });
            break;
          case Property::kDC:
            try_add(digest, label, technique, p, [&] {
              return dataset_consistency(
                  data, *model->port, maps,
                  {a.n_top, a.n_rand, derive_seed(a.seed, "dc", technique)});
            });
            break;
          case Property::kRC:
            break;
        }
      }
    }
  }

  if (needs(Property::kRC)) {
    for (const auto& [technique, first_maps] : files[0]) {
      std::vector<const std::vector<SaliencyMap>*> per_model;
      for (size_t i = 0; i < models.size(); ++i) {
        for (const auto& g : files[i]) {
          if (g.first == technique) per_model.push_back(&g.second);
        }
      }
      if (per_model.size() != models.size()) {
        err << "warning: RC / " << technique
            << ": technique missing from some model's saliency; skipped\n";
        continue;
      }
      std::vector<std::pair<ModelRun, ModelRun>> pairs;
      for (size_t i = 0; i < models.size(); ++i) {
        for (size_t j = i + 1; j < models.size(); ++j) {
          pairs.push_back({{models[i].port.get(), *per_model[i]},
                           {models[j].port.get(), *per_model[j]}});
        }
      }
      try_add(models[0].digest, models[0].label, technique, Property::kRC,
              [&] { return rationale_consistency(data, pairs); });
    }
  }

  std::vector<fs::path> outputs;
  if (!a.out.empty()) {
    write_report(a.out, report);
    outputs.push_back(a.out);
  }
  RunManifest m;
  m.seed = a.seed;
  m.dataset_digest = file_sha256(a.data);
  for (const auto& model : models) m.model_digests.push_back(model.digest);
  m.techniques = techniques;
  if (needs(Property::kF)) m.schedule = schedule.thresholds;
  if (!a.out.empty()) finish_manifest(m, argv, outputs, start, manifest_path_for(a.out));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train-guided

struct TrainArgs {
  std::string data;
  std::string dev;
  std::string config;
  std::vector<std::string> objectives;
  double lambda = 0.3;
  int mask_k = 3;
  int reinforce_samples = 1;
  bool baseline = false;
  double threshold = 0.5;
  uint64_t seed = 0;
  int epochs = 30;
  double lr = 0.1;
  int dim = 16;
  std::string out;
  std::string history;
};

int cmd_train_guided(const TrainArgs& a, const CLI::App& sub,
                     const std::vector<std::string>& argv, std::ostream& out) {
  const auto start = Clock::now();
  GuidedConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot open config " + a.config);
    std::stringstream buf;
    buf << in.rdbuf();
    cfg = guided_config_from_json(buf.str());
  }
  if (sub.count("--objectives") > 0) {
    cfg.objectives.clear();
    for (const auto& o : split_list(a.objectives)) {
      cfg.objectives.push_back(parse_objective(o));
    }
  }
  if (sub.count("--lambda") > 0) cfg.lambda = a.lambda;
  if (sub.count("--mask-k") > 0) cfg.mask_k = a.mask_k;
  if (sub.count("--reinforce-samples") > 0) cfg.reinforce_samples = a.reinforce_samples;
  if (sub.count("--baseline") > 0) cfg.reinforce_baseline = a.baseline;
  if (sub.count("--threshold") > 0) cfg.selection_threshold = a.threshold;
  if (sub.count("--seed") > 0) cfg.seed = a.seed;
  if (sub.count("--epochs") > 0) cfg.epochs = a.epochs;
  if (sub.count("--lr") > 0) cfg.learning_rate = a.lr;
  if (sub.count("--dim") > 0) cfg.embedding_dim = a.dim;
  cfg.validate();

  const Dataset train_set = load_dataset(a.data);
  std::optional<Dataset> dev;
  if (!a.dev.empty()) dev = load_dataset(a.dev);
  ToyJointModel model(Vocabulary::from_dataset(train_set),
                      train_set.header.num_classes(), cfg.embedding_dim,
                      derive_seed(cfg.seed, "joint-model"));
  const TrainingHistory history =
      train(model, train_set, cfg, dev ? &*dev : nullptr);

  const fs::path checkpoint = a.out;
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  model.save(checkpoint);
  const fs::path history_path =
      a.history.empty() ? fs::path(a.out + ".history.csv") : fs::path(a.history);
  write_text(history_path, history.to_csv());
  if (!history.epochs.empty()) {
    const EvalMetrics& last = history.epochs.back().metrics;
    out << "epochs " << history.epochs.size() << "  F1-C " << last.f1_c << "  Acc-C "
        << last.acc_c << "  F1-E " << last.f1_e << "  Acc-Joint " << last.acc_joint
        << "\n";
  }

  RunManifest m;
  m.seed = cfg.seed;
  m.dataset_digest = file_sha256(a.data);
  m.model_digests = {sha256_hex(guided_config_to_json(cfg))};
  for (Objective o : cfg.objectives) m.techniques.push_back(to_string(o));
  finish_manifest(m, argv,
                  {checkpoint, fs::path(checkpoint.string() + ".json"), history_path},
                  start, manifest_path_for(checkpoint));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const std::string& report_path, const std::string& out_dir,
               const std::vector<std::string>& argv, std::ostream& out,
               std::ostream& err) {
  const auto start = Clock::now();
  const Report report = read_report(report_path);
  const EmittedReport emitted = emit_report(report, out_dir);
  for (const auto& w : emitted.warnings) err << "warning: " << w << "\n";
  for (const auto& f : emitted.files) out << "wrote " << f.string() << "\n";
  RunManifest m;
  m.dataset_digest = file_sha256(report_path);
  for (const auto& e : report.entries) {
    if (std::find(m.techniques.begin(), m.techniques.end(), e.technique) ==
        m.techniques.end()) {
      m.techniques.push_back(e.technique);
    }
  }
  finish_manifest(m, argv, emitted.files, start,
                  manifest_path_for(fs::path(out_dir) / "report.csv"));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// replay

int cmd_replay(const std::string& manifest_path, std::ostream& out,
               std::ostream& err) {
  const RunManifest recorded = read_manifest(manifest_path);
  if (!recorded.argv.empty() && recorded.argv[0] == "replay") {
    throw UsageError("a replay manifest cannot be replayed");
  }
  std::ostringstream sink_out, sink_err;
  const int code = run_cli(recorded.argv, sink_out, sink_err);
  if (code != kExitOk) {
    err << sink_err.str();
    err << "replay: command exited with " << code << "\n";
    return kExitRuntime;
  }
  size_t mismatches = 0;
  for (const auto& [path, digest] : recorded.outputs) {
    const std::string now = fs::exists(path) ? file_sha256(path) : "missing";
    if (now != digest) {
      ++mismatches;
      err << "replay: " << path << " differs (" << digest.substr(0, 12) << " vs "
          << now.substr(0, 12) << ")\n";
    }
  }
  if (mismatches > 0) return kExitRuntime;
  out << "replay: " << recorded.outputs.size() << " output(s) identical\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Token attribution diagnostics and rationale training", "xdiag"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  SaliencyArgs sal;
  auto* s = app.add_subcommand("saliency", "Compute saliency maps");
  s->add_option("--data", sal.data, "Dataset JSONL")->required();
  s->add_option("--model", sal.model, "Model spec, e.g. relu_mlp:seed=1,hidden=16")
      ->required();
  s->add_option("--technique", sal.techniques, "Technique tag(s)")->required();
  s->add_option("--seed", sal.seed, "Global seed");
  s->add_option("--out", sal.out, "Output saliency JSONL")->required();
  s->add_option("--workers", sal.workers, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--train-data", sal.train_data, "Training data for the model");
  s->add_option("--weights", sal.weights, "Load model weights instead of training");
  s->add_option("--n-samples", sal.n_samples, "Shapley permutations")
      ->check(CLI::PositiveNumber);
  s->add_option("--n-perturbations", sal.n_perturbations, "LIME perturbations")
      ->check(CLI::PositiveNumber);
  s->add_option("--output-space", sal.output_space, "probability or logit");

  DiagArgs dg;
  auto* d = app.add_subcommand("diag", "Score diagnostic properties");
  d->add_option("--data", dg.data, "Dataset JSONL")->required();
  d->add_option("--model", dg.models, "Model spec (repeatable)");
  d->add_option("--saliency", dg.saliency, "Saliency JSONL (repeatable)");
  d->add_option("--property", dg.properties, "ha, ci, f, rc, dc")->required();
  d->add_option("--thresholds", dg.thresholds, "Masking percentages, e.g. 0,50,100");
  d->add_option("--perf", dg.perf, "macro_f1 or accuracy");
  d->add_flag("--gold-class,!--predicted-class", dg.gold_class,
              "Rank the gold-class row for HA (default)");
  d->add_flag("--upsample", dg.upsample, "Up-sample confidence deciles for CI");
  d->add_option("--folds", dg.folds, "CI cross-validation folds")
      ->check(CLI::Range(2, 1000));
  d->add_option("--n-top", dg.n_top, "DC pairs by word overlap");
  d->add_option("--n-rand", dg.n_rand, "DC random pairs");
  d->add_option("--seed", dg.seed, "Global seed");
  d->add_option("--out", dg.out, "Report JSON (merged if present)");
  d->add_option("--train-data", dg.train_data, "Training data for the models");
  d->add_option("--weights", dg.weights, "Weights per --model");
  int diag_workers = 1;
  d->add_option("--workers", diag_workers, "Accepted for symmetry; unused");

  TrainArgs tr;
  auto* t = app.add_subcommand("train-guided", "Train a joint rationale model");
  t->add_option("--data", tr.data, "Training dataset JSONL")->required();
  t->add_option("--dev", tr.dev, "Evaluation dataset JSONL");
  t->add_option("--config", tr.config, "Training config JSON");
  t->add_option("--objectives", tr.objectives, "supervised, f, dc, ci");
  t->add_option("--lambda", tr.lambda, "Target selected fraction");
  t->add_option("--mask-k", tr.mask_k, "Tokens masked for DC");
  t->add_option("--reinforce-samples", tr.reinforce_samples, "Samples per instance");
  t->add_flag("--baseline", tr.baseline, "Running-mean REINFORCE baseline");
  t->add_option("--threshold", tr.threshold, "Selection threshold");
  t->add_option("--seed", tr.seed, "Global seed");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--dim", tr.dim, "Embedding width");
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--history", tr.history, "History CSV (default <out>.history.csv)");
  int train_workers = 1;
  t->add_option("--workers", train_workers, "Accepted for symmetry; unused");

  std::string report_path, out_dir;
  auto* r = app.add_subcommand("report", "Emit plots and CSV from a report");
  r->add_option("--report", report_path, "Report JSON")->required();
  r->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string manifest_path;
  auto* rp = app.add_subcommand("replay", "Re-run a manifest and verify outputs");
  rp->add_option("--manifest", manifest_path, "Manifest JSON")->required();

  std::vector<const char*> cargv = {"xdiag"};
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << kToolkitVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_saliency(sal, args, out, err);
    if (d->parsed()) return cmd_diag(dg, args, out, err);
    if (t->parsed()) return cmd_train_guided(tr, *t, args, out);
    if (r->parsed()) return cmd_report(report_path, out_dir, args, out, err);
    if (rp->parsed()) return cmd_replay(manifest_path, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace xdiag
