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

#include "xdiag/guided_trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "xdiag/diagnostics.h"

namespace xdiag {
namespace {

using nlohmann::json;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::MatrixXd sigmoid_slope(const Eigen::MatrixXd& s) {
  return s.cwiseProduct((1.0 - s.array()).matrix());
}

double sign(double x) { return static_cast<double>((x > 0) - (x < 0)); }

std::vector<uint8_t> sentence_targets(const Instance& inst) {
  if (inst.sentence_rationale) return *inst.sentence_rationale;
  if (inst.token_rationale) return derive_sentence_rationale(inst);
  throw TrainerError("instance '" + inst.id + "' has no rationale annotation");
}

bool has_rationale(const Instance& inst) {
  return inst.sentence_rationale.has_value() || inst.token_rationale.has_value();
}

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                         double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  }
  return m;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Class cross-entropy, plus the explanation cross-entropy when requested.
double task_loss_grad(const ToyJointModel& model, const Instance& inst,
                      bool with_explanations, ToyJointModel::Params* grads) {
  const ToyJointModel::Cache cache = model.run(inst);
  const JointOutput& out = cache.out;
  const int y = inst.label;
  const double p_y = std::max(out.class_probs(y), 1e-300);
  double loss = -std::log(p_y);
  const Eigen::Index classes = out.class_probs.size();
  const Eigen::Index s = out.explanation_logits.cols();
  Eigen::VectorXd g_logits = Eigen::VectorXd::Zero(classes);
  Eigen::MatrixXd g_expl = Eigen::MatrixXd::Zero(classes, s);
  if (grads != nullptr) {
    Eigen::VectorXd g_probs = Eigen::VectorXd::Zero(classes);
    g_probs(y) = -1.0 / p_y;
    class_probs_backward(cache, g_probs, g_logits, g_expl);
  }
  if (with_explanations) {
    const std::vector<uint8_t> target = sentence_targets(inst);
    double bce = 0.0;
    for (Eigen::Index j = 0; j < s; ++j) {
      const double x = out.explanation_logits(y, j);
      const double e = target[static_cast<size_t>(j)];
      bce += e * softplus(-x) + (1.0 - e) * softplus(x);
      g_expl(y, j) += (cache.selection(y, j) - e) / static_cast<double>(s);
    }
    loss += bce / static_cast<double>(s);
  }
  if (grads != nullptr) model.backward(cache, g_logits, g_expl, *grads);
  return loss;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

const char* to_string(Objective o) {
  switch (o) {
    case Objective::kSupervised:
      return "supervised";
    case Objective::kFaithfulness:
      return "f";
    case Objective::kDataConsistency:
      return "dc";
    case Objective::kConfidence:
      return "ci";
  }
  return "supervised";
}

Objective parse_objective(std::string_view s) {
  for (Objective o : {Objective::kSupervised, Objective::kFaithfulness,
                      Objective::kDataConsistency, Objective::kConfidence}) {
    if (s == to_string(o)) return o;
  }
  throw ConfigError("unknown objective '" + std::string(s) +
                    "' (expected supervised, f, dc, ci)");
}

bool GuidedConfig::has(Objective o) const {
  return std::find(objectives.begin(), objectives.end(), o) != objectives.end();
}

void GuidedConfig::validate() const {
  if (objectives.empty()) throw ConfigError("no objective enabled");
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw ConfigError("lambda must lie in (0, 1)");
  }
  if (mask_k < 0) throw ConfigError("mask_k must be >= 0");
  if (reinforce_samples < 1) throw ConfigError("reinforce_samples must be >= 1");
  if (!(selection_threshold >= 0.0 && selection_threshold <= 1.0)) {
    throw ConfigError("selection_threshold must lie in [0, 1]");
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
}

std::string guided_config_to_json(const GuidedConfig& cfg) {
  json objectives = json::array();
  for (Objective o : cfg.objectives) objectives.push_back(to_string(o));
  return json{{"objectives", objectives},
              {"lambda", cfg.lambda},
              {"mask_k", cfg.mask_k},
              {"reinforce_samples", cfg.reinforce_samples},
              {"reinforce_baseline", cfg.reinforce_baseline},
              {"selection_threshold", cfg.selection_threshold},
              {"seed", cfg.seed},
              {"epochs", cfg.epochs},
              {"learning_rate", cfg.learning_rate},
              {"embedding_dim", cfg.embedding_dim}}
      .dump();
}

GuidedConfig guided_config_from_json(std::string_view text) {
  GuidedConfig cfg;
  try {
    const json j = json::parse(text);
    if (j.contains("objectives")) {
      cfg.objectives.clear();
      for (const auto& o : j.at("objectives")) {
        cfg.objectives.push_back(parse_objective(o.get<std::string>()));
      }
    }
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.mask_k = j.value("mask_k", cfg.mask_k);
    cfg.reinforce_samples = j.value("reinforce_samples", cfg.reinforce_samples);
    cfg.reinforce_baseline = j.value("reinforce_baseline", cfg.reinforce_baseline);
    cfg.selection_threshold =
        j.value("selection_threshold", cfg.selection_threshold);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Joint model

int JointOutput::predicted_class() const {
  Eigen::Index best = 0;
  class_probs.maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::VectorXd JointOutput::selection_probs(int cls) const {
  return explanation_logits.row(cls).transpose().unaryExpr(
      [](double x) { return sigmoid(x); });
}

Eigen::VectorXd condition_on_explanations(const Eigen::MatrixXd& expl_logits,
                                          const Eigen::VectorXd& class_prior) {
  const Eigen::VectorXd mean_sel = sigmoid(expl_logits).rowwise().mean();
  const Eigen::VectorXd q = class_prior.cwiseProduct(mean_sel);
  return q / q.sum();
}

JointOutput joint_forward(const JointRationaleModel& model, const Instance& inst) {
  if (inst.sentence_spans.empty()) {
    throw TrainerError("instance '" + inst.id + "' has no sentences");
  }
  return model.forward(inst);
}

const std::array<const char*, ToyJointModel::kNumTensors>&
ToyJointModel::tensor_names() {
  static const std::array<const char*, kNumTensors> names = {
      "embeddings", "class_hidden", "class_hidden_b", "class_out",
      "class_out_b", "expl_hidden",  "expl_hidden_b",  "expl_out",
      "expl_out_b",  "probe_w",      "probe_b"};
  return names;
}

ToyJointModel::ToyJointModel(Vocabulary vocab, int num_classes, int dim,
                             uint64_t seed, double init_scale)
    : vocab_(std::move(vocab)) {
  if (num_classes < 2 || dim < 1) throw TrainerError("invalid model shape");
  Rng rng(derive_seed(seed, "joint-init"));
  const Eigen::Index v = static_cast<Eigen::Index>(vocab_.size());
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  params_[kEmbeddings] = gaussian(rng, v, dim, init_scale);
  params_[kEmbeddings].row(Vocabulary::kMaskId).setZero();
  params_[kClassHidden] = gaussian(rng, dim, dim, s);
  params_[kClassHiddenBias] = Eigen::MatrixXd::Zero(dim, 1);
  params_[kClassOut] = gaussian(rng, num_classes, dim, s);
  params_[kClassOutBias] = Eigen::MatrixXd::Zero(num_classes, 1);
  params_[kExplHidden] = gaussian(rng, dim, dim, s);
  params_[kExplHiddenBias] = Eigen::MatrixXd::Zero(dim, 1);
  params_[kExplOut] = gaussian(rng, num_classes, dim, s);
  params_[kExplOutBias] = Eigen::MatrixXd::Zero(num_classes, 1);
  params_[kProbeWeights] = Eigen::MatrixXd::Zero(4, 1);
  params_[kProbeBias] = Eigen::MatrixXd::Zero(1, 1);
}

ToyJointModel::ToyJointModel(Vocabulary vocab, Params params)
    : vocab_(std::move(vocab)), params_(std::move(params)) {
  const Eigen::Index d = params_[kEmbeddings].cols();
  const Eigen::Index c = params_[kClassOutBias].rows();
  const bool ok =
      params_[kEmbeddings].rows() == static_cast<Eigen::Index>(vocab_.size()) &&
      params_[kClassHidden].rows() == d && params_[kClassHidden].cols() == d &&
      params_[kClassHiddenBias].rows() == d &&
      params_[kClassOut].rows() == c && params_[kClassOut].cols() == d &&
      params_[kExplHidden].rows() == d && params_[kExplHidden].cols() == d &&
      params_[kExplHiddenBias].rows() == d && params_[kExplOut].rows() == c &&
      params_[kExplOut].cols() == d && params_[kExplOutBias].rows() == c &&
      params_[kProbeWeights].rows() == 4 && params_[kProbeBias].size() == 1;
  if (!ok) throw TrainerError("joint model parameter shapes are inconsistent");
}

ToyJointModel::Cache ToyJointModel::run(const Instance& inst) const {
  if (inst.sentence_spans.empty() || inst.tokens.empty()) {
    throw TrainerError("instance '" + inst.id + "' has no sentences");
  }
  Cache c;
  c.ids = vocab_.encode(inst.tokens);
  c.spans = inst.sentence_spans;
  const Eigen::MatrixXd& emb = params_[kEmbeddings];
  const Eigen::Index d = emb.cols();
  const Eigen::Index s = static_cast<Eigen::Index>(c.spans.size());
  c.document = Eigen::VectorXd::Zero(d);
  c.sentences = Eigen::MatrixXd::Zero(d, s);
  for (Eigen::Index j = 0; j < s; ++j) {
    const Span span = c.spans[static_cast<size_t>(j)];
    if (span.end > c.ids.size() || span.begin >= span.end) {
      throw TrainerError("instance '" + inst.id + "' has an invalid span");
    }
    for (size_t t = span.begin; t < span.end; ++t) {
      c.sentences.col(j) += emb.row(c.ids[t]).transpose();
    }
    c.document += c.sentences.col(j);
    c.sentences.col(j) /= static_cast<double>(span.size());
  }
  c.document /= static_cast<double>(c.ids.size());

  c.class_hidden = params_[kClassHidden] * c.document + params_[kClassHiddenBias];
  const Eigen::VectorXd class_logits =
      params_[kClassOut] * c.class_hidden + params_[kClassOutBias];
  c.out.class_prior = softmax(class_logits);
  c.expl_hidden = (params_[kExplHidden] * c.sentences).colwise() +
                  params_[kExplHiddenBias].col(0);
  c.out.explanation_logits =
      (params_[kExplOut] * c.expl_hidden).colwise() + params_[kExplOutBias].col(0);
  c.selection = sigmoid(c.out.explanation_logits);
  c.mean_selection = c.selection.rowwise().mean();
  const Eigen::VectorXd q = c.out.class_prior.cwiseProduct(c.mean_selection);
  c.out.class_probs = q / q.sum();
  return c;
}

JointOutput ToyJointModel::forward(const Instance& inst) const {
  return run(inst).out;
}

void class_probs_backward(const ToyJointModel::Cache& cache,
                          const Eigen::VectorXd& g_probs,
                          Eigen::VectorXd& g_class_logits,
                          Eigen::MatrixXd& g_expl_logits) {
  const Eigen::VectorXd& prior = cache.out.class_prior;
  const Eigen::VectorXd& probs = cache.out.class_probs;
  const Eigen::VectorXd& m = cache.mean_selection;
  const double total = prior.cwiseProduct(m).sum();
  const Eigen::VectorXd g_q =
      (g_probs.array() - g_probs.dot(probs)).matrix() / total;
  const Eigen::VectorXd g_prior = g_q.cwiseProduct(m);
  const Eigen::VectorXd g_mean = g_q.cwiseProduct(prior);
  g_class_logits +=
      prior.cwiseProduct((g_prior.array() - g_prior.dot(prior)).matrix());
  const double s = static_cast<double>(cache.selection.cols());
  g_expl_logits += (sigmoid_slope(cache.selection).array().colwise() *
                    (g_mean / s).array())
                       .matrix();
}

void ToyJointModel::backward(const Cache& c, const Eigen::VectorXd& g_logits,
                             const Eigen::MatrixXd& g_expl, Params& g) const {
  const Eigen::Index s = c.sentences.cols();
  // Class path.
  g[kClassOut] += g_logits * c.class_hidden.transpose();
  g[kClassOutBias] += g_logits;
  const Eigen::VectorXd g_hidden = params_[kClassOut].transpose() * g_logits;
  g[kClassHidden] += g_hidden * c.document.transpose();
  g[kClassHiddenBias] += g_hidden;
  const Eigen::VectorXd g_doc = params_[kClassHidden].transpose() * g_hidden;
  // Explanation path.
  g[kExplOut] += g_expl * c.expl_hidden.transpose();
  g[kExplOutBias] += g_expl.rowwise().sum();
  const Eigen::MatrixXd g_eh = params_[kExplOut].transpose() * g_expl;
  g[kExplHidden] += g_eh * c.sentences.transpose();
  g[kExplHiddenBias] += g_eh.rowwise().sum();
  const Eigen::MatrixXd g_sent = params_[kExplHidden].transpose() * g_eh;
  // Embeddings.
  const double n = static_cast<double>(c.ids.size());
  for (Eigen::Index j = 0; j < s; ++j) {
    const Span span = c.spans[static_cast<size_t>(j)];
    const Eigen::RowVectorXd row =
        (g_sent.col(j) / static_cast<double>(span.size()) + g_doc / n)
            .transpose();
    for (size_t t = span.begin; t < span.end; ++t) {
      if (c.ids[t] != Vocabulary::kMaskId) g[kEmbeddings].row(c.ids[t]) += row;
    }
  }
}

ConfidenceProbe ToyJointModel::probe() const {
  ConfidenceProbe p;
  p.weights = params_[kProbeWeights].col(0);
  p.bias = params_[kProbeBias](0, 0);
  return p;
}

ToyJointModel::Params ToyJointModel::zero_like() const {
  Params z;
  for (size_t t = 0; t < kNumTensors; ++t) {
    z[t] = Eigen::MatrixXd::Zero(params_[t].rows(), params_[t].cols());
  }
  return z;
}

void ToyJointModel::save(const std::filesystem::path& path) const {
  std::vector<NamedTensor> tensors;
  for (size_t t = 0; t < kNumTensors; ++t) {
    tensors.push_back({tensor_names()[t], params_[t]});
  }
  const json meta{{"kind", "toy_joint"}, {"vocabulary", vocab_.words()}};
  write_tensor_file(path, meta.dump(), tensors);
}

ToyJointModel ToyJointModel::load(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  const json meta = json::parse(file.meta_json);
  if (meta.value("kind", std::string()) != "toy_joint") {
    throw TrainerError(path.string() + " is not a joint model checkpoint");
  }
  Params params;
  for (size_t t = 0; t < kNumTensors; ++t) params[t] = file.at(tensor_names()[t]);
  return ToyJointModel(
      Vocabulary(meta.at("vocabulary").get<std::vector<std::string>>()),
      std::move(params));
}

// ---------------------------------------------------------------------------
// Objectives

double loss_supervised(const JointOutput& out, const Instance& inst) {
  const std::vector<uint8_t> target = sentence_targets(inst);
  const Eigen::Index s = out.explanation_logits.cols();
  if (static_cast<Eigen::Index>(target.size()) != s) {
    throw TrainerError("rationale length differs from sentence count");
  }
  double loss = -std::log(std::max(out.class_probs(inst.label), 1e-300));
  double bce = 0.0;
  for (Eigen::Index j = 0; j < s; ++j) {
    const double x = out.explanation_logits(inst.label, j);
    const double e = target[static_cast<size_t>(j)];
    bce += e * softplus(-x) + (1.0 - e) * softplus(x);
  }
  return loss + bce / static_cast<double>(s);
}

double selection_log_prob(const Eigen::VectorXd& probs,
                          const std::vector<uint8_t>& mask) {
  double lp = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    const double p = mask[static_cast<size_t>(j)] ? probs(j) : 1.0 - probs(j);
    lp += std::log(std::max(p, 1e-300));
  }
  return lp;
}

SelectionSample draw_selection(const Eigen::VectorXd& probs, Rng& rng) {
  SelectionSample s;
  s.mask.resize(static_cast<size_t>(probs.size()));
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    s.mask[static_cast<size_t>(j)] = rng.bernoulli(probs(j)) ? 1 : 0;
  }
  s.log_prob = selection_log_prob(probs, s.mask);
  return s;
}

double faithfulness_reward(const JointRationaleModel& model, const Instance& inst,
                           const std::vector<uint8_t>& mask, double lambda,
                           int original) {
  if (mask.size() != inst.num_sentences()) {
    throw TrainerError("selection length differs from sentence count");
  }
  std::vector<uint8_t> complement(mask.size());
  double selected = 0.0;
  for (size_t j = 0; j < mask.size(); ++j) {
    complement[j] = mask[j] ? 0 : 1;
    selected += mask[j] ? 1.0 : 0.0;
  }
  const int pred_selected =
      joint_forward(model, mask_sentences(inst, mask, true)).predicted_class();
  const int pred_complement =
      joint_forward(model, mask_sentences(inst, complement, true))
          .predicted_class();
  const double fraction = selected / static_cast<double>(mask.size());
  return (pred_selected == original ? 1.0 : 0.0) -
         (pred_complement == original ? 1.0 : 0.0) -
         std::abs(fraction - lambda);
}

double faithfulness_reward(const JointRationaleModel& model, const Instance& inst,
                           const std::vector<uint8_t>& mask, double lambda) {
  return faithfulness_reward(model, inst, mask, lambda,
                             joint_forward(model, inst).predicted_class());
}

ReinforceEstimate loss_faithfulness(const JointRationaleModel& model,
                                    const Instance& inst, const GuidedConfig& cfg,
                                    Rng& rng, double baseline) {
  if (cfg.reinforce_samples < 1) {
    throw ConfigError("reinforce_samples must be >= 1");
  }
  const JointOutput out = joint_forward(model, inst);
  ReinforceEstimate est;
  est.cls = out.predicted_class();
  const Eigen::VectorXd probs = out.selection_probs(est.cls);
  est.grad_logits = Eigen::VectorXd::Zero(probs.size());
  const double n = static_cast<double>(cfg.reinforce_samples);
  for (int k = 0; k < cfg.reinforce_samples; ++k) {
    SelectionSample sample = draw_selection(probs, rng);
    sample.reward =
        faithfulness_reward(model, inst, sample.mask, cfg.lambda, est.cls);
    const double advantage = sample.reward - baseline;
    est.surrogate -= advantage * sample.log_prob / n;
    est.mean_reward += sample.reward / n;
    for (Eigen::Index j = 0; j < probs.size(); ++j) {
      est.grad_logits(j) -=
          advantage * (sample.mask[static_cast<size_t>(j)] - probs(j)) / n;
    }
    est.samples.push_back(std::move(sample));
  }
  return est;
}

std::vector<size_t> choose_mask_positions(size_t n_tokens, int k, uint64_t seed) {
  if (k < 0 || static_cast<size_t>(k) > n_tokens) {
    throw TrainerError("cannot mask " + std::to_string(k) + " of " +
                       std::to_string(n_tokens) + " tokens");
  }
  std::vector<size_t> all(n_tokens);
  std::iota(all.begin(), all.end(), size_t{0});
  Rng rng(derive_seed(seed, "dc-mask"));
  for (size_t i = 0; i < static_cast<size_t>(k); ++i) {
    const size_t pick = i + static_cast<size_t>(rng.uniform_int(n_tokens - i));
    std::swap(all[i], all[pick]);
  }
  all.resize(static_cast<size_t>(k));
  std::sort(all.begin(), all.end());
  return all;
}

namespace {

Instance mask_tokens(const Instance& inst, std::span<const size_t> positions) {
  Instance out = inst;
  for (size_t p : positions) {
    if (p >= out.tokens.size()) throw TrainerError("mask position out of range");
    out.tokens[p] = kMaskToken;
  }
  return out;
}

}  // namespace

double data_consistency_loss(const JointRationaleModel& model,
                             const Instance& inst,
                             std::span<const size_t> positions) {
  const Eigen::MatrixXd clean =
      sigmoid(joint_forward(model, inst).explanation_logits);
  const Eigen::MatrixXd masked =
      sigmoid(joint_forward(model, mask_tokens(inst, positions)).explanation_logits);
  return (clean - masked).cwiseAbs().mean();
}

double loss_data_consistency(const JointRationaleModel& model,
                             const Instance& inst, int k, uint64_t seed) {
  const std::vector<size_t> positions =
      choose_mask_positions(inst.num_tokens(), k, seed);
  return data_consistency_loss(model, inst, positions);
}

Eigen::Vector4d selection_statistics(const Eigen::VectorXd& p) {
  if (p.size() == 0) throw TrainerError("no sentences to aggregate");
  const double mean = p.mean();
  const double var = (p.array() - mean).square().mean();
  return Eigen::Vector4d(p.maxCoeff(), p.minCoeff(), mean, std::sqrt(var));
}

double loss_confidence_indication(const JointOutput& out,
                                  const ConfidenceProbe& probe) {
  const int c = out.predicted_class();
  const Eigen::Vector4d stats = selection_statistics(out.selection_probs(c));
  const double predicted = sigmoid(probe.weights.dot(stats) + probe.bias);
  return std::abs(out.class_probs(c) - predicted);
}

double supervised_loss_grad(const ToyJointModel& model, const Instance& inst,
                            ToyJointModel::Params* grads) {
  return task_loss_grad(model, inst, true, grads);
}

double data_consistency_loss_grad(const ToyJointModel& model,
                                  const Instance& inst,
                                  std::span<const size_t> positions,
                                  ToyJointModel::Params* grads) {
  const ToyJointModel::Cache clean = model.run(inst);
  const ToyJointModel::Cache masked = model.run(mask_tokens(inst, positions));
  const Eigen::MatrixXd diff = clean.selection - masked.selection;
  const double loss = diff.cwiseAbs().mean();
  if (grads != nullptr) {
    const Eigen::MatrixXd g_sel =
        diff.unaryExpr([](double x) { return sign(x); }) /
        static_cast<double>(diff.size());
    const Eigen::VectorXd no_class = Eigen::VectorXd::Zero(model.num_classes());
    model.backward(clean, no_class,
                   g_sel.cwiseProduct(sigmoid_slope(clean.selection)), *grads);
    model.backward(masked, no_class,
                   -g_sel.cwiseProduct(sigmoid_slope(masked.selection)), *grads);
  }
  return loss;
}

double confidence_loss_grad(const ToyJointModel& model, const Instance& inst,
                            ToyJointModel::Params* grads) {
  const ToyJointModel::Cache cache = model.run(inst);
  const ConfidenceProbe probe = model.probe();
  const int c = cache.out.predicted_class();
  const Eigen::VectorXd sel = cache.selection.row(c).transpose();
  const Eigen::Vector4d stats = selection_statistics(sel);
  const double predicted = sigmoid(probe.weights.dot(stats) + probe.bias);
  const double confidence = cache.out.class_probs(c);
  const double loss = std::abs(confidence - predicted);
  if (grads == nullptr) return loss;

  const double sgn = sign(confidence - predicted);
  const Eigen::Index classes = cache.out.class_probs.size();
  const Eigen::Index s = sel.size();
  Eigen::VectorXd g_logits = Eigen::VectorXd::Zero(classes);
  Eigen::MatrixXd g_expl = Eigen::MatrixXd::Zero(classes, s);
  Eigen::VectorXd g_probs = Eigen::VectorXd::Zero(classes);
  g_probs(c) = sgn;
  class_probs_backward(cache, g_probs, g_logits, g_expl);

  const double g_act = -sgn * predicted * (1.0 - predicted);
  (*grads)[ToyJointModel::kProbeWeights].col(0) += g_act * stats;
  (*grads)[ToyJointModel::kProbeBias](0, 0) += g_act;
  const Eigen::Vector4d g_stats = g_act * probe.weights;
  Eigen::VectorXd g_sel = Eigen::VectorXd::Constant(s, g_stats(2) / s);
  Eigen::Index imax = 0, imin = 0;
  sel.maxCoeff(&imax);
  sel.minCoeff(&imin);
  g_sel(imax) += g_stats(0);
  g_sel(imin) += g_stats(1);
  if (stats(3) > 0.0) {
    g_sel += g_stats(3) * (sel.array() - stats(2)).matrix() /
             (static_cast<double>(s) * stats(3));
  }
  for (Eigen::Index j = 0; j < s; ++j) {
    g_expl(c, j) += g_sel(j) * sel(j) * (1.0 - sel(j));
  }
  model.backward(cache, g_logits, g_expl, *grads);
  return loss;
}

ReinforceEstimate faithfulness_loss_grad(const ToyJointModel& model,
                                         const Instance& inst,
                                         const GuidedConfig& cfg, Rng& rng,
                                         double baseline,
                                         ToyJointModel::Params* grads) {
  ReinforceEstimate est = loss_faithfulness(model, inst, cfg, rng, baseline);
  if (grads != nullptr) {
    const ToyJointModel::Cache cache = model.run(inst);
    Eigen::MatrixXd g_expl = Eigen::MatrixXd::Zero(
        model.num_classes(), static_cast<Eigen::Index>(inst.num_sentences()));
    g_expl.row(est.cls) = est.grad_logits.transpose();
    model.backward(cache, Eigen::VectorXd::Zero(model.num_classes()), g_expl,
                   *grads);
  }
  return est;
}

// ---------------------------------------------------------------------------
// Training

std::string TrainingHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch";
  for (const auto& c : loss_columns) out << ',' << c;
  out << ",loss_total,f1_c,acc_c,p_e,r_e,f1_e,acc_joint\n";
  for (const auto& e : epochs) {
    out << e.epoch;
    for (const auto& c : loss_columns) out << ',' << format_double(e.losses.at(c));
    const EvalMetrics& m = e.metrics;
    for (double v : {e.total, m.f1_c, m.acc_c, m.p_e, m.r_e, m.f1_e, m.acc_joint}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

TrainingHistory train(ToyJointModel& model, const Dataset& train_set,
                      const GuidedConfig& cfg, const Dataset* eval) {
  cfg.validate();
  if (train_set.instances.empty()) throw TrainerError("empty training set");
  const bool supervised = cfg.has(Objective::kSupervised);
  for (const auto& inst : train_set.instances) {
    if (supervised && !has_rationale(inst)) {
      throw TrainerError("supervised objective needs rationales; instance '" +
                         inst.id + "' has none");
    }
    if (inst.label < 0 || inst.label >= model.num_classes()) {
      throw TrainerError("instance '" + inst.id + "' label out of range");
    }
  }

  TrainingHistory history;
  const std::string task_column = supervised ? "loss_sup" : "loss_task";
  history.loss_columns.push_back(task_column);
  if (cfg.has(Objective::kFaithfulness)) history.loss_columns.push_back("loss_f");
  if (cfg.has(Objective::kDataConsistency)) {
    history.loss_columns.push_back("loss_dc");
  }
  if (cfg.has(Objective::kConfidence)) history.loss_columns.push_back("loss_ci");

  std::vector<size_t> order(train_set.instances.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng order_rng(derive_seed(cfg.seed, "guided-order"));
  Rng reinforce_rng(derive_seed(cfg.seed, "reinforce"));
  double reward_sum = 0.0, reward_count = 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    std::map<std::string, double> sums;
    for (const auto& c : history.loss_columns) sums[c] = 0.0;
    for (size_t i : order) {
      const Instance& inst = train_set.instances[i];
      ToyJointModel::Params grads = model.zero_like();
      double step_loss = 0.0;
      auto add = [&](const std::string& column, double value) {
        sums[column] += value;
        step_loss += value;
      };
      add(task_column, task_loss_grad(model, inst, supervised, &grads));
      if (cfg.has(Objective::kFaithfulness)) {
        const double baseline =
            cfg.reinforce_baseline && reward_count > 0 ? reward_sum / reward_count
                                                       : 0.0;
        const ReinforceEstimate est = faithfulness_loss_grad(
            model, inst, cfg, reinforce_rng, baseline, &grads);
        for (const auto& s : est.samples) {
          reward_sum += s.reward;
          reward_count += 1.0;
        }
        add("loss_f", est.surrogate);
      }
      if (cfg.has(Objective::kDataConsistency)) {
        const int k = std::min<int>(cfg.mask_k, static_cast<int>(inst.num_tokens()));
        const std::vector<size_t> positions = choose_mask_positions(
            inst.num_tokens(), k,
            derive_seed(cfg.seed, inst.id, std::to_string(epoch)));
        add("loss_dc", data_consistency_loss_grad(model, inst, positions, &grads));
      }
      if (cfg.has(Objective::kConfidence)) {
        add("loss_ci", confidence_loss_grad(model, inst, &grads));
      }
      if (!std::isfinite(step_loss)) {
        throw TrainerError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
      }
      auto& params = model.params();
      for (size_t t = 0; t < ToyJointModel::kNumTensors; ++t) {
        params[t] -= cfg.learning_rate * grads[t];
      }
      params[ToyJointModel::kEmbeddings].row(Vocabulary::kMaskId).setZero();
    }
    EpochRecord record;
    record.epoch = epoch;
    const double n = static_cast<double>(train_set.instances.size());
    for (const auto& c : history.loss_columns) {
      record.losses[c] = sums[c] / n;
      record.total += record.losses[c];
    }
    if (!std::isfinite(record.total)) {
      throw TrainerError("training diverged (non-finite loss) at epoch " +
                         std::to_string(epoch));
    }
    record.metrics = evaluate(model, eval != nullptr ? *eval : train_set,
                              cfg.selection_threshold);
    history.epochs.push_back(std::move(record));
  }
  return history;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<uint8_t> select_sentences(const JointOutput& out, double threshold) {
  const Eigen::VectorXd p = out.selection_probs(out.predicted_class());
  std::vector<uint8_t> sel(static_cast<size_t>(p.size()));
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    sel[static_cast<size_t>(j)] = p(j) >= threshold ? 1 : 0;
  }
  return sel;
}

EvalMetrics evaluate(const JointRationaleModel& model, const Dataset& dataset,
                     double threshold) {
  if (dataset.instances.empty()) throw TrainerError("empty evaluation set");
  std::vector<int> gold, predicted;
  double tp = 0, fp = 0, fn = 0, joint = 0, with_rationale = 0;
  for (const auto& inst : dataset.instances) {
    const JointOutput out = joint_forward(model, inst);
    const int pred = out.predicted_class();
    gold.push_back(inst.label);
    predicted.push_back(pred);
    if (!has_rationale(inst)) continue;
    with_rationale += 1;
    const std::vector<uint8_t> target = sentence_targets(inst);
    const std::vector<uint8_t> sel = select_sentences(out, threshold);
    bool covers = true;
    for (size_t j = 0; j < sel.size(); ++j) {
      tp += sel[j] && target[j];
      fp += sel[j] && !target[j];
      fn += !sel[j] && target[j];
      covers &= sel[j] || !target[j];
    }
    joint += (covers && pred == inst.label) ? 1.0 : 0.0;
  }
  EvalMetrics m;
  m.f1_c = macro_f1(gold, predicted);
  m.acc_c = accuracy(gold, predicted);
  m.p_e = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.r_e = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1_e = m.p_e + m.r_e > 0 ? 2 * m.p_e * m.r_e / (m.p_e + m.r_e) : 0.0;
  m.acc_joint = with_rationale > 0 ? joint / with_rationale : 0.0;
  return m;
}

SufficiencyCompleteness evaluate_sufficiency_completeness(
    const JointRationaleModel& model, const Dataset& dataset, double threshold) {
  if (dataset.instances.empty()) throw TrainerError("empty evaluation set");
  double suff = 0, compl_ = 0;
  for (const auto& inst : dataset.instances) {
    const JointOutput out = joint_forward(model, inst);
    const int pred = out.predicted_class();
    const std::vector<uint8_t> sel = select_sentences(out, threshold);
    std::vector<uint8_t> rest(sel.size());
    for (size_t j = 0; j < sel.size(); ++j) rest[j] = sel[j] ? 0 : 1;
    suff += joint_forward(model, mask_sentences(inst, sel, true))
                .predicted_class() == pred;
    compl_ += joint_forward(model, mask_sentences(inst, rest, true))
                  .predicted_class() == pred;
  }
  const double n = static_cast<double>(dataset.instances.size());
  return {suff / n, compl_ / n};
}

TargetMetrics evaluate_query_only(const JointRationaleModel& model,
                                  const Dataset& dataset) {
  if (dataset.instances.empty()) throw TrainerError("empty evaluation set");
  std::vector<int> gold, predicted;
  for (const auto& inst : dataset.instances) {
    if (!inst.query_span || inst.num_query_sentences() == 0) {
      throw TrainerError("instance '" + inst.id + "' has no query span");
    }
    const std::vector<uint8_t> none(inst.num_sentences(), 0);
    gold.push_back(inst.label);
    predicted.push_back(
        joint_forward(model, mask_sentences(inst, none, true)).predicted_class());
  }
  return {macro_f1(gold, predicted), accuracy(gold, predicted)};
}

}  // namespace xdiag
