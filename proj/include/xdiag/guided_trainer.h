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

#ifndef XDIAG_GUIDED_TRAINER_H_
#define XDIAG_GUIDED_TRAINER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xdiag/corpus.h"
#include "xdiag/model_port.h"
#include "xdiag/random.h"

namespace xdiag {

class TrainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration (objectives, lambda, K, ...).
class ConfigError : public TrainerError {
 public:
  using TrainerError::TrainerError;
};

enum class Objective { kSupervised, kFaithfulness, kDataConsistency, kConfidence };
const char* to_string(Objective o);
Objective parse_objective(std::string_view s);

struct GuidedConfig {
  std::vector<Objective> objectives = {Objective::kSupervised};
  // Target fraction of selected sentences.
  double lambda = 0.3;
  // Tokens masked for the data-consistency term.
  int mask_k = 3;
  int reinforce_samples = 1;
  bool reinforce_baseline = false;
  double selection_threshold = 0.5;
  uint64_t seed = 0;
  int epochs = 30;
  double learning_rate = 0.1;
  int embedding_dim = 16;

  bool has(Objective o) const;
  void validate() const;
};

std::string guided_config_to_json(const GuidedConfig& cfg);
GuidedConfig guided_config_from_json(std::string_view text);

// Outputs of one joint forward pass.
struct JointOutput {
  Eigen::MatrixXd explanation_logits;  // p^E, num_classes x num_sentences
  Eigen::VectorXd class_prior;         // p^{C'}
  Eigen::VectorXd class_probs;         // p^C

  int predicted_class() const;
  // sigmoid(p^E[cls]).
  Eigen::VectorXd selection_probs(int cls) const;
};

// p^C = normalize(p^{C'} * mean_j sigmoid(p^E[., j])).
Eigen::VectorXd condition_on_explanations(const Eigen::MatrixXd& explanation_logits,
                                          const Eigen::VectorXd& class_prior);

// Sentence-level explanation + classification model contract.
class JointRationaleModel {
 public:
  virtual ~JointRationaleModel() = default;
  virtual int num_classes() const = 0;
  virtual JointOutput forward(const Instance& inst) const = 0;
};

// Checks the instance has sentences, then runs the model.
JointOutput joint_forward(const JointRationaleModel& model, const Instance& inst);

// Aggregated-statistics probe predicting the model confidence.
struct ConfidenceProbe {
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
  double bias = 0.0;
};

// Toy encoder: a document vector (mean of all token embeddings) feeds the
// class head, per-sentence mean embeddings feed the explanation head.
class ToyJointModel final : public JointRationaleModel {
 public:
  enum Tensor {
    kEmbeddings,
    kClassHidden,
    kClassHiddenBias,
    kClassOut,
    kClassOutBias,
    kExplHidden,
    kExplHiddenBias,
    kExplOut,
    kExplOutBias,
    kProbeWeights,
    kProbeBias,
    kNumTensors,
  };
  using Params = std::array<Eigen::MatrixXd, kNumTensors>;
  static const std::array<const char*, kNumTensors>& tensor_names();

  // Forward intermediates needed for backpropagation.
  struct Cache {
    std::vector<int> ids;
    std::vector<Span> spans;
    Eigen::VectorXd document;           // d
    Eigen::MatrixXd sentences;          // d x S
    Eigen::VectorXd class_hidden;       // d
    Eigen::MatrixXd expl_hidden;        // d x S
    JointOutput out;
    Eigen::MatrixXd selection;          // sigmoid(p^E), C x S
    Eigen::VectorXd mean_selection;     // C
  };

  ToyJointModel(Vocabulary vocab, int num_classes, int dim, uint64_t seed,
                double init_scale = 0.3);
  ToyJointModel(Vocabulary vocab, Params params);

  int num_classes() const override {
    return static_cast<int>(params_[kClassOutBias].rows());
  }
  int dim() const { return static_cast<int>(params_[kEmbeddings].cols()); }
  const Vocabulary& vocabulary() const { return vocab_; }
  JointOutput forward(const Instance& inst) const override;
  Cache run(const Instance& inst) const;

  // Accumulates parameter gradients given d loss / d class logits (z of
  // p^{C'}) and d loss / d explanation logits.
  void backward(const Cache& cache, const Eigen::VectorXd& grad_class_logits,
                const Eigen::MatrixXd& grad_expl_logits, Params& grads) const;

  ConfidenceProbe probe() const;

  Params& params() { return params_; }
  const Params& params() const { return params_; }
  Params zero_like() const;

  void save(const std::filesystem::path& path) const;
  static ToyJointModel load(const std::filesystem::path& path);

 private:
  Vocabulary vocab_;
  Params params_;
};

// Gradient of the class distribution p^C, mapped onto the class and
// explanation logits.
void class_probs_backward(const ToyJointModel::Cache& cache,
                          const Eigen::VectorXd& grad_class_probs,
                          Eigen::VectorXd& grad_class_logits,
                          Eigen::MatrixXd& grad_expl_logits);

// ---------------------------------------------------------------------------
// Objectives

// CE(p^C, y) + mean_j BCE(sigmoid(p^E[y]_j), e_j).
double loss_supervised(const JointOutput& out, const Instance& inst);

struct SelectionSample {
  std::vector<uint8_t> mask;
  double log_prob = 0.0;
  double reward = 0.0;
};

SelectionSample draw_selection(const Eigen::VectorXd& selection_probs, Rng& rng);
double selection_log_prob(const Eigen::VectorXd& selection_probs,
                          const std::vector<uint8_t>& mask);

// 1[pred(selected only) == l^C] - 1[pred(unselected only) == l^C]
//   - |fraction selected - lambda|, with l^C the prediction on the full
// input. Query sentences stay visible in both reduced inputs.
double faithfulness_reward(const JointRationaleModel& model, const Instance& inst,
                           const std::vector<uint8_t>& mask, double lambda);
double faithfulness_reward(const JointRationaleModel& model, const Instance& inst,
                           const std::vector<uint8_t>& mask, double lambda,
                           int original_prediction);

struct ReinforceEstimate {
  // -mean_s (R_s - baseline) * log_prob_s
  double surrogate = 0.0;
  // Gradient of the surrogate with respect to p^E[cls].
  Eigen::VectorXd grad_logits;
  double mean_reward = 0.0;
  int cls = 0;
  std::vector<SelectionSample> samples;
};

// Score-function estimate over cfg.reinforce_samples draws from
// Bern(sigmoid(p^E[c])), c the predicted class.
ReinforceEstimate loss_faithfulness(const JointRationaleModel& model,
                                    const Instance& inst, const GuidedConfig& cfg,
                                    Rng& rng, double baseline = 0.0);

// K distinct token positions drawn uniformly.
std::vector<size_t> choose_mask_positions(size_t n_tokens, int k, uint64_t seed);

// mean |sigmoid(p^E) - sigmoid(p^E of the input with `positions` masked)|.
double data_consistency_loss(const JointRationaleModel& model,
                             const Instance& inst,
                             std::span<const size_t> positions);
double loss_data_consistency(const JointRationaleModel& model,
                             const Instance& inst, int k, uint64_t seed);

// (max, min, mean, population std) of selection probabilities.
Eigen::Vector4d selection_statistics(const Eigen::VectorXd& selection_probs);

// |max p^C - sigmoid(w . stats(sigmoid(p^E[c])) + b)|, c the predicted class.
double loss_confidence_indication(const JointOutput& out,
                                  const ConfidenceProbe& probe);

// Loss values with their parameter gradients added into `grads` (when not
// null), for the toy model.
double supervised_loss_grad(const ToyJointModel& model, const Instance& inst,
                            ToyJointModel::Params* grads);
double data_consistency_loss_grad(const ToyJointModel& model,
                                  const Instance& inst,
                                  std::span<const size_t> positions,
                                  ToyJointModel::Params* grads);
double confidence_loss_grad(const ToyJointModel& model, const Instance& inst,
                            ToyJointModel::Params* grads);
ReinforceEstimate faithfulness_loss_grad(const ToyJointModel& model,
                                         const Instance& inst,
                                         const GuidedConfig& cfg, Rng& rng,
                                         double baseline,
                                         ToyJointModel::Params* grads);

// ---------------------------------------------------------------------------
// Training and evaluation

struct EvalMetrics {
  double f1_c = 0.0;
  double acc_c = 0.0;
  double p_e = 0.0;
  double r_e = 0.0;
  double f1_e = 0.0;
  double acc_joint = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  // Column name -> mean over instances (loss_sup or loss_task, loss_f, ...).
  std::map<std::string, double> losses;
  double total = 0.0;
  EvalMetrics metrics;
};

struct TrainingHistory {
  std::vector<std::string> loss_columns;
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;
};

// Minimizes the unweighted sum of enabled terms by per-instance SGD in a
// seeded order. The class cross-entropy is always part of the sum; the
// supervised objective adds the explanation cross-entropy. Metrics are taken
// on `eval` when given, else on `train`.
TrainingHistory train(ToyJointModel& model, const Dataset& train,
                      const GuidedConfig& cfg, const Dataset* eval = nullptr);

// Sentences with sigmoid(p^E[c]) >= threshold are selected, c predicted.
std::vector<uint8_t> select_sentences(const JointOutput& out, double threshold);

EvalMetrics evaluate(const JointRationaleModel& model, const Dataset& dataset,
                     double threshold = 0.5);

struct SufficiencyCompleteness {
  // Fractions in [0, 1].
  double sufficiency = 0.0;
  double completeness = 0.0;
};

SufficiencyCompleteness evaluate_sufficiency_completeness(
    const JointRationaleModel& model, const Dataset& dataset,
    double threshold = 0.5);

struct TargetMetrics {
  double f1_c = 0.0;
  double acc_c = 0.0;
};

// Predicts from the query sentences alone; every other sentence is masked.
TargetMetrics evaluate_query_only(const JointRationaleModel& model,
                                  const Dataset& dataset);

}  // namespace xdiag

#endif  // XDIAG_GUIDED_TRAINER_H_
