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

#ifndef XDIAG_MODEL_PORT_H_
#define XDIAG_MODEL_PORT_H_

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "xdiag/corpus.h"

namespace xdiag {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Which output a forward or backward pass refers to. The logit view exists so
// tests can use additive closed forms; techniques default to probabilities.
enum class OutputSpace { kProbability, kLogit };

// kGuided zeroes negative upstream gradients at every ReLU.
enum class BackwardMode { kPlain, kGuided };

// Token-mean pooled activations of every layer, all of the same width.
struct ActivationSummary {
  std::vector<Eigen::VectorXd> per_layer;
  Eigen::VectorXd pooled;

  static ActivationSummary from_layers(std::vector<Eigen::VectorXd> layers);
};

struct ForwardResult {
  Eigen::VectorXd probs;
  ActivationSummary activations;
};

// Approximate work done by a model or by one attribution call.
struct CostRecord {
  uint64_t forward_count = 0;
  uint64_t backward_count = 0;
  double flops = 0.0;
  double wall_seconds = 0.0;

  CostRecord& operator+=(const CostRecord& o);
};

// Token vocabulary. Ids 0 and 1 are reserved for the mask and unknown tokens.
class Vocabulary {
 public:
  static constexpr int kMaskId = 0;
  static constexpr int kUnkId = 1;
  static constexpr char kUnkToken[] = "[UNK]";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  // `words` may or may not include the reserved tokens; duplicates are
  // dropped and first-seen order is kept.
  explicit Vocabulary(const std::vector<std::string>& words);

  // Sorted distinct tokens of the dataset.
  static Vocabulary from_dataset(const Dataset& dataset);

  int id(const std::string& token) const;
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Differentiable classifier contract shared by every technique and measure.
// Implementations are immutable after construction; the cost counters are
// atomic so concurrent read-only calls are safe.
class ModelPort {
 public:
  virtual ~ModelPort() = default;

  virtual int num_classes() const = 0;
  virtual int embedding_dim() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  int mask_token_id() const { return Vocabulary::kMaskId; }
  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    return vocabulary().encode(tokens);
  }

  // Rows are tokens.
  virtual Eigen::MatrixXd embed(std::span<const int> ids) const = 0;
  virtual Eigen::VectorXd forward(
      const Eigen::MatrixXd& embeddings,
      OutputSpace space = OutputSpace::kProbability) const = 0;
  virtual ActivationSummary activations(
      const Eigen::MatrixXd& embeddings) const = 0;
  ForwardResult forward_tokens(std::span<const int> ids) const;

  virtual bool supports_gradients() const { return true; }
  virtual bool supports_relu_override() const { return false; }
  virtual bool thread_safe() const { return true; }

  // d output[cls] / d embeddings, shaped like `embeddings`.
  virtual Eigen::MatrixXd grad_wrt_embeddings(
      const Eigen::MatrixXd& embeddings, int cls,
      OutputSpace space = OutputSpace::kProbability,
      BackwardMode mode = BackwardMode::kPlain) const = 0;
  Eigen::MatrixXd grad_wrt_embeddings(
      std::span<const int> ids, int cls,
      OutputSpace space = OutputSpace::kProbability,
      BackwardMode mode = BackwardMode::kPlain) const {
    return grad_wrt_embeddings(embed(ids), cls, space, mode);
  }

  // Analytic FLOP estimates for one pass over `n_tokens` tokens.
  virtual double forward_flops(size_t n_tokens) const = 0;
  virtual double backward_flops(size_t n_tokens) const = 0;

  // Totals since construction.
  CostRecord op_cost() const;

 protected:
  void count_forward(size_t n_tokens) const;
  void count_backward(size_t n_tokens) const;

 private:
  mutable std::atomic<uint64_t> forwards_{0};
  mutable std::atomic<uint64_t> backwards_{0};
  mutable std::atomic<double> flops_{0.0};
};

// Forward pass with the given positions replaced by the mask token.
Eigen::VectorXd forward_masked(const ModelPort& model, std::span<const int> ids,
                               std::span<const size_t> mask_positions,
                               OutputSpace space = OutputSpace::kProbability);

// Mean absolute difference of the pooled vectors.
double activation_distance(const ActivationSummary& a,
                           const ActivationSummary& b);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

enum class Architecture { kLinearBoe, kReluMlp };
enum class Init { kTrained, kRandom };

struct ModelSpec {
  Architecture architecture = Architecture::kLinearBoe;
  uint64_t seed = 0;
  Init init = Init::kTrained;
  int embedding_dim = 8;
  // Token-wise ReLU layers of relu_mlp; all widths must match.
  std::vector<int> hidden_sizes = {16};
  // Empty means "derive from the training dataset".
  std::vector<std::string> vocabulary;
  // 0 means "take from the dataset header".
  int num_classes = 0;
  int epochs = 20;
  double learning_rate = 0.1;
  double init_scale = 0.5;
  // Digest of the dataset the weights were trained on, if any.
  std::string train_data_digest;
};

const char* to_string(Architecture a);
Architecture parse_architecture(std::string_view s);

// Parses "arch[:key=value,...]", e.g. "relu_mlp:seed=3,init=random,hidden=16".
// Keys: seed, init, dim, hidden (widths joined by 'x'), epochs, lr, scale,
// classes.
ModelSpec parse_model_spec(std::string_view text);
std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(std::string_view text);
// Content hash of the canonical JSON form.
std::string model_spec_digest(const ModelSpec& spec);

// Builds a toy model. Trained models require `train_data`; identical specs
// and data give bit-identical weights.
std::unique_ptr<ModelPort> build_model(const ModelSpec& spec,
                                       const Dataset* train_data = nullptr);

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

// Weight format: a flat little-endian float64 file of row-major tensors and a
// JSON sidecar at `path` + ".json" with {"meta", "tensors": [{name, rows,
// cols, offset}]}.
void write_tensor_file(const std::filesystem::path& path,
                       const std::string& meta_json,
                       std::span<const NamedTensor> tensors);
struct TensorFile {
  std::string meta_json;
  std::vector<NamedTensor> tensors;

  // Throws ModelError if absent.
  const Eigen::MatrixXd& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};
TensorFile read_tensor_file(const std::filesystem::path& path);

// Flat little-endian float64 tensor file plus a JSON sidecar at
// `path` + ".json" holding the spec, vocabulary and tensor shapes.
void save_weights(const ModelPort& model, const std::filesystem::path& path);
std::unique_ptr<ModelPort> load_weights(const std::filesystem::path& path);

}  // namespace xdiag

#endif  // XDIAG_MODEL_PORT_H_
