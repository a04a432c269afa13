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

#ifndef XDIAG_TOY_MODELS_H_
#define XDIAG_TOY_MODELS_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xdiag/model_port.h"

namespace xdiag {

// Shared base for the two reference architectures: an embedding table plus a
// linear output layer, trainable with plain SGD on cross-entropy.
class ToyModel : public ModelPort {
 public:
  int num_classes() const override { return static_cast<int>(out_b_.size()); }
  int embedding_dim() const override {
    return static_cast<int>(embeddings_.cols());
  }
  const Vocabulary& vocabulary() const override { return vocab_; }
  Eigen::MatrixXd embed(std::span<const int> ids) const override;

  const ModelSpec& spec() const { return spec_; }
  void set_spec(ModelSpec spec) { spec_ = std::move(spec); }

  virtual std::vector<NamedTensor> tensors() const = 0;

  // One SGD step on the cross-entropy of one example; returns the loss
  // before the update. The mask embedding row stays zero.
  virtual double sgd_step(std::span<const int> ids, int label, double lr) = 0;

 protected:
  ToyModel(Vocabulary vocab, Eigen::MatrixXd embeddings, Eigen::MatrixXd out_w,
           Eigen::VectorXd out_b);

  Vocabulary vocab_;
  Eigen::MatrixXd embeddings_;  // |V| x d
  Eigen::MatrixXd out_w_;       // C x width
  Eigen::VectorXd out_b_;       // C
  ModelSpec spec_;
};

// logits = W * sum_j e_j + b. Every token contributes additively.
class LinearBoeModel final : public ToyModel {
 public:
  LinearBoeModel(Vocabulary vocab, Eigen::MatrixXd embeddings,
                 Eigen::MatrixXd weights, Eigen::VectorXd bias);

  Eigen::VectorXd forward(const Eigen::MatrixXd& embeddings,
                          OutputSpace space) const override;
  ActivationSummary activations(
      const Eigen::MatrixXd& embeddings) const override;
  Eigen::MatrixXd grad_wrt_embeddings(const Eigen::MatrixXd& embeddings,
                                      int cls, OutputSpace space,
                                      BackwardMode mode) const override;
  using ModelPort::grad_wrt_embeddings;
  double forward_flops(size_t n_tokens) const override;
  double backward_flops(size_t n_tokens) const override;

  std::vector<NamedTensor> tensors() const override;
  double sgd_step(std::span<const int> ids, int label, double lr) override;

  const Eigen::MatrixXd& weights() const { return out_w_; }
  const Eigen::VectorXd& bias() const { return out_b_; }
  const Eigen::MatrixXd& embedding_table() const { return embeddings_; }
};

// Token-wise ReLU layers h_j = relu(A_L ... relu(A_1 e_j + a_1) ... + a_L),
// mean-pooled over tokens, then a linear output layer.
class ReluMlpModel final : public ToyModel {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  ReluMlpModel(Vocabulary vocab, Eigen::MatrixXd embeddings,
               std::vector<Layer> hidden, Eigen::MatrixXd out_w,
               Eigen::VectorXd out_b);

  bool supports_relu_override() const override { return true; }
  Eigen::VectorXd forward(const Eigen::MatrixXd& embeddings,
                          OutputSpace space) const override;
  ActivationSummary activations(
      const Eigen::MatrixXd& embeddings) const override;
  Eigen::MatrixXd grad_wrt_embeddings(const Eigen::MatrixXd& embeddings,
                                      int cls, OutputSpace space,
                                      BackwardMode mode) const override;
  using ModelPort::grad_wrt_embeddings;
  double forward_flops(size_t n_tokens) const override;
  double backward_flops(size_t n_tokens) const override;

  std::vector<NamedTensor> tensors() const override;
  double sgd_step(std::span<const int> ids, int label, double lr) override;

  const std::vector<Layer>& hidden_layers() const { return hidden_; }

 private:
  struct Trace {
    // pre[l] and post[l] are (width x n_tokens).
    std::vector<Eigen::MatrixXd> pre;
    std::vector<Eigen::MatrixXd> post;
    Eigen::VectorXd pooled;
    Eigen::VectorXd logits;
  };
  Trace run(const Eigen::MatrixXd& embeddings) const;
  // Backpropagates d loss / d logits to d loss / d embeddings (n x d).
  Eigen::MatrixXd backward_to_embeddings(const Trace& trace,
                                         const Eigen::VectorXd& grad_logits,
                                         BackwardMode mode) const;

  std::vector<Layer> hidden_;
};

// Gradient of output[cls] with respect to the logits.
Eigen::VectorXd output_grad_wrt_logits(const Eigen::VectorXd& logits, int cls,
                                       OutputSpace space);

}  // namespace xdiag

#endif  // XDIAG_TOY_MODELS_H_
