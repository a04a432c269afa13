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

#include "xdiag/toy_models.h"

#include <cmath>

namespace xdiag {

Eigen::VectorXd output_grad_wrt_logits(const Eigen::VectorXd& logits, int cls,
                                       OutputSpace space) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(logits.size());
  if (space == OutputSpace::kLogit) {
    g(cls) = 1.0;
    return g;
  }
  // d p_c / d z_k = p_c (delta_ck - p_k)
  const Eigen::VectorXd p = softmax(logits);
  g = -p(cls) * p;
  g(cls) += p(cls);
  return g;
}

ToyModel::ToyModel(Vocabulary vocab, Eigen::MatrixXd embeddings,
                   Eigen::MatrixXd out_w, Eigen::VectorXd out_b)
    : vocab_(std::move(vocab)),
      embeddings_(std::move(embeddings)),
      out_w_(std::move(out_w)),
      out_b_(std::move(out_b)) {
  if (embeddings_.rows() != static_cast<Eigen::Index>(vocab_.size())) {
    throw ModelError("embedding table rows differ from vocabulary size");
  }
  if (out_w_.rows() != out_b_.size() || out_b_.size() < 1) {
    throw ModelError("output layer shape mismatch");
  }
}

Eigen::MatrixXd ToyModel::embed(std::span<const int> ids) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), embeddings_.cols());
  for (size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= embeddings_.rows()) {
      throw ModelError("token id out of range");
    }
    out.row(static_cast<Eigen::Index>(j)) = embeddings_.row(ids[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear_boe

LinearBoeModel::LinearBoeModel(Vocabulary vocab, Eigen::MatrixXd embeddings,
                               Eigen::MatrixXd weights, Eigen::VectorXd bias)
    : ToyModel(std::move(vocab), std::move(embeddings), std::move(weights),
               std::move(bias)) {
  if (out_w_.cols() != embeddings_.cols()) {
    throw ModelError("linear_boe weight width differs from embedding dim");
  }
}

Eigen::VectorXd LinearBoeModel::forward(const Eigen::MatrixXd& embeddings,
                                        OutputSpace space) const {
  count_forward(static_cast<size_t>(embeddings.rows()));
  const Eigen::VectorXd z =
      out_w_ * embeddings.colwise().sum().transpose() + out_b_;
  return space == OutputSpace::kLogit ? z : softmax(z);
}

ActivationSummary LinearBoeModel::activations(
    const Eigen::MatrixXd& embeddings) const {
  return ActivationSummary::from_layers(
      {embeddings.colwise().mean().transpose()});
}

Eigen::MatrixXd LinearBoeModel::grad_wrt_embeddings(
    const Eigen::MatrixXd& embeddings, int cls, OutputSpace space,
    BackwardMode /*mode*/) const {
  if (cls < 0 || cls >= num_classes()) throw ModelError("class out of range");
  count_backward(static_cast<size_t>(embeddings.rows()));
  const Eigen::VectorXd z =
      out_w_ * embeddings.colwise().sum().transpose() + out_b_;
  const Eigen::RowVectorXd row =
      (out_w_.transpose() * output_grad_wrt_logits(z, cls, space)).transpose();
  return row.replicate(embeddings.rows(), 1);
}

double LinearBoeModel::forward_flops(size_t n) const {
  const double d = embedding_dim(), c = num_classes();
  return static_cast<double>(n) * d + 2.0 * c * d + 3.0 * c;
}

double LinearBoeModel::backward_flops(size_t n) const {
  const double d = embedding_dim(), c = num_classes();
  return forward_flops(n) + 2.0 * c * d + static_cast<double>(n) * d;
}

std::vector<NamedTensor> LinearBoeModel::tensors() const {
  return {{"embeddings", embeddings_},
          {"out_w", out_w_},
          {"out_b", Eigen::MatrixXd(out_b_)}};
}

double LinearBoeModel::sgd_step(std::span<const int> ids, int label,
                                double lr) {
  const Eigen::MatrixXd e = embed(ids);
  const Eigen::VectorXd s = e.colwise().sum().transpose();
  const Eigen::VectorXd p = softmax(out_w_ * s + out_b_);
  const double loss = -std::log(std::max(p(label), 1e-300));
  Eigen::VectorXd dz = p;
  dz(label) -= 1.0;
  const Eigen::VectorXd ds = out_w_.transpose() * dz;
  out_w_ -= lr * dz * s.transpose();
  out_b_ -= lr * dz;
  for (int id : ids) {
    if (id != Vocabulary::kMaskId) embeddings_.row(id) -= lr * ds.transpose();
  }
  return loss;
}

// ---------------------------------------------------------------------------
// relu_mlp

ReluMlpModel::ReluMlpModel(Vocabulary vocab, Eigen::MatrixXd embeddings,
                           std::vector<Layer> hidden, Eigen::MatrixXd out_w,
                           Eigen::VectorXd out_b)
    : ToyModel(std::move(vocab), std::move(embeddings), std::move(out_w),
               std::move(out_b)),
      hidden_(std::move(hidden)) {
  if (hidden_.empty()) throw ModelError("relu_mlp needs a hidden layer");
  Eigen::Index in = embeddings_.cols();
  for (const auto& layer : hidden_) {
    if (layer.weight.cols() != in || layer.weight.rows() != layer.bias.size()) {
      throw ModelError("relu_mlp hidden layer shape mismatch");
    }
    if (layer.bias.size() != hidden_.front().bias.size()) {
      throw ModelError("relu_mlp hidden layers must share one width");
    }
    in = layer.weight.rows();
  }
  if (out_w_.cols() != in) throw ModelError("relu_mlp output width mismatch");
}

ReluMlpModel::Trace ReluMlpModel::run(const Eigen::MatrixXd& embeddings) const {
  if (embeddings.rows() == 0) throw ModelError("empty input");
  Trace t;
  Eigen::MatrixXd x = embeddings.transpose();  // d x n
  for (const auto& layer : hidden_) {
    Eigen::MatrixXd pre = (layer.weight * x).colwise() + layer.bias;
    Eigen::MatrixXd post = pre.cwiseMax(0.0);
    t.pre.push_back(std::move(pre));
    t.post.push_back(post);
    x = std::move(post);
  }
  t.pooled = x.rowwise().mean();
  t.logits = out_w_ * t.pooled + out_b_;
  return t;
}

Eigen::MatrixXd ReluMlpModel::backward_to_embeddings(
    const Trace& trace, const Eigen::VectorXd& grad_logits,
    BackwardMode mode) const {
  const Eigen::Index n = trace.post.front().cols();
  const Eigen::VectorXd g_pooled = out_w_.transpose() * grad_logits;
  Eigen::MatrixXd g = (g_pooled / static_cast<double>(n)).replicate(1, n);
  for (size_t l = hidden_.size(); l-- > 0;) {
    Eigen::MatrixXd g_pre =
        g.cwiseProduct((trace.pre[l].array() > 0.0).cast<double>().matrix());
    if (mode == BackwardMode::kGuided) g_pre = g_pre.cwiseMax(0.0);
    g = hidden_[l].weight.transpose() * g_pre;
  }
  return g.transpose();
}

Eigen::VectorXd ReluMlpModel::forward(const Eigen::MatrixXd& embeddings,
                                      OutputSpace space) const {
  count_forward(static_cast<size_t>(embeddings.rows()));
  const Trace t = run(embeddings);
  return space == OutputSpace::kLogit ? t.logits : softmax(t.logits);
}

ActivationSummary ReluMlpModel::activations(
    const Eigen::MatrixXd& embeddings) const {
  const Trace t = run(embeddings);
  std::vector<Eigen::VectorXd> layers;
  for (const auto& post : t.post) layers.push_back(post.rowwise().mean());
  return ActivationSummary::from_layers(std::move(layers));
}

Eigen::MatrixXd ReluMlpModel::grad_wrt_embeddings(
    const Eigen::MatrixXd& embeddings, int cls, OutputSpace space,
    BackwardMode mode) const {
  if (cls < 0 || cls >= num_classes()) throw ModelError("class out of range");
  count_backward(static_cast<size_t>(embeddings.rows()));
  const Trace t = run(embeddings);
  return backward_to_embeddings(t, output_grad_wrt_logits(t.logits, cls, space),
                                mode);
}

double ReluMlpModel::forward_flops(size_t n) const {
  double per_token = 0.0;
  for (const auto& layer : hidden_) {
    per_token += 2.0 * static_cast<double>(layer.weight.size());
  }
  const double c = num_classes();
  const double width = static_cast<double>(out_w_.cols());
  return static_cast<double>(n) * (per_token + width) + 2.0 * c * width +
         3.0 * c;
}

double ReluMlpModel::backward_flops(size_t n) const {
  return 3.0 * forward_flops(n);
}

std::vector<NamedTensor> ReluMlpModel::tensors() const {
  std::vector<NamedTensor> out{{"embeddings", embeddings_}};
  for (size_t l = 0; l < hidden_.size(); ++l) {
    out.push_back({"hidden" + std::to_string(l) + "_w", hidden_[l].weight});
    out.push_back({"hidden" + std::to_string(l) + "_b",
                   Eigen::MatrixXd(hidden_[l].bias)});
  }
  out.push_back({"out_w", out_w_});
  out.push_back({"out_b", Eigen::MatrixXd(out_b_)});
  return out;
}

double ReluMlpModel::sgd_step(std::span<const int> ids, int label, double lr) {
  const Eigen::MatrixXd e = embed(ids);
  const Trace t = run(e);
  const Eigen::VectorXd p = softmax(t.logits);
  const double loss = -std::log(std::max(p(label), 1e-300));
  Eigen::VectorXd dz = p;
  dz(label) -= 1.0;

  const Eigen::Index n = e.rows();
  const Eigen::VectorXd g_pooled = out_w_.transpose() * dz;
  out_w_ -= lr * dz * t.pooled.transpose();
  out_b_ -= lr * dz;

  Eigen::MatrixXd g = (g_pooled / static_cast<double>(n)).replicate(1, n);
  for (size_t l = hidden_.size(); l-- > 0;) {
    const Eigen::MatrixXd g_pre =
        g.cwiseProduct((t.pre[l].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& input = l == 0 ? Eigen::MatrixXd(e.transpose())
                                          : t.post[l - 1];
    g = hidden_[l].weight.transpose() * g_pre;
    hidden_[l].weight -= lr * g_pre * input.transpose();
    hidden_[l].bias -= lr * g_pre.rowwise().sum();
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    const int id = ids[static_cast<size_t>(j)];
    if (id != Vocabulary::kMaskId) {
      embeddings_.row(id) -= lr * g.col(j).transpose();
    }
  }
  return loss;
}

}  // namespace xdiag
