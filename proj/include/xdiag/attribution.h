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

#ifndef XDIAG_ATTRIBUTION_H_
#define XDIAG_ATTRIBUTION_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "xdiag/corpus.h"
#include "xdiag/model_port.h"

namespace xdiag {

class AttributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-class, per-token attribution scores for one instance.
struct SaliencyMap {
  std::string instance_id;
  std::string technique;
  Eigen::MatrixXd class_scores;  // num_classes x num_tokens, raw and signed
  int predicted_class = 0;
  double confidence = 0.0;
  CostRecord cost;

  int num_classes() const { return static_cast<int>(class_scores.rows()); }
  int num_tokens() const { return static_cast<int>(class_scores.cols()); }
  Eigen::VectorXd row(int cls) const { return class_scores.row(cls).transpose(); }
  // Min-max scaled over the whole map; a constant map scales to zeros.
  Eigen::MatrixXd normalized() const;
};

// Embedding-dimension reduction for gradient techniques.
enum class Aggregation { kMean, kL2 };

struct AttributionOptions {
  OutputSpace output = OutputSpace::kProbability;
  Aggregation aggregation = Aggregation::kL2;
  uint64_t seed = 0;
  int shapley_samples = 100;
  // Visit every permutation instead of sampling (only for short inputs).
  bool shapley_enumerate = false;
  int lime_perturbations = 500;
  double lime_ridge = 1e-3;
};

SaliencyMap attr_random(const Instance& inst, const ModelPort& model,
                        uint64_t seed);
SaliencyMap attr_gradient(const Instance& inst, const ModelPort& model,
                          Aggregation agg,
                          OutputSpace output = OutputSpace::kProbability);
SaliencyMap attr_input_x_gradient(
    const Instance& inst, const ModelPort& model, Aggregation agg,
    OutputSpace output = OutputSpace::kProbability);
SaliencyMap attr_guided_backprop(
    const Instance& inst, const ModelPort& model, Aggregation agg,
    OutputSpace output = OutputSpace::kProbability);
SaliencyMap attr_occlusion(const Instance& inst, const ModelPort& model,
                           OutputSpace output = OutputSpace::kProbability);
// n_samples random permutations; each token's score is its mean marginal
// contribution when added to the coalition of tokens preceding it, starting
// from the all-mask input.
SaliencyMap attr_shapley_sampling(const Instance& inst, const ModelPort& model,
                                  int n_samples, uint64_t seed,
                                  OutputSpace output = OutputSpace::kProbability,
                                  bool enumerate_permutations = false);
// Weighted ridge surrogate over random token-keep masks with an exponential
// kernel on the Hamming distance to the full input.
SaliencyMap attr_lime(const Instance& inst, const ModelPort& model,
                      int n_perturbations, uint64_t seed,
                      OutputSpace output = OutputSpace::kProbability,
                      double ridge = 1e-3);

// Technique tags: random, gradient_mu, gradient_l2, inputxgrad_mu,
// inputxgrad_l2, guided_bp_mu, guided_bp_l2, occlusion, shapley, lime.
const std::vector<std::string>& technique_tags();
bool is_technique_tag(std::string_view tag);

// Runs the technique named by `tag`. Random streams derive from
// (options.seed, tag, instance id).
SaliencyMap compute_saliency(std::string_view tag, const Instance& inst,
                             const ModelPort& model,
                             const AttributionOptions& options);

// One JSON record per line; wall_seconds is not written so files are
// reproducible.
std::string saliency_to_json_line(const SaliencyMap& map);
SaliencyMap saliency_from_json_line(std::string_view line);
void write_saliency_file(const std::filesystem::path& path,
                         std::span<const SaliencyMap> maps);
std::vector<SaliencyMap> read_saliency_file(const std::filesystem::path& path);

// Token indices ordered by descending score, ties by ascending index.
std::vector<size_t> rank_descending(const Eigen::VectorXd& scores);

}  // namespace xdiag

#endif  // XDIAG_ATTRIBUTION_H_
