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

#include "xdiag/attribution.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "xdiag/random.h"

namespace xdiag {
namespace {

using nlohmann::json;

// Counts the model calls one technique makes on one instance.
class Meter {
 public:
  explicit Meter(const ModelPort& model)
      : model_(model), start_(std::chrono::steady_clock::now()) {}

  Eigen::VectorXd forward(const std::vector<int>& ids, OutputSpace space) {
    note_forward(ids.size());
    return model_.forward(model_.embed(ids), space);
  }
  Eigen::VectorXd forward(const Eigen::MatrixXd& emb, OutputSpace space) {
    note_forward(static_cast<size_t>(emb.rows()));
    return model_.forward(emb, space);
  }
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& emb, int cls,
                           OutputSpace space, BackwardMode mode) {
    cost_.backward_count += 1;
    cost_.flops += model_.backward_flops(static_cast<size_t>(emb.rows()));
    return model_.grad_wrt_embeddings(emb, cls, space, mode);
  }
  CostRecord finish() {
    cost_.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_)
                             .count();
    return cost_;
  }

 private:
  void note_forward(size_t n) {
    cost_.forward_count += 1;
    cost_.flops += model_.forward_flops(n);
  }

  const ModelPort& model_;
  std::chrono::steady_clock::time_point start_;
  CostRecord cost_;
};

SaliencyMap start_map(const Instance& inst, const std::string& technique,
                      Meter& meter, const Eigen::MatrixXd& emb,
                      int num_classes) {
  if (inst.tokens.empty()) {
    throw AttributionError("instance '" + inst.id + "' has no tokens");
  }
  SaliencyMap map;
  map.instance_id = inst.id;
  map.technique = technique;
  map.class_scores = Eigen::MatrixXd::Zero(num_classes, emb.rows());
  const Eigen::VectorXd probs = meter.forward(emb, OutputSpace::kProbability);
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  map.predicted_class = static_cast<int>(best);
  map.confidence = probs(best);
  return map;
}

const char* agg_suffix(Aggregation agg) {
  return agg == Aggregation::kMean ? "_mu" : "_l2";
}

SaliencyMap gradient_family(const Instance& inst, const ModelPort& model,
                            Aggregation agg, OutputSpace output,
                            bool times_input, BackwardMode mode,
                            const std::string& name) {
  if (!model.supports_gradients()) {
    throw AttributionError(name + " needs a model with embedding gradients");
  }
  Meter meter(model);
  const std::vector<int> ids = model.encode(inst.tokens);
  const Eigen::MatrixXd emb = model.embed(ids);
  SaliencyMap map = start_map(inst, name + agg_suffix(agg), meter, emb,
                              model.num_classes());
  for (int c = 0; c < model.num_classes(); ++c) {
    Eigen::MatrixXd g = meter.gradient(emb, c, output, mode);
    if (times_input) g = g.cwiseProduct(emb);
    for (Eigen::Index j = 0; j < g.rows(); ++j) {
      map.class_scores(c, j) =
          agg == Aggregation::kMean ? g.row(j).mean() : g.row(j).norm();
    }
  }
  map.cost = meter.finish();
  return map;
}

}  // namespace

Eigen::MatrixXd SaliencyMap::normalized() const {
  if (class_scores.size() == 0) return class_scores;
  const double lo = class_scores.minCoeff();
  const double hi = class_scores.maxCoeff();
  if (hi - lo <= 0.0) {
    return Eigen::MatrixXd::Zero(class_scores.rows(), class_scores.cols());
  }
  return (class_scores.array() - lo) / (hi - lo);
}

std::vector<size_t> rank_descending(const Eigen::VectorXd& scores) {
  std::vector<size_t> order(static_cast<size_t>(scores.size()));
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores(static_cast<Eigen::Index>(a)) >
           scores(static_cast<Eigen::Index>(b));
  });
  return order;
}

SaliencyMap attr_random(const Instance& inst, const ModelPort& model,
                        uint64_t seed) {
  Meter meter(model);
  const Eigen::MatrixXd emb = model.embed(model.encode(inst.tokens));
  SaliencyMap map =
      start_map(inst, "random", meter, emb, model.num_classes());
  Rng rng(derive_seed(seed, "random", inst.id));
  for (Eigen::Index c = 0; c < map.class_scores.rows(); ++c) {
    for (Eigen::Index j = 0; j < map.class_scores.cols(); ++j) {
      map.class_scores(c, j) = rng.uniform();
    }
  }
  map.cost = meter.finish();
  return map;
}

SaliencyMap attr_gradient(const Instance& inst, const ModelPort& model,
                          Aggregation agg, OutputSpace output) {
  return gradient_family(inst, model, agg, output, false, BackwardMode::kPlain,
                         "gradient");
}

SaliencyMap attr_input_x_gradient(const Instance& inst, const ModelPort& model,
                                  Aggregation agg, OutputSpace output) {
  return gradient_family(inst, model, agg, output, true, BackwardMode::kPlain,
                         "inputxgrad");
}

SaliencyMap attr_guided_backprop(const Instance& inst, const ModelPort& model,
                                 Aggregation agg, OutputSpace output) {
  if (!model.supports_relu_override()) {
    throw AttributionError(
        "guided backprop needs a model with a ReLU gradient override");
  }
  return gradient_family(inst, model, agg, output, false,
                         BackwardMode::kGuided, "guided_bp");
}

SaliencyMap attr_occlusion(const Instance& inst, const ModelPort& model,
                           OutputSpace output) {
  Meter meter(model);
  const std::vector<int> ids = model.encode(inst.tokens);
  const Eigen::MatrixXd emb = model.embed(ids);
  SaliencyMap map =
      start_map(inst, "occlusion", meter, emb, model.num_classes());
  const Eigen::VectorXd full = meter.forward(emb, output);
  std::vector<int> masked = ids;
  for (size_t j = 0; j < ids.size(); ++j) {
    masked[j] = model.mask_token_id();
    map.class_scores.col(static_cast<Eigen::Index>(j)) =
        full - meter.forward(masked, output);
    masked[j] = ids[j];
  }
  map.cost = meter.finish();
  return map;
}

SaliencyMap attr_shapley_sampling(const Instance& inst, const ModelPort& model,
                                  int n_samples, uint64_t seed,
                                  OutputSpace output,
                                  bool enumerate_permutations) {
  if (n_samples < 1 && !enumerate_permutations) {
    throw AttributionError("shapley sampling needs n_samples >= 1");
  }
  Meter meter(model);
  const std::vector<int> ids = model.encode(inst.tokens);
  const size_t n = ids.size();
  if (enumerate_permutations && n > 9) {
    throw AttributionError("permutation enumeration is limited to 9 tokens");
  }
  SaliencyMap map = start_map(inst, "shapley", meter, model.embed(ids),
                              model.num_classes());
  const std::vector<int> all_masked(n, model.mask_token_id());
  const Eigen::VectorXd empty_value = meter.forward(all_masked, output);

  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t{0});
  auto accumulate = [&](const std::vector<size_t>& order) {
    std::vector<int> coalition = all_masked;
    Eigen::VectorXd prev = empty_value;
    for (size_t k : order) {
      coalition[k] = ids[k];
      Eigen::VectorXd cur = meter.forward(coalition, output);
      map.class_scores.col(static_cast<Eigen::Index>(k)) += cur - prev;
      prev = std::move(cur);
    }
  };

  double count = 0.0;
  if (enumerate_permutations) {
    do {
      accumulate(perm);
      count += 1.0;
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    Rng rng(derive_seed(seed, "shapley", inst.id));
    for (int s = 0; s < n_samples; ++s) {
      rng.shuffle(perm);
      accumulate(perm);
      count += 1.0;
    }
  }
  map.class_scores /= count;
  map.cost = meter.finish();
  return map;
}

SaliencyMap attr_lime(const Instance& inst, const ModelPort& model,
                      int n_perturbations, uint64_t seed, OutputSpace output,
                      double ridge) {
  Meter meter(model);
  const std::vector<int> ids = model.encode(inst.tokens);
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  if (n_perturbations < n + 1) {
    throw AttributionError("lime needs n_perturbations >= num_tokens + 1");
  }
  SaliencyMap map =
      start_map(inst, "lime", meter, model.embed(ids), model.num_classes());

  Rng rng(derive_seed(seed, "lime", inst.id));
  const Eigen::Index m = n_perturbations;
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(m, n + 1);
  Eigen::MatrixXd targets(m, model.num_classes());
  Eigen::VectorXd weights(m);
  const double width = 0.25 * static_cast<double>(n);
  std::vector<size_t> positions(static_cast<size_t>(n));
  std::iota(positions.begin(), positions.end(), size_t{0});
  for (Eigen::Index i = 0; i < m; ++i) {
    std::vector<int> perturbed = ids;
    size_t removed = 0;
    // The first sample is the unperturbed input.
    if (i > 0) {
      removed = 1 + static_cast<size_t>(rng.uniform_int(static_cast<uint64_t>(n)));
      rng.shuffle(positions);
      for (size_t r = 0; r < removed; ++r) {
        perturbed[positions[r]] = model.mask_token_id();
        design(i, static_cast<Eigen::Index>(positions[r]) + 1) = 0.0;
      }
    }
    const double dist = static_cast<double>(removed);
    weights(i) = std::exp(-(dist * dist) / (width * width));
    targets.row(i) = meter.forward(perturbed, output).transpose();
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < n + 1) {
    throw AttributionError(
        "lime design matrix is degenerate; increase n_perturbations");
  }
  const Eigen::MatrixXd xtw = design.transpose() * weights.asDiagonal();
  Eigen::MatrixXd gram = xtw * design;
  gram.diagonal().tail(n).array() += ridge;
  const Eigen::MatrixXd coef = gram.ldlt().solve(xtw * targets);
  map.class_scores = coef.bottomRows(n).transpose();
  map.cost = meter.finish();
  return map;
}

const std::vector<std::string>& technique_tags() {
  static const std::vector<std::string> tags = {
      "random",        "gradient_mu",  "gradient_l2", "inputxgrad_mu",
      "inputxgrad_l2", "guided_bp_mu", "guided_bp_l2", "occlusion",
      "shapley",       "lime"};
  return tags;
}

bool is_technique_tag(std::string_view tag) {
  const auto& tags = technique_tags();
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

SaliencyMap compute_saliency(std::string_view tag, const Instance& inst,
                             const ModelPort& model,
                             const AttributionOptions& o) {
  if (tag == "random") return attr_random(inst, model, o.seed);
  if (tag == "gradient_mu") {
    return attr_gradient(inst, model, Aggregation::kMean, o.output);
  }
  if (tag == "gradient_l2") {
    return attr_gradient(inst, model, Aggregation::kL2, o.output);
  }
  if (tag == "inputxgrad_mu") {
    return attr_input_x_gradient(inst, model, Aggregation::kMean, o.output);
  }
  if (tag == "inputxgrad_l2") {
    return attr_input_x_gradient(inst, model, Aggregation::kL2, o.output);
  }
  if (tag == "guided_bp_mu") {
    return attr_guided_backprop(inst, model, Aggregation::kMean, o.output);
  }
  if (tag == "guided_bp_l2") {
    return attr_guided_backprop(inst, model, Aggregation::kL2, o.output);
  }
  if (tag == "occlusion") return attr_occlusion(inst, model, o.output);
  if (tag == "shapley") {
    return attr_shapley_sampling(inst, model, o.shapley_samples, o.seed,
                                 o.output, o.shapley_enumerate);
  }
  if (tag == "lime") {
    return attr_lime(inst, model, o.lime_perturbations, o.seed, o.output,
                     o.lime_ridge);
  }
  throw AttributionError("unknown technique '" + std::string(tag) + "'");
}

std::string saliency_to_json_line(const SaliencyMap& map) {
  json scores = json::array();
  for (Eigen::Index c = 0; c < map.class_scores.rows(); ++c) {
    json row = json::array();
    for (Eigen::Index j = 0; j < map.class_scores.cols(); ++j) {
      row.push_back(map.class_scores(c, j));
    }
    scores.push_back(std::move(row));
  }
  const json j{{"instance_id", map.instance_id},
               {"technique", map.technique},
               {"class_scores", std::move(scores)},
               {"predicted_class", map.predicted_class},
               {"confidence", map.confidence},
               {"cost",
                {{"forward_count", map.cost.forward_count},
                 {"backward_count", map.cost.backward_count},
                 {"flops", map.cost.flops}}}};
  return j.dump();
}

SaliencyMap saliency_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    SaliencyMap map;
    map.instance_id = j.at("instance_id").get<std::string>();
    map.technique = j.at("technique").get<std::string>();
    const auto& rows = j.at("class_scores");
    const Eigen::Index c = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index n =
        c == 0 ? 0 : static_cast<Eigen::Index>(rows.at(0).size());
    map.class_scores.resize(c, n);
    for (Eigen::Index r = 0; r < c; ++r) {
      const auto& row = rows.at(static_cast<size_t>(r));
      if (static_cast<Eigen::Index>(row.size()) != n) {
        throw AttributionError("ragged class_scores");
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        map.class_scores(r, k) = row.at(static_cast<size_t>(k)).get<double>();
      }
    }
    map.predicted_class = j.at("predicted_class").get<int>();
    map.confidence = j.at("confidence").get<double>();
    if (j.contains("cost")) {
      const auto& cost = j.at("cost");
      map.cost.forward_count = cost.value("forward_count", uint64_t{0});
      map.cost.backward_count = cost.value("backward_count", uint64_t{0});
      map.cost.flops = cost.value("flops", 0.0);
    }
    if (map.predicted_class < 0 || map.predicted_class >= c) {
      throw AttributionError("predicted_class out of range");
    }
    return map;
  } catch (const json::exception& e) {
    throw AttributionError(std::string("malformed saliency record: ") +
                           e.what());
  }
}

void write_saliency_file(const std::filesystem::path& path,
                         std::span<const SaliencyMap> maps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AttributionError("cannot write " + path.string());
  for (const auto& m : maps) out << saliency_to_json_line(m) << '\n';
}

std::vector<SaliencyMap> read_saliency_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AttributionError("cannot read " + path.string());
  std::vector<SaliencyMap> maps;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      maps.push_back(saliency_from_json_line(line));
    } catch (const AttributionError& e) {
      throw AttributionError(path.string() + ":" + std::to_string(line_no) +
                             ": " + e.what());
    }
  }
  return maps;
}

}  // namespace xdiag
