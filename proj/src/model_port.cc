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

#include "xdiag/model_port.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "xdiag/digest.h"
#include "xdiag/random.h"
#include "xdiag/toy_models.h"

namespace xdiag {

using nlohmann::json;

ActivationSummary ActivationSummary::from_layers(
    std::vector<Eigen::VectorXd> layers) {
  if (layers.empty()) throw ModelError("activation summary needs a layer");
  ActivationSummary s;
  s.pooled = Eigen::VectorXd::Zero(layers.front().size());
  for (const auto& l : layers) {
    if (l.size() != s.pooled.size()) {
      throw ModelError("activation layers differ in width");
    }
    s.pooled += l;
  }
  s.pooled /= static_cast<double>(layers.size());
  s.per_layer = std::move(layers);
  return s;
}

CostRecord& CostRecord::operator+=(const CostRecord& o) {
  forward_count += o.forward_count;
  backward_count += o.backward_count;
  flops += o.flops;
  wall_seconds += o.wall_seconds;
  return *this;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  auto add = [this](const std::string& w) {
    if (index_.emplace(w, static_cast<int>(words_.size())).second) {
      words_.push_back(w);
    }
  };
  add(kMaskToken);
  add(kUnkToken);
  for (const auto& w : words) add(w);
}

Vocabulary Vocabulary::from_dataset(const Dataset& dataset) {
  std::set<std::string> words;
  for (const auto& inst : dataset.instances) {
    words.insert(inst.tokens.begin(), inst.tokens.end());
  }
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

int Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

ForwardResult ModelPort::forward_tokens(std::span<const int> ids) const {
  const Eigen::MatrixXd e = embed(ids);
  return ForwardResult{forward(e), activations(e)};
}

CostRecord ModelPort::op_cost() const {
  CostRecord c;
  c.forward_count = forwards_.load();
  c.backward_count = backwards_.load();
  c.flops = flops_.load();
  return c;
}

void ModelPort::count_forward(size_t n_tokens) const {
  forwards_.fetch_add(1, std::memory_order_relaxed);
  flops_.fetch_add(forward_flops(n_tokens), std::memory_order_relaxed);
}

void ModelPort::count_backward(size_t n_tokens) const {
  backwards_.fetch_add(1, std::memory_order_relaxed);
  flops_.fetch_add(backward_flops(n_tokens), std::memory_order_relaxed);
}

Eigen::VectorXd forward_masked(const ModelPort& model, std::span<const int> ids,
                               std::span<const size_t> mask_positions,
                               OutputSpace space) {
  std::vector<int> masked(ids.begin(), ids.end());
  for (size_t pos : mask_positions) {
    if (pos >= masked.size()) throw ModelError("mask position out of range");
    masked[pos] = model.mask_token_id();
  }
  return model.forward(model.embed(masked), space);
}

double activation_distance(const ActivationSummary& a,
                           const ActivationSummary& b) {
  if (a.pooled.size() != b.pooled.size() || a.pooled.size() == 0) {
    throw ModelError("activation summaries differ in shape");
  }
  return (a.pooled - b.pooled).cwiseAbs().mean();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// ModelSpec

const char* to_string(Architecture a) {
  return a == Architecture::kLinearBoe ? "linear_boe" : "relu_mlp";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "linear_boe") return Architecture::kLinearBoe;
  if (s == "relu_mlp") return Architecture::kReluMlp;
  throw ModelError("unknown architecture '" + std::string(s) + "'");
}

namespace {

Init parse_init(std::string_view s) {
  if (s == "trained") return Init::kTrained;
  if (s == "random") return Init::kRandom;
  throw ModelError("unknown init '" + std::string(s) + "'");
}

std::vector<int> parse_widths(const std::string& s) {
  std::vector<int> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, 'x')) out.push_back(std::stoi(part));
  return out;
}

json spec_to_json_object(const ModelSpec& s) {
  return json{{"architecture", to_string(s.architecture)},
              {"seed", s.seed},
              {"init", s.init == Init::kTrained ? "trained" : "random"},
              {"embedding_dim", s.embedding_dim},
              {"hidden_sizes", s.hidden_sizes},
              {"vocabulary", s.vocabulary},
              {"num_classes", s.num_classes},
              {"epochs", s.epochs},
              {"learning_rate", s.learning_rate},
              {"init_scale", s.init_scale},
              {"train_data_digest", s.train_data_digest}};
}

ModelSpec spec_from_json_object(const json& j) {
  ModelSpec s;
  s.architecture = parse_architecture(j.at("architecture").get<std::string>());
  s.seed = j.value("seed", uint64_t{0});
  s.init = parse_init(j.value("init", std::string("trained")));
  s.embedding_dim = j.value("embedding_dim", s.embedding_dim);
  s.hidden_sizes = j.value("hidden_sizes", s.hidden_sizes);
  s.vocabulary = j.value("vocabulary", s.vocabulary);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.epochs = j.value("epochs", s.epochs);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  s.init_scale = j.value("init_scale", s.init_scale);
  s.train_data_digest = j.value("train_data_digest", std::string());
  return s;
}

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                         double scale) {
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill keeps the draw order independent of storage order.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  }
  return m;
}

void validate_spec(const ModelSpec& spec) {
  if (spec.embedding_dim < 1) throw ModelError("embedding dim must be >= 1");
  if (spec.architecture == Architecture::kReluMlp) {
    if (spec.hidden_sizes.empty()) {
      throw ModelError("relu_mlp needs at least one hidden size");
    }
    for (int w : spec.hidden_sizes) {
      if (w != spec.hidden_sizes.front() || w < 1) {
        throw ModelError("relu_mlp hidden sizes must be equal and positive");
      }
    }
  }
  if (spec.epochs < 0) throw ModelError("epochs must be >= 0");
  if (!(spec.learning_rate > 0.0)) throw ModelError("learning rate must be > 0");
}

}  // namespace

ModelSpec parse_model_spec(std::string_view text) {
  ModelSpec spec;
  const size_t colon = text.find(':');
  spec.architecture = parse_architecture(text.substr(0, colon));
  if (colon == std::string_view::npos) return spec;
  std::stringstream in{std::string(text.substr(colon + 1))};
  std::string kv;
  while (std::getline(in, kv, ',')) {
    if (kv.empty()) continue;
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ModelError("model option '" + kv + "' is not key=value");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "init") {
        spec.init = parse_init(value);
      } else if (key == "dim") {
        spec.embedding_dim = std::stoi(value);
      } else if (key == "hidden") {
        spec.hidden_sizes = parse_widths(value);
      } else if (key == "epochs") {
        spec.epochs = std::stoi(value);
      } else if (key == "lr") {
        spec.learning_rate = std::stod(value);
      } else if (key == "scale") {
        spec.init_scale = std::stod(value);
      } else if (key == "classes") {
        spec.num_classes = std::stoi(value);
      } else {
        throw ModelError("unknown model option '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ModelError("bad value for model option '" + key + "'");
    }
  }
  validate_spec(spec);
  return spec;
}

std::string model_spec_to_json(const ModelSpec& spec) {
  return spec_to_json_object(spec).dump();
}

ModelSpec model_spec_from_json(std::string_view text) {
  return spec_from_json_object(json::parse(text));
}

std::string model_spec_digest(const ModelSpec& spec) {
  return sha256_hex(model_spec_to_json(spec));
}

std::unique_ptr<ModelPort> build_model(const ModelSpec& spec_in,
                                       const Dataset* train_data) {
  ModelSpec spec = spec_in;
  validate_spec(spec);
  if (spec.init == Init::kTrained && train_data == nullptr) {
    throw ModelError("a trained model needs training data");
  }
  Vocabulary vocab = !spec.vocabulary.empty() ? Vocabulary(spec.vocabulary)
                     : train_data != nullptr ? Vocabulary::from_dataset(*train_data)
                                             : Vocabulary();
  int classes = spec.num_classes;
  if (classes == 0 && train_data != nullptr) {
    classes = train_data->header.num_classes();
  }
  if (classes < 1) throw ModelError("number of classes is unknown");
  if (spec.vocabulary.empty()) {
    spec.vocabulary.assign(vocab.words().begin(), vocab.words().end());
  }
  spec.num_classes = classes;
  if (spec.init == Init::kTrained && spec.train_data_digest.empty()) {
    spec.train_data_digest = sha256_hex(serialize_dataset(*train_data));
  }

  Rng init_rng(derive_seed(spec.seed, "init"));
  const int d = spec.embedding_dim;
  Eigen::MatrixXd emb = gaussian(init_rng, static_cast<Eigen::Index>(vocab.size()),
                                 d, spec.init_scale);
  emb.row(Vocabulary::kMaskId).setZero();

  std::unique_ptr<ToyModel> model;
  if (spec.architecture == Architecture::kLinearBoe) {
    Eigen::MatrixXd w = gaussian(init_rng, classes, d, 1.0 / std::sqrt(d));
    model = std::make_unique<LinearBoeModel>(std::move(vocab), std::move(emb),
                                             std::move(w),
                                             Eigen::VectorXd::Zero(classes));
  } else {
    std::vector<ReluMlpModel::Layer> hidden;
    int in = d;
    for (int width : spec.hidden_sizes) {
      hidden.push_back({gaussian(init_rng, width, in, std::sqrt(2.0 / in)),
                        Eigen::VectorXd::Zero(width)});
      in = width;
    }
    Eigen::MatrixXd w = gaussian(init_rng, classes, in, 1.0 / std::sqrt(in));
    model = std::make_unique<ReluMlpModel>(std::move(vocab), std::move(emb),
                                           std::move(hidden), std::move(w),
                                           Eigen::VectorXd::Zero(classes));
  }

  if (spec.init == Init::kTrained) {
    std::vector<std::vector<int>> encoded;
    std::vector<int> labels;
    for (const auto& inst : train_data->instances) {
      encoded.push_back(model->encode(inst.tokens));
      labels.push_back(inst.label);
    }
    std::vector<size_t> order(encoded.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(derive_seed(spec.seed, "train-order"));
    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (size_t i : order) {
        const double loss =
            model->sgd_step(encoded[i], labels[i], spec.learning_rate);
        if (!std::isfinite(loss)) {
          throw ModelError("training diverged at epoch " +
                           std::to_string(epoch));
        }
      }
    }
  }
  model->set_spec(std::move(spec));
  return model;
}

// ---------------------------------------------------------------------------
// Weight files

void write_tensor_file(const std::filesystem::path& path,
                       const std::string& meta_json,
                       std::span<const NamedTensor> tensors) {
  static_assert(std::endian::native == std::endian::little,
                "weight files are little-endian");
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw ModelError("cannot write " + path.string());
  json shapes = json::array();
  uint64_t offset = 0;
  for (const auto& t : tensors) {
    shapes.push_back({{"name", t.name},
                      {"rows", t.value.rows()},
                      {"cols", t.value.cols()},
                      {"offset", offset}});
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        const double v = t.value(r, c);
        bin.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
    offset += static_cast<uint64_t>(t.value.size()) * sizeof(double);
  }
  const json sidecar{{"format", "xdiag-tensors-v1"},
                     {"meta", json::parse(meta_json)},
                     {"tensors", shapes}};
  std::ofstream side(path.string() + ".json", std::ios::binary);
  if (!side) throw ModelError("cannot write sidecar for " + path.string());
  side << sidecar.dump(2) << '\n';
}

const Eigen::MatrixXd& TensorFile::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw ModelError("missing tensor " + name);
}

bool TensorFile::contains(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream side(path.string() + ".json");
  if (!side) throw ModelError("missing sidecar for " + path.string());
  json sidecar;
  try {
    sidecar = json::parse(side);
  } catch (const json::exception& e) {
    throw ModelError("malformed sidecar for " + path.string() + ": " + e.what());
  }
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw ModelError("cannot read " + path.string());
  std::ostringstream buf;
  buf << bin.rdbuf();
  const std::string bytes = buf.str();

  TensorFile file;
  file.meta_json = sidecar.at("meta").dump();
  for (const auto& t : sidecar.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<uint64_t>();
    if (offset + static_cast<uint64_t>(rows * cols) * sizeof(double) >
        bytes.size()) {
      throw ModelError("tensor file truncated: " + path.string());
    }
    Eigen::MatrixXd m(rows, cols);
    const char* p = bytes.data() + offset;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        std::memcpy(&m(r, c), p, sizeof(double));
        p += sizeof(double);
      }
    }
    file.tensors.push_back({t.at("name").get<std::string>(), std::move(m)});
  }
  return file;
}

void save_weights(const ModelPort& model, const std::filesystem::path& path) {
  const auto* toy = dynamic_cast<const ToyModel*>(&model);
  if (toy == nullptr) throw ModelError("only toy models can be saved");
  const json meta{{"spec", spec_to_json_object(toy->spec())},
                  {"vocabulary", toy->vocabulary().words()}};
  const std::vector<NamedTensor> tensors = toy->tensors();
  write_tensor_file(path, meta.dump(), tensors);
}

std::unique_ptr<ModelPort> load_weights(const std::filesystem::path& path) {
  const TensorFile file = read_tensor_file(path);
  const json meta = json::parse(file.meta_json);
  ModelSpec spec = spec_from_json_object(meta.at("spec"));
  Vocabulary vocab(meta.at("vocabulary").get<std::vector<std::string>>());
  std::unique_ptr<ToyModel> model;
  if (spec.architecture == Architecture::kLinearBoe) {
    model = std::make_unique<LinearBoeModel>(
        std::move(vocab), file.at("embeddings"), file.at("out_w"),
        file.at("out_b").col(0));
  } else {
    std::vector<ReluMlpModel::Layer> hidden;
    for (size_t l = 0; file.contains("hidden" + std::to_string(l) + "_w"); ++l) {
      hidden.push_back({file.at("hidden" + std::to_string(l) + "_w"),
                        file.at("hidden" + std::to_string(l) + "_b").col(0)});
    }
    model = std::make_unique<ReluMlpModel>(
        std::move(vocab), file.at("embeddings"), std::move(hidden),
        file.at("out_w"), file.at("out_b").col(0));
  }
  model->set_spec(std::move(spec));
  return model;
}

}  // namespace xdiag
