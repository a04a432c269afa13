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

#include "xdiag/diagnostics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "xdiag/random.h"

namespace xdiag {
namespace {

// Looks up one saliency map per instance id.
class MapIndex {
 public:
  explicit MapIndex(std::span<const SaliencyMap> maps) {
    for (const auto& m : maps) index_.emplace(m.instance_id, &m);
  }

  const SaliencyMap& at(const Instance& inst) const {
    const auto it = index_.find(inst.id);
    if (it == index_.end()) {
      throw DiagnosticsError("no saliency map for instance '" + inst.id + "'");
    }
    if (it->second->num_tokens() != static_cast<int>(inst.num_tokens())) {
      throw DiagnosticsError("saliency map for '" + inst.id +
                             "' has the wrong token count");
    }
    return *it->second;
  }

 private:
  std::unordered_map<std::string, const SaliencyMap*> index_;
};

std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int argmax(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace

const char* to_string(Property p) {
  switch (p) {
    case Property::kHA:
      return "HA";
    case Property::kCI:
      return "CI";
    case Property::kF:
      return "F";
    case Property::kRC:
      return "RC";
    case Property::kDC:
      return "DC";
  }
  return "HA";
}

Property parse_property(std::string_view s) {
  std::string u(s);
  std::transform(u.begin(), u.end(), u.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  for (Property p : {Property::kHA, Property::kCI, Property::kF, Property::kRC,
                     Property::kDC}) {
    if (u == to_string(p)) return p;
  }
  throw DiagnosticsError("unknown property '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Human agreement

double average_precision(std::span<const uint8_t> gold,
                         std::span<const double> scores) {
  if (gold.size() != scores.size()) {
    throw DiagnosticsError("gold and scores differ in length");
  }
  const Eigen::Map<const Eigen::VectorXd> s(scores.data(),
                                            static_cast<Eigen::Index>(scores.size()));
  const std::vector<size_t> order = rank_descending(s);
  double hits = 0.0, sum = 0.0;
  for (size_t k = 0; k < order.size(); ++k) {
    if (gold[order[k]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  }
  if (hits == 0.0) throw NoPositivesError("no gold positives");
  return sum / hits;
}

PropertyScore human_agreement(const Dataset& dataset,
                              std::span<const SaliencyMap> maps,
                              bool gold_class_row) {
  const MapIndex index(maps);
  PropertyScore score;
  score.property = Property::kHA;
  double total = 0.0;
  size_t skipped = 0;
  for (const auto& inst : dataset.instances) {
    if (!inst.token_rationale) {
      ++skipped;
      continue;
    }
    const SaliencyMap& map = index.at(inst);
    const std::vector<double> row = to_vector(
        map.row(gold_class_row ? inst.label : map.predicted_class));
    try {
      total += average_precision(*inst.token_rationale, row);
      ++score.n;
    } catch (const NoPositivesError&) {
      ++skipped;
    }
  }
  if (score.n == 0) {
    throw DiagnosticsError("human agreement: no instance has gold tokens");
  }
  if (skipped > 0) {
    score.warnings.push_back(std::to_string(skipped) +
                             " instance(s) without gold tokens skipped");
  }
  score.aux["skipped"] = static_cast<double>(skipped);
  score.value = total / static_cast<double>(score.n);
  return score;
}

// ---------------------------------------------------------------------------
// Confidence indication

Eigen::VectorXd confidence_features(const SaliencyMap& map) {
  const int c = map.num_classes();
  if (c < 2) throw DiagnosticsError("confidence features need >= 2 classes");
  const int k = map.predicted_class;
  const Eigen::Index n = map.class_scores.cols();
  if (c == 2) {
    const int other = 1 - k;
    Eigen::VectorXd f(1);
    f(0) = (map.class_scores.row(k) - map.class_scores.row(other)).sum();
    return f;
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(3);
  for (Eigen::Index j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    double mn = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int o = 0; o < c; ++o) {
      if (o == k) continue;
      const double d = map.class_scores(k, j) - map.class_scores(o, j);
      mx = std::max(mx, d);
      mn = std::min(mn, d);
      sum += d;
    }
    f(0) += mx;
    f(1) += mn;
    f(2) += sum / (c - 1);
  }
  return f;
}

int confidence_bucket(double confidence) {
  const int b = static_cast<int>(std::floor(confidence * 10.0));
  return std::clamp(b, 0, 9);
}

std::vector<size_t> upsample_by_confidence(std::span<const double> confidences,
                                           std::span<const size_t> indices,
                                           uint64_t seed) {
  std::vector<std::vector<size_t>> buckets(10);
  for (size_t i : indices) buckets[confidence_bucket(confidences[i])].push_back(i);
  size_t target = 0;
  for (const auto& b : buckets) target = std::max(target, b.size());
  std::vector<size_t> out(indices.begin(), indices.end());
  Rng rng(derive_seed(seed, "ci-upsample"));
  for (const auto& b : buckets) {
    for (size_t k = b.size(); !b.empty() && k < target; ++k) {
      out.push_back(b[rng.uniform_int(b.size())]);
    }
  }
  return out;
}

void SigmoidProbe::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index m = x.rows(), k = x.cols();
  if (m == 0) throw DiagnosticsError("probe needs training rows");
  mean_ = x.colwise().mean().transpose();
  scale_ = ((x.rowwise() - mean_.transpose()).array().square().colwise().sum() /
            static_cast<double>(m))
               .sqrt()
               .transpose();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(scale_(i) > 1e-12)) scale_(i) = 1.0;
  }
  Eigen::MatrixXd design(m, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) =
      (x.rowwise() - mean_.transpose()).array().rowwise() /
      scale_.transpose().array();

  const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
  theta(0) = std::log(ybar / (1.0 - ybar));
  auto residuals = [&](const Eigen::VectorXd& t) {
    return Eigen::VectorXd((design * t).unaryExpr(&sigmoid) - y);
  };
  Eigen::VectorXd r = residuals(theta);
  double loss = r.squaredNorm();
  double damping = 1e-3;
  for (int iter = 0; iter < 500 && loss > 0.0; ++iter) {
    const Eigen::VectorXd p = (design * theta).unaryExpr(&sigmoid);
    const Eigen::MatrixXd jac =
        design.array().colwise() * (p.array() * (1.0 - p.array()));
    Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (grad.cwiseAbs().maxCoeff() < 1e-14) break;
    bool improved = false;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd damped = normal;
      damped.diagonal().array() += damping * (1.0 + normal.diagonal().array());
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      const Eigen::VectorXd candidate = theta + step;
      const Eigen::VectorXd rc = residuals(candidate);
      const double lc = rc.squaredNorm();
      if (std::isfinite(lc) && lc < loss) {
        const double rel = (loss - lc) / std::max(loss, 1e-300);
        theta = candidate;
        r = rc;
        loss = lc;
        damping = std::max(damping / 10.0, 1e-12);
        improved = rel > 1e-12;
        break;
      }
      damping *= 10.0;
    }
    if (!improved) break;
  }
  bias_ = theta(0);
  weights_ = theta.tail(k);
}

double SigmoidProbe::predict(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z =
      (x - mean_).array() / scale_.array();
  return sigmoid(bias_ + weights_.dot(z));
}

PropertyScore confidence_indication(std::span<const SaliencyMap> maps,
                                    const ConfidenceOptions& options) {
  const size_t m = maps.size();
  if (m < 10) throw DiagnosticsError("confidence indication needs >= 10 maps");
  if (options.n_splits < 2 || static_cast<size_t>(options.n_splits) > m) {
    throw DiagnosticsError("invalid number of splits");
  }
  std::vector<Eigen::VectorXd> features;
  std::vector<double> confidence;
  for (const auto& map : maps) {
    features.push_back(confidence_features(map));
    confidence.push_back(map.confidence);
  }
  const Eigen::Index k = features.front().size();

  std::vector<size_t> order(m);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(derive_seed(options.seed, "ci-folds"));
  rng.shuffle(order);

  PropertyScore score;
  score.property = Property::kCI;
  double mae_sum = 0.0, max_error = 0.0;
  std::vector<double> fold_mae;
  for (int fold = 0; fold < options.n_splits; ++fold) {
    std::vector<size_t> train, test;
    for (size_t i = 0; i < m; ++i) {
      (static_cast<int>(i % options.n_splits) == fold ? test : train)
          .push_back(order[i]);
    }
    if (options.upsample) {
      train = upsample_by_confidence(
          confidence, train,
          derive_seed(options.seed, "fold", std::to_string(fold)));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(train.size()), k);
    Eigen::VectorXd y(static_cast<Eigen::Index>(train.size()));
    for (size_t r = 0; r < train.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = features[train[r]].transpose();
      y(static_cast<Eigen::Index>(r)) = confidence[train[r]];
    }
    SigmoidProbe probe;
    probe.fit(x, y);
    double err_sum = 0.0;
    for (size_t i : test) {
      const double err = std::abs(confidence[i] - probe.predict(features[i]));
      err_sum += err;
      max_error = std::max(max_error, err);
    }
    fold_mae.push_back(err_sum / static_cast<double>(test.size()));
    mae_sum += fold_mae.back();
  }
  score.value = mae_sum / options.n_splits;
  score.aux["max"] = max_error;
  score.aux["upsampled"] = options.upsample ? 1.0 : 0.0;
  score.series["fold_mae"] = std::move(fold_mae);
  score.n = m;
  return score;
}

// ---------------------------------------------------------------------------
// Faithfulness

void MaskingSchedule::validate() const {
  if (thresholds.empty()) throw DiagnosticsError("empty masking schedule");
  if (thresholds.front() != 0.0) {
    throw DiagnosticsError("masking schedule must start at 0");
  }
  for (size_t i = 0; i < thresholds.size(); ++i) {
    const double t = thresholds[i];
    if (!(t >= 0.0 && t <= 100.0)) {
      throw DiagnosticsError("masking thresholds must lie in [0, 100]");
    }
    if (i > 0 && !(t > thresholds[i - 1])) {
      throw DiagnosticsError("masking thresholds must be strictly increasing");
    }
  }
}

size_t MaskingSchedule::mask_count(double threshold, size_t n_tokens) {
  const double raw = threshold * static_cast<double>(n_tokens) / 100.0;
  // Guard against 0.1 * 30 landing a hair above 3.
  const double k = std::ceil(raw - 1e-9);
  return std::min(n_tokens, static_cast<size_t>(std::max(0.0, k)));
}

PerfMetric parse_perf_metric(std::string_view s) {
  if (s == "macro_f1") return PerfMetric::kMacroF1;
  if (s == "accuracy") return PerfMetric::kAccuracy;
  throw DiagnosticsError("unknown performance metric '" + std::string(s) + "'");
}

double macro_f1(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size() || gold.empty()) {
    throw DiagnosticsError("macro_f1 needs equal, non-empty label lists");
  }
  std::set<int> labels(gold.begin(), gold.end());
  labels.insert(predicted.begin(), predicted.end());
  double total = 0.0;
  for (int c : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
      const bool g = gold[i] == c, p = predicted[i] == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    total += tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return total / static_cast<double>(labels.size());
}

double accuracy(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size() || gold.empty()) {
    throw DiagnosticsError("accuracy needs equal, non-empty label lists");
  }
  double hits = 0;
  for (size_t i = 0; i < gold.size(); ++i) hits += gold[i] == predicted[i];
  return hits / static_cast<double>(gold.size());
}

PropertyScore faithfulness_auc_tp(const Dataset& dataset, const ModelPort& model,
                                  std::span<const SaliencyMap> maps,
                                  const MaskingSchedule& schedule,
                                  PerfMetric perf) {
  schedule.validate();
  if (dataset.instances.empty()) throw DiagnosticsError("empty dataset");
  const MapIndex index(maps);
  std::vector<int> gold;
  std::vector<std::vector<int>> ids;
  std::vector<std::vector<size_t>> ranking;
  for (const auto& inst : dataset.instances) {
    const SaliencyMap& map = index.at(inst);
    gold.push_back(inst.label);
    ids.push_back(model.encode(inst.tokens));
    ranking.push_back(rank_descending(map.row(map.predicted_class)));
  }
  std::vector<double> performance;
  for (double t : schedule.thresholds) {
    std::vector<int> predicted;
    for (size_t i = 0; i < ids.size(); ++i) {
      const size_t k = MaskingSchedule::mask_count(t, ids[i].size());
      const std::span<const size_t> top(ranking[i].data(), k);
      predicted.push_back(argmax(forward_masked(model, ids[i], top)));
    }
    performance.push_back(perf == PerfMetric::kMacroF1
                              ? macro_f1(gold, predicted)
                              : accuracy(gold, predicted));
  }
  std::vector<double> drop, fraction;
  for (size_t i = 0; i < performance.size(); ++i) {
    drop.push_back(performance.front() - performance[i]);
    fraction.push_back(schedule.thresholds[i] / 100.0);
  }
  double auc = 0.0;
  for (size_t i = 1; i < drop.size(); ++i) {
    auc += 0.5 * (drop[i] + drop[i - 1]) * (fraction[i] - fraction[i - 1]);
  }
  PropertyScore score;
  score.property = Property::kF;
  score.value = auc;
  score.n = dataset.instances.size();
  score.series["thresholds"] = schedule.thresholds;
  score.series["performance"] = std::move(performance);
  score.series["drop"] = std::move(drop);
  return score;
}

// ---------------------------------------------------------------------------
// Consistency

std::vector<double> average_ranks(std::span<const double> values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman_rho(std::span<const double> a,
                            std::span<const double> b) {
  if (a.size() != b.size()) throw DiagnosticsError("series differ in length");
  const size_t n = a.size();
  if (n < 3) throw DiagnosticsError("spearman needs at least 3 points");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    throw ZeroVarianceError("undefined correlation: a series has zero variance");
  }
  SpearmanResult r;
  r.rho = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  const double df = static_cast<double>(n) - 2.0;
  if (std::abs(r.rho) >= 1.0 || df <= 0.0) {
    r.p_value = std::abs(r.rho) >= 1.0 ? 0.0 : 1.0;
    return r;
  }
  const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
  const boost::math::students_t dist(df);
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return r;
}

std::vector<double> min_max_scale(std::span<const double> values) {
  if (values.empty()) throw DiagnosticsError("cannot scale an empty series");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) {
    throw ZeroVarianceError("undefined correlation: constant distance series");
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - *lo) / range);
  return out;
}

double saliency_distance(const ConsistencyPoint& p) {
  const Eigen::VectorXd a = p.map_a.row(p.cls);
  const Eigen::VectorXd b = p.map_b.row(p.cls);
  const Eigen::Index n = std::max(a.size(), b.size());
  if (n == 0) return 0.0;
  Eigen::VectorXd pa = Eigen::VectorXd::Zero(n), pb = Eigen::VectorXd::Zero(n);
  pa.head(a.size()) = a;
  pb.head(b.size()) = b;
  return (pa - pb).cwiseAbs().mean();
}

PropertyScore correlate_distances(Property property,
                                  std::span<const double> act,
                                  std::span<const double> sal) {
  const std::vector<double> sa = min_max_scale(act);
  const std::vector<double> ss = min_max_scale(sal);
  const SpearmanResult r = spearman_rho(sa, ss);
  PropertyScore score;
  score.property = property;
  score.value = r.rho;
  score.aux["p_value"] = r.p_value;
  score.n = act.size();
  score.aux["mean_activation_distance"] =
      std::accumulate(act.begin(), act.end(), 0.0) / static_cast<double>(act.size());
  score.aux["mean_saliency_distance"] =
      std::accumulate(sal.begin(), sal.end(), 0.0) / static_cast<double>(sal.size());
  return score;
}

PropertyScore rationale_consistency(
    const Dataset& dataset,
    std::span<const std::pair<ModelRun, ModelRun>> model_pairs,
    const SaliencyDistanceFn& distance) {
  if (model_pairs.empty()) {
    throw DiagnosticsError("rationale consistency requires >= 2 models");
  }
  std::vector<double> act, sal;
  for (const auto& [first, second] : model_pairs) {
    if (first.model == nullptr || second.model == nullptr) {
      throw DiagnosticsError("model pair with a missing model");
    }
    const MapIndex index_a(first.maps), index_b(second.maps);
    for (const auto& inst : dataset.instances) {
      const ActivationSummary sa =
          first.model->forward_tokens(first.model->encode(inst.tokens))
              .activations;
      const ActivationSummary sb =
          second.model->forward_tokens(second.model->encode(inst.tokens))
              .activations;
      const ConsistencyPoint point{sa, sb, index_a.at(inst), index_b.at(inst),
                                   inst.label};
      act.push_back(activation_distance(sa, sb));
      sal.push_back(distance(point));
    }
  }
  if (act.size() < 20) {
    throw DiagnosticsError(
        "rationale consistency needs >= 20 (pair, instance) points");
  }
  return correlate_distances(Property::kRC, act, sal);
}

std::vector<std::pair<size_t, size_t>> select_instance_pairs(
    const Dataset& dataset, const ConsistencyPairOptions& options,
    std::vector<std::string>* warnings) {
  const size_t n = dataset.instances.size();
  if (n < 2) throw DiagnosticsError("dataset consistency needs >= 2 instances");

  // Lower-cased token types as sorted integer ids.
  std::unordered_map<std::string, int> vocab;
  std::vector<std::vector<int>> types(n);
  for (size_t i = 0; i < n; ++i) {
    for (const auto& t : dataset.instances[i].tokens) {
      std::string w = t;
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      types[i].push_back(
          vocab.emplace(w, static_cast<int>(vocab.size())).first->second);
    }
    std::sort(types[i].begin(), types[i].end());
    types[i].erase(std::unique(types[i].begin(), types[i].end()),
                   types[i].end());
  }
  struct Candidate {
    double overlap;
    size_t i, j;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      size_t common = 0;
      auto a = types[i].begin(), b = types[j].begin();
      while (a != types[i].end() && b != types[j].end()) {
        if (*a < *b) {
          ++a;
        } else if (*b < *a) {
          ++b;
        } else {
          ++common, ++a, ++b;
        }
      }
      const size_t uni = types[i].size() + types[j].size() - common;
      const double overlap =
          uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
      candidates.push_back({overlap, i, j});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& x, const Candidate& y) {
                     return x.overlap > y.overlap;
                   });
  std::vector<std::pair<size_t, size_t>> pairs;
  if (candidates.size() <= options.n_top + options.n_rand) {
    if (warnings != nullptr &&
        candidates.size() < options.n_top + options.n_rand) {
      warnings->push_back("only " + std::to_string(candidates.size()) +
                          " instance pairs available; using all");
    }
    for (const auto& c : candidates) pairs.emplace_back(c.i, c.j);
    return pairs;
  }
  for (size_t k = 0; k < options.n_top; ++k) {
    pairs.emplace_back(candidates[k].i, candidates[k].j);
  }
  std::vector<size_t> rest(candidates.size() - options.n_top);
  std::iota(rest.begin(), rest.end(), options.n_top);
  Rng rng(derive_seed(options.seed, "dc-pairs"));
  for (size_t k = 0; k < options.n_rand; ++k) {
    const size_t pick = k + static_cast<size_t>(rng.uniform_int(rest.size() - k));
    std::swap(rest[k], rest[pick]);
    pairs.emplace_back(candidates[rest[k]].i, candidates[rest[k]].j);
  }
  return pairs;
}

PropertyScore dataset_consistency(const Dataset& dataset,
                                  const ModelPort& model,
                                  std::span<const SaliencyMap> maps,
                                  const ConsistencyPairOptions& options,
                                  const SaliencyDistanceFn& distance) {
  std::vector<std::string> warnings;
  const auto pairs = select_instance_pairs(dataset, options, &warnings);
  const MapIndex index(maps);
  std::vector<ActivationSummary> summaries;
  for (const auto& inst : dataset.instances) {
    summaries.push_back(model.forward_tokens(model.encode(inst.tokens)).activations);
  }
  std::vector<double> act, sal;
  for (const auto& [i, j] : pairs) {
    const Instance& a = dataset.instances[i];
    const Instance& b = dataset.instances[j];
    const ConsistencyPoint point{summaries[i], summaries[j], index.at(a),
                                 index.at(b), a.label};
    act.push_back(activation_distance(summaries[i], summaries[j]));
    sal.push_back(distance(point));
  }
  PropertyScore score = correlate_distances(Property::kDC, act, sal);
  score.warnings = std::move(warnings);
  return score;
}

}  // namespace xdiag
