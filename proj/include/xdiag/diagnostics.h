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

#ifndef XDIAG_DIAGNOSTICS_H_
#define XDIAG_DIAGNOSTICS_H_

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "xdiag/attribution.h"
#include "xdiag/corpus.h"
#include "xdiag/model_port.h"

namespace xdiag {

class DiagnosticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Correlation of a series without rank variance is undefined.
class ZeroVarianceError : public DiagnosticsError {
 public:
  using DiagnosticsError::DiagnosticsError;
};

class NoPositivesError : public DiagnosticsError {
 public:
  using DiagnosticsError::DiagnosticsError;
};

enum class Property { kHA, kCI, kF, kRC, kDC };
const char* to_string(Property p);
Property parse_property(std::string_view s);

struct PropertyScore {
  Property property = Property::kHA;
  double value = 0.0;
  // Scalar side results (max error, p-value, skipped counts, ...).
  std::map<std::string, double> aux;
  // Curves (thresholds, performance, drop, ...).
  std::map<std::string, std::vector<double>> series;
  size_t n = 0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Human agreement

// Tokens ranked by descending score (ties by ascending index);
// AP = sum_k precision@k * gold(k) / #positives.
double average_precision(std::span<const uint8_t> gold,
                         std::span<const double> scores);

// Mean AP over instances with a non-empty gold rationale, ranking the
// gold-class row (or the predicted-class row). Instances without a rationale
// are skipped and counted in aux.
PropertyScore human_agreement(const Dataset& dataset,
                              std::span<const SaliencyMap> maps,
                              bool gold_class_row = true);

// ---------------------------------------------------------------------------
// Confidence indication

// Two classes: one feature, the summed difference between the predicted and
// the other class row. More classes: summed per-token max, min and mean of the
// differences to every non-predicted row.
Eigen::VectorXd confidence_features(const SaliencyMap& map);

// Decile bucket of a confidence value: [0.0, 0.1) -> 0, ..., [0.9, 1.0] -> 9.
int confidence_bucket(double confidence);

// Returns `indices` plus resampled duplicates so every non-empty decile
// bucket holds as many entries as the largest one.
std::vector<size_t> upsample_by_confidence(std::span<const double> confidences,
                                           std::span<const size_t> indices,
                                           uint64_t seed);

// sigmoid(bias + w . standardized(x)) fitted to a continuous target by
// damped Gauss-Newton on the squared error.
class SigmoidProbe {
 public:
  void fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& target);
  double predict(const Eigen::VectorXd& x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
  Eigen::VectorXd weights_;
  double bias_ = 0.0;
};

struct ConfidenceOptions {
  int n_splits = 5;
  bool upsample = false;
  uint64_t seed = 0;
};

// Cross-fitted probe from confidence features to model confidence. value is
// the mean held-out MAE over folds; aux["max"] the largest held-out error.
PropertyScore confidence_indication(std::span<const SaliencyMap> maps,
                                    const ConfidenceOptions& options = {});

// ---------------------------------------------------------------------------
// Faithfulness

struct MaskingSchedule {
  // Percentages.
  std::vector<double> thresholds = {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};

  void validate() const;
  // ceil(t% of n_tokens).
  static size_t mask_count(double threshold, size_t n_tokens);
};

enum class PerfMetric { kMacroF1, kAccuracy };
PerfMetric parse_perf_metric(std::string_view s);

// Macro F1 over the labels present in gold or predictions.
double macro_f1(std::span<const int> gold, std::span<const int> predicted);
double accuracy(std::span<const int> gold, std::span<const int> predicted);

// Masks the most salient tokens (predicted-class row) at every threshold and
// integrates the performance drop with the trapezoid rule over threshold
// fractions. A larger area means the ranking removes the decisive tokens
// sooner.
PropertyScore faithfulness_auc_tp(const Dataset& dataset, const ModelPort& model,
                                  std::span<const SaliencyMap> maps,
                                  const MaskingSchedule& schedule = {},
                                  PerfMetric perf = PerfMetric::kMacroF1);

// ---------------------------------------------------------------------------
// Consistency

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
};

// Ranks starting at 1; ties receive their average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of average ranks with a two-sided t-approximation
// p-value. Throws ZeroVarianceError if either series has constant ranks.
SpearmanResult spearman_rho(std::span<const double> a,
                            std::span<const double> b);

// (x - min) / (max - min); a constant series throws ZeroVarianceError.
std::vector<double> min_max_scale(std::span<const double> values);

struct ConsistencyPoint {
  const ActivationSummary& act_a;
  const ActivationSummary& act_b;
  const SaliencyMap& map_a;
  const SaliencyMap& map_b;
  // Row compared in both maps (the gold class of the first instance).
  int cls;
};

using SaliencyDistanceFn = std::function<double(const ConsistencyPoint&)>;

// Mean absolute difference of the two rows; the shorter row is zero-padded.
double saliency_distance(const ConsistencyPoint& point);

// Min-max scales both distance series and correlates them.
PropertyScore correlate_distances(Property property,
                                  std::span<const double> activation_distances,
                                  std::span<const double> saliency_distances);

struct ModelRun {
  const ModelPort* model = nullptr;
  std::span<const SaliencyMap> maps;
};

// Spearman rho between activation and saliency distances of each model pair
// on each instance. Needs at least 20 (pair, instance) points.
PropertyScore rationale_consistency(
    const Dataset& dataset,
    std::span<const std::pair<ModelRun, ModelRun>> model_pairs,
    const SaliencyDistanceFn& distance = saliency_distance);

struct ConsistencyPairOptions {
  size_t n_top = 2000;
  size_t n_rand = 2000;
  uint64_t seed = 0;
};

// The n_top pairs with the highest word overlap (ties by index) plus n_rand
// pairs drawn uniformly from the rest. Pairs are (i, j) with i < j.
std::vector<std::pair<size_t, size_t>> select_instance_pairs(
    const Dataset& dataset, const ConsistencyPairOptions& options,
    std::vector<std::string>* warnings = nullptr);

PropertyScore dataset_consistency(
    const Dataset& dataset, const ModelPort& model,
    std::span<const SaliencyMap> maps,
    const ConsistencyPairOptions& options = {},
    const SaliencyDistanceFn& distance = saliency_distance);

}  // namespace xdiag

#endif  // XDIAG_DIAGNOSTICS_H_
