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

#ifndef XDIAG_REPORT_H_
#define XDIAG_REPORT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdiag/diagnostics.h"

namespace xdiag {

inline constexpr char kToolkitVersion[] = "0.1.0";

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything needed to re-run a command and check its outputs.
struct RunManifest {
  std::vector<std::string> argv;
  uint64_t seed = 0;
  std::string dataset_digest;
  std::vector<std::string> model_digests;
  std::vector<std::string> techniques;
  std::vector<double> schedule;
  std::string timestamp;  // UTC, ISO 8601
  std::string version = kToolkitVersion;
  // Output path -> sha256 of its bytes.
  std::map<std::string, std::string> outputs;
  double wall_seconds = 0.0;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
// `<primary output>.manifest.json`.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);
std::string utc_timestamp();

struct ReportEntry {
  std::string dataset;
  std::string model;        // model spec digest
  std::string model_label;  // e.g. "relu_mlp:seed=1"
  std::string technique;
  PropertyScore score;
};

// Entries are unique per (dataset, model, technique, property) and kept in
// that order.
struct Report {
  std::vector<ReportEntry> entries;

  // Inserts or replaces the entry with the same key.
  void upsert(ReportEntry entry);
};

std::string report_to_json(const Report& report);
Report report_from_json(const std::string& text);
Report read_report(const std::filesystem::path& path);
void write_report(const std::filesystem::path& path, const Report& report);

// One row per entry: dataset,model,model_label,technique,property,value,n.
std::string report_to_csv(const Report& report);

struct SpiderSeries {
  std::string name;
  std::vector<double> values;  // one per axis
};

// Each axis is min-max scaled over the series so that properties with
// different ranges share the chart.
std::string spider_svg(const std::string& title,
                       const std::vector<std::string>& axes,
                       const std::vector<SpiderSeries>& series);

std::string curve_svg(const std::string& title, const std::vector<double>& x,
                      const std::vector<double>& y, const std::string& x_label,
                      const std::string& y_label);

struct EmittedReport {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

// Writes report.csv, one spider chart per (dataset, model) with at least
// three properties, and one threshold-performance curve per faithfulness
// entry.
EmittedReport emit_report(const Report& report,
                          const std::filesystem::path& out_dir);

}  // namespace xdiag

#endif  // XDIAG_REPORT_H_
