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

#include "xdiag/report.h"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace xdiag {
namespace {

using nlohmann::json;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot write " + path.string());
  out << text;
  if (!out) throw ReportError("write failed for " + path.string());
}

auto entry_key(const ReportEntry& e) {
  return std::make_tuple(e.dataset, e.model, e.technique,
                         static_cast<int>(e.score.property));
}

json score_to_json(const PropertyScore& s) {
  return json{{"property", to_string(s.property)},
              {"value", s.value},
              {"n", s.n},
              {"aux", s.aux},
              {"series", s.series},
              {"warnings", s.warnings}};
}

PropertyScore score_from_json(const json& j) {
  PropertyScore s;
  s.property = parse_property(j.at("property").get<std::string>());
  s.value = j.at("value").get<double>();
  s.n = j.value("n", size_t{0});
  s.aux = j.value("aux", std::map<std::string, double>{});
  s.series = j.value("series", std::map<std::string, std::vector<double>>{});
  s.warnings = j.value("warnings", std::vector<std::string>{});
  return s;
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string file_stem(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  }
  return out.empty() ? "unnamed" : out;
}

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                "#bcbd22", "#17becf"};

}  // namespace

// ---------------------------------------------------------------------------
// Manifests

std::string manifest_to_json(const RunManifest& m) {
  return json{{"argv", m.argv},
              {"seed", m.seed},
              {"dataset_digest", m.dataset_digest},
              {"model_digests", m.model_digests},
              {"techniques", m.techniques},
              {"schedule", m.schedule},
              {"timestamp", m.timestamp},
              {"version", m.version},
              {"outputs", m.outputs},
              {"wall_seconds", m.wall_seconds}}
      .dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.seed = j.value("seed", uint64_t{0});
    m.dataset_digest = j.value("dataset_digest", std::string());
    m.model_digests = j.value("model_digests", std::vector<std::string>{});
    m.techniques = j.value("techniques", std::vector<std::string>{});
    m.schedule = j.value("schedule", std::vector<double>{});
    m.timestamp = j.value("timestamp", std::string());
    m.version = j.value("version", std::string());
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.wall_seconds = j.value("wall_seconds", 0.0);
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text(path, manifest_to_json(m) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_text(path));
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Report

void Report::upsert(ReportEntry entry) {
  const auto key = entry_key(entry);
  auto it = std::lower_bound(
      entries.begin(), entries.end(), key,
      [](const ReportEntry& e, const auto& k) { return entry_key(e) < k; });
  if (it != entries.end() && entry_key(*it) == key) {
    *it = std::move(entry);
  } else {
    entries.insert(it, std::move(entry));
  }
}

std::string report_to_json(const Report& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"dataset", e.dataset},
                       {"model", e.model},
                       {"model_label", e.model_label},
                       {"technique", e.technique},
                       {"score", score_to_json(e.score)}});
  }
  return json{{"version", kToolkitVersion}, {"entries", entries}}.dump(2);
}

Report report_from_json(const std::string& text) {
  Report report;
  try {
    const json j = json::parse(text);
    for (const auto& e : j.at("entries")) {
      ReportEntry entry;
      entry.dataset = e.at("dataset").get<std::string>();
      entry.model = e.at("model").get<std::string>();
      entry.model_label = e.value("model_label", std::string());
      entry.technique = e.at("technique").get<std::string>();
      entry.score = score_from_json(e.at("score"));
      report.upsert(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  } catch (const DiagnosticsError& e) {
    throw ReportError(std::string("malformed report: ") + e.what());
  }
  return report;
}

Report read_report(const std::filesystem::path& path) {
  return report_from_json(read_text(path));
}

void write_report(const std::filesystem::path& path, const Report& report) {
  write_text(path, report_to_json(report) + "\n");
}

std::string report_to_csv(const Report& report) {
  std::ostringstream out;
  out << "dataset,model,model_label,technique,property,value,n\n";
  for (const auto& e : report.entries) {
    out << csv_field(e.dataset) << ',' << csv_field(e.model) << ','
        << csv_field(e.model_label) << ',' << csv_field(e.technique) << ','
        << to_string(e.score.property) << ',' << fmt_full(e.score.value) << ','
        << e.score.n << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Plots

std::string spider_svg(const std::string& title,
                       const std::vector<std::string>& axes,
                       const std::vector<SpiderSeries>& series) {
  if (axes.size() < 3) throw ReportError("a spider chart needs >= 3 axes");
  const double cx = 260, cy = 250, radius = 170;
  const size_t k = axes.size();
  auto point = [&](size_t axis, double r) {
    const double angle = -M_PI / 2 + 2 * M_PI * static_cast<double>(axis) / k;
    return std::make_pair(cx + r * radius * std::cos(angle),
                          cy + r * radius * std::sin(angle));
  };
  // Scale each axis over the series; equal values sit on the outer ring.
  std::vector<double> lo(k, 0.0), hi(k, 0.0);
  for (size_t a = 0; a < k; ++a) {
    lo[a] = hi[a] = series.empty() ? 0.0 : series[0].values.at(a);
    for (const auto& s : series) {
      lo[a] = std::min(lo[a], s.values.at(a));
      hi[a] = std::max(hi[a], s.values.at(a));
    }
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"500\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"700\" height=\"500\" fill=\"white\"/>\n";
  svg << "<text x=\"260\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
  for (double ring : {0.25, 0.5, 0.75, 1.0}) {
    svg << "<polygon fill=\"none\" stroke=\"#ccc\" points=\"";
    for (size_t a = 0; a < k; ++a) {
      const auto [x, y] = point(a, ring);
      svg << fmt(x, 6) << ',' << fmt(y, 6) << ' ';
    }
    svg << "\"/>\n";
  }
  for (size_t a = 0; a < k; ++a) {
    const auto [x, y] = point(a, 1.0);
    const auto [lx, ly] = point(a, 1.12);
    svg << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << fmt(x, 6)
        << "\" y2=\"" << fmt(y, 6) << "\" stroke=\"#999\"/>\n";
    svg << "<text x=\"" << fmt(lx, 6) << "\" y=\"" << fmt(ly, 6)
        << "\" text-anchor=\"middle\">" << xml_escape(axes[a]) << "</text>\n";
  }
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    svg << "<polygon class=\"series\" fill=\"" << color
        << "\" fill-opacity=\"0.15\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (size_t a = 0; a < k; ++a) {
      const double span = hi[a] - lo[a];
      const double r =
          span > 0 ? 0.2 + 0.8 * (series[i].values[a] - lo[a]) / span : 1.0;
      const auto [x, y] = point(a, r);
      svg << fmt(x, 6) << ',' << fmt(y, 6) << ' ';
    }
    svg << "\"/>\n";
    const double ly = 60 + 20 * static_cast<double>(i);
    svg << "<rect x=\"530\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << color << "\"/>\n";
    svg << "<text x=\"548\" y=\"" << ly << "\">" << xml_escape(series[i].name)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string curve_svg(const std::string& title, const std::vector<double>& x,
                      const std::vector<double>& y, const std::string& x_label,
                      const std::string& y_label) {
  if (x.size() != y.size() || x.empty()) {
    throw ReportError("curve needs matching, non-empty x and y");
  }
  const double left = 70, right = 560, top = 50, bottom = 380;
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  double x0 = *xmin_it, x1 = *xmax_it, y0 = std::min(0.0, *ymin_it),
         y1 = std::max(1.0, *ymax_it);
  if (x1 == x0) x1 = x0 + 1;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (right - left); };
  auto py = [&](double v) { return bottom - (v - y0) / (y1 - y0) * (bottom - top); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"440\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"600\" height=\"440\" fill=\"white\"/>\n";
  svg << "<text x=\"315\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right
      << "\" y2=\"" << bottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << left
      << "\" y2=\"" << top << "\" stroke=\"black\"/>\n";
  for (double v : x) {
    svg << "<text x=\"" << fmt(px(v), 6) << "\" y=\"" << bottom + 16
        << "\" text-anchor=\"middle\">" << fmt(v) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(v) + 4, 6)
        << "\" text-anchor=\"end\">" << fmt(v, 3) << "</text>\n";
  }
  svg << "<text x=\"315\" y=\"" << bottom + 40 << "\" text-anchor=\"middle\">"
      << xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (top + bottom) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (top + bottom) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  svg << "<polyline class=\"curve\" fill=\"none\" stroke=\"#1f77b4\" "
         "stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < x.size(); ++i) {
    svg << fmt(px(x[i]), 6) << ',' << fmt(py(y[i]), 6) << ' ';
  }
  svg << "\"/>\n";
  for (size_t i = 0; i < x.size(); ++i) {
    svg << "<circle cx=\"" << fmt(px(x[i]), 6) << "\" cy=\"" << fmt(py(y[i]), 6)
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

EmittedReport emit_report(const Report& report,
                          const std::filesystem::path& out_dir) {
  if (report.entries.empty()) throw ReportError("report has no entries");
  std::filesystem::create_directories(out_dir);
  EmittedReport result;

  const auto csv_path = out_dir / "report.csv";
  write_text(csv_path, report_to_csv(report));
  result.files.push_back(csv_path);

  // Group by (dataset, model); entries are already sorted by that prefix.
  size_t begin = 0;
  while (begin < report.entries.size()) {
    size_t end = begin;
    const ReportEntry& head = report.entries[begin];
    while (end < report.entries.size() &&
           report.entries[end].dataset == head.dataset &&
           report.entries[end].model == head.model) {
      ++end;
    }
    std::set<Property> properties;
    std::vector<std::string> techniques;
    for (size_t i = begin; i < end; ++i) {
      properties.insert(report.entries[i].score.property);
      if (std::find(techniques.begin(), techniques.end(),
                    report.entries[i].technique) == techniques.end()) {
        techniques.push_back(report.entries[i].technique);
      }
    }
    const std::string label =
        head.model_label.empty() ? head.model.substr(0, 12) : head.model_label;
    const std::string stem =
        file_stem(head.dataset) + "_" + file_stem(head.model.substr(0, 12));
    if (properties.size() < 3) {
      result.warnings.push_back("spider chart for " + head.dataset + " / " + label +
                                " skipped: only " +
                                std::to_string(properties.size()) +
                                " propert" + (properties.size() == 1 ? "y" : "ies"));
    } else {
      std::vector<std::string> axes;
      for (Property p : properties) axes.push_back(to_string(p));
      std::vector<SpiderSeries> series;
      for (const auto& t : techniques) {
        SpiderSeries s{t, std::vector<double>(axes.size(), 0.0)};
        bool complete = true;
        size_t a = 0;
        for (Property p : properties) {
          bool found = false;
          for (size_t i = begin; i < end; ++i) {
            const ReportEntry& e = report.entries[i];
            if (e.technique == t && e.score.property == p) {
              s.values[a] = e.score.value;
              found = true;
            }
          }
          complete &= found;
          ++a;
        }
        if (complete) {
          series.push_back(std::move(s));
        } else {
          result.warnings.push_back("technique " + t + " lacks some properties for " +
                                    head.dataset + " / " + label +
                                    "; left out of the spider chart");
        }
      }
      const auto path = out_dir / ("spider_" + stem + ".svg");
      write_text(path, spider_svg(head.dataset + " / " + label, axes, series));
      result.files.push_back(path);
    }
    for (size_t i = begin; i < end; ++i) {
      const ReportEntry& e = report.entries[i];
      if (e.score.property != Property::kF) continue;
      const auto x = e.score.series.find("thresholds");
      const auto y = e.score.series.find("performance");
      if (x == e.score.series.end() || y == e.score.series.end()) {
        result.warnings.push_back("faithfulness entry for " + e.technique +
                                  " has no curve");
        continue;
      }
      const auto path =
          out_dir / ("curve_" + stem + "_" + file_stem(e.technique) + ".svg");
      write_text(path, curve_svg(e.dataset + " / " + label + " / " + e.technique,
                                 x->second, y->second, "tokens masked (%)",
                                 "performance"));
      result.files.push_back(path);
    }
    begin = end;
  }
  return result;
}

}  // namespace xdiag
