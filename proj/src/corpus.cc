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

#include "xdiag/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace xdiag {
namespace {

using nlohmann::json;

[[noreturn]] void fail_instance(const Instance& inst, const std::string& rule) {
  throw CorpusError("instance '" + inst.id + "': " + rule);
}

Granularity parse_granularity(const std::string& s) {
  if (s == "token") return Granularity::kToken;
  if (s == "sentence") return Granularity::kSentence;
  throw CorpusError("unknown granularity '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  throw CorpusError("unknown split '" + s + "'");
}

Span parse_span(const json& j) {
  if (!j.is_array() || j.size() != 2) {
    throw CorpusError("span must be a [begin, end] pair");
  }
  return Span{j.at(0).get<size_t>(), j.at(1).get<size_t>()};
}

std::vector<uint8_t> parse_binary(const json& j) {
  std::vector<uint8_t> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    const int x = v.get<int>();
    if (x != 0 && x != 1) throw CorpusError("rationale entries must be 0 or 1");
    out.push_back(static_cast<uint8_t>(x));
  }
  return out;
}

DatasetHeader header_from_json(const json& j) {
  DatasetHeader h;
  h.name = j.at("name").get<std::string>();
  h.class_names = j.at("class_names").get<std::vector<std::string>>();
  h.granularity = parse_granularity(j.at("granularity").get<std::string>());
  h.split = parse_split(j.at("split").get<std::string>());
  if (h.class_names.empty()) throw CorpusError("class_names must be non-empty");
  return h;
}

Instance instance_from_json(const json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (j.contains("sentence_spans")) {
    for (const auto& s : j.at("sentence_spans")) {
      inst.sentence_spans.push_back(parse_span(s));
    }
  } else {
    inst.sentence_spans.push_back(Span{0, inst.tokens.size()});
  }
  if (j.contains("query_span") && !j.at("query_span").is_null()) {
    inst.query_span = parse_span(j.at("query_span"));
  }
  inst.label = j.at("label").get<int>();
  if (j.contains("token_rationale") && !j.at("token_rationale").is_null()) {
    inst.token_rationale = parse_binary(j.at("token_rationale"));
  }
  if (j.contains("sentence_rationale") &&
      !j.at("sentence_rationale").is_null()) {
    inst.sentence_rationale = parse_binary(j.at("sentence_rationale"));
  }
  return inst;
}

json to_json(const Span& s) { return json::array({s.begin, s.end}); }

json header_to_json(const DatasetHeader& h) {
  return json{{"name", h.name},
              {"class_names", h.class_names},
              {"granularity", to_string(h.granularity)},
              {"split", to_string(h.split)}};
}

json instance_to_json(const Instance& inst) {
  json j{{"id", inst.id}, {"tokens", inst.tokens}, {"label", inst.label}};
  json spans = json::array();
  for (const auto& s : inst.sentence_spans) spans.push_back(to_json(s));
  j["sentence_spans"] = std::move(spans);
  if (inst.query_span) j["query_span"] = to_json(*inst.query_span);
  if (inst.token_rationale) j["token_rationale"] = *inst.token_rationale;
  if (inst.sentence_rationale) {
    j["sentence_rationale"] = *inst.sentence_rationale;
  }
  return j;
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

size_t Instance::num_query_sentences() const {
  if (!query_span) return 0;
  size_t k = 0;
  while (k < sentence_spans.size() && sentence_spans[k].end <= query_span->end) {
    ++k;
  }
  return k;
}

void validate_instance(const Instance& inst, int num_classes) {
  if (inst.id.empty()) throw CorpusError("instance with empty id");
  const size_t n = inst.tokens.size();
  if (n == 0) fail_instance(inst, "no tokens");
  if (inst.sentence_spans.empty()) fail_instance(inst, "no sentence spans");
  size_t expected_begin = 0;
  for (const auto& s : inst.sentence_spans) {
    if (s.begin >= s.end) fail_instance(inst, "empty or inverted sentence span");
    if (s.begin < expected_begin) {
      fail_instance(inst, "sentence spans overlap or are unsorted");
    }
    if (s.begin > expected_begin) {
      fail_instance(inst, "sentence spans leave a gap");
    }
    expected_begin = s.end;
  }
  if (expected_begin != n) {
    fail_instance(inst, "sentence spans do not cover all tokens");
  }
  if (inst.query_span) {
    const Span q = *inst.query_span;
    bool on_boundary = q.end == 0;
    for (const auto& s : inst.sentence_spans) on_boundary |= s.end == q.end;
    if (q.begin != 0 || !on_boundary || q.end > n) {
      fail_instance(inst, "query_span is not a prefix of sentence spans");
    }
  }
  if (inst.label < 0 || inst.label >= num_classes) {
    fail_instance(inst, "label out of range");
  }
  if (inst.token_rationale && inst.token_rationale->size() != n) {
    fail_instance(inst, "token_rationale length differs from token count");
  }
  if (inst.sentence_rationale &&
      inst.sentence_rationale->size() != inst.sentence_spans.size()) {
    fail_instance(inst,
                  "sentence_rationale length differs from sentence count");
  }
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  Dataset ds;
  bool have_header = false;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      if (!have_header) {
        ds.header = header_from_json(j);
        have_header = true;
        continue;
      }
      ds.instances.push_back(instance_from_json(j));
      const Instance& inst = ds.instances.back();
      validate_instance(inst, ds.header.num_classes());
      if (!ids.insert(inst.id).second) {
        throw CorpusError("instance '" + inst.id + "': duplicate id");
      }
    } catch (const json::exception& e) {
      throw CorpusError("line " + std::to_string(line_no) +
                        ": malformed record: " + e.what());
    } catch (const CorpusError& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw CorpusError("line 1: missing header record");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out = header_to_json(dataset.header).dump();
  out.push_back('\n');
  for (const auto& inst : dataset.instances) {
    out += instance_to_json(inst).dump();
    out.push_back('\n');
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write dataset " + path.string());
  out << serialize_dataset(dataset);
}

std::vector<uint8_t> derive_sentence_rationale(const Instance& inst) {
  if (!inst.token_rationale) {
    throw CorpusError("instance '" + inst.id + "': missing token_rationale");
  }
  const auto& tr = *inst.token_rationale;
  std::vector<uint8_t> out(inst.sentence_spans.size(), 0);
  for (size_t j = 0; j < inst.sentence_spans.size(); ++j) {
    const Span s = inst.sentence_spans[j];
    out[j] = std::any_of(tr.begin() + s.begin, tr.begin() + s.end,
                         [](uint8_t x) { return x != 0; });
  }
  return out;
}

std::vector<uint8_t> expand_sentence_rationale(const Instance& inst) {
  if (!inst.sentence_rationale) {
    throw CorpusError("instance '" + inst.id + "': missing sentence_rationale");
  }
  std::vector<uint8_t> out(inst.tokens.size(), 0);
  for (size_t j = 0; j < inst.sentence_spans.size(); ++j) {
    if (!(*inst.sentence_rationale)[j]) continue;
    const Span s = inst.sentence_spans[j];
    std::fill(out.begin() + s.begin, out.begin() + s.end, 1);
  }
  return out;
}

double word_overlap(const Instance& a, const Instance& b) {
  std::set<std::string> sa, sb;
  for (const auto& t : a.tokens) sa.insert(lower(t));
  for (const auto& t : b.tokens) sb.insert(lower(t));
  if (sa.empty() && sb.empty()) return 1.0;
  size_t common = 0;
  for (const auto& t : sa) common += sb.count(t);
  const size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

Instance mask_sentences(const Instance& inst, const std::vector<uint8_t>& keep,
                        bool keep_query) {
  if (keep.size() != inst.sentence_spans.size()) {
    throw CorpusError("instance '" + inst.id +
                      "': sentence mask length differs from sentence count");
  }
  Instance out = inst;
  const size_t n_query = keep_query ? inst.num_query_sentences() : 0;
  for (size_t j = 0; j < inst.sentence_spans.size(); ++j) {
    if (keep[j] || j < n_query) continue;
    const Span s = inst.sentence_spans[j];
    for (size_t t = s.begin; t < s.end; ++t) out.tokens[t] = kMaskToken;
  }
  return out;
}

const char* to_string(Granularity g) {
  return g == Granularity::kToken ? "token" : "sentence";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "test";
}

}  // namespace xdiag
