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

#ifndef XDIAG_CORPUS_H_
#define XDIAG_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xdiag {

// Replacement token used by every perturbation in the toolkit.
inline constexpr char kMaskToken[] = "[MASK]";

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Half-open token range [begin, end).
struct Span {
  size_t begin = 0;
  size_t end = 0;

  size_t size() const { return end - begin; }
  bool contains(size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

enum class Granularity { kToken, kSentence };
enum class Split { kTrain, kDev, kTest };

struct DatasetHeader {
  std::string name;
  std::vector<std::string> class_names;
  Granularity granularity = Granularity::kToken;
  Split split = Split::kTest;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

// One classification example with optional gold rationales.
struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Span> sentence_spans;
  // Claim/question(+answer) prefix; always a union of leading sentences.
  std::optional<Span> query_span;
  int label = 0;
  std::optional<std::vector<uint8_t>> token_rationale;
  std::optional<std::vector<uint8_t>> sentence_rationale;

  size_t num_tokens() const { return tokens.size(); }
  size_t num_sentences() const { return sentence_spans.size(); }
  // Number of leading sentences that make up the query span (0 if none).
  size_t num_query_sentences() const;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Instance> instances;
};

// Throws CorpusError naming the instance id and the violated rule.
void validate_instance(const Instance& inst, int num_classes);

// Loads a line-delimited dataset file: a header record followed by one
// instance record per line. Missing sentence_spans fall back to one span
// covering all tokens.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
std::string serialize_dataset(const Dataset& dataset);

// Sentence j is marked iff any of its tokens is marked.
std::vector<uint8_t> derive_sentence_rationale(const Instance& inst);

// Inverse direction: every token of a marked sentence is marked.
std::vector<uint8_t> expand_sentence_rationale(const Instance& inst);

// Lower-cased Jaccard similarity of the two token sets.
double word_overlap(const Instance& a, const Instance& b);

// Copy of `inst` with every token of the sentences where keep[j] == 0
// replaced by the mask token. Query sentences are kept when keep_query.
Instance mask_sentences(const Instance& inst, const std::vector<uint8_t>& keep,
                        bool keep_query);

const char* to_string(Granularity g);
const char* to_string(Split s);

}  // namespace xdiag

#endif  // XDIAG_CORPUS_H_
