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

#ifndef XDIAG_RANDOM_H_
#define XDIAG_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace xdiag {

// Seeded random stream. The engine is fully specified by the standard; the
// conversions below are written out so streams are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (size_t i = values.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent substream seed from a parent seed and a sequence of
// names (technique tag, instance id, ...).
uint64_t derive_seed(uint64_t parent, std::string_view name);
uint64_t derive_seed(uint64_t parent, std::string_view name,
                     std::string_view sub);

}  // namespace xdiag

#endif  // XDIAG_RANDOM_H_
