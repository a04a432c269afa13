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

#ifndef XDIAG_DIGEST_H_
#define XDIAG_DIGEST_H_

#include <filesystem>
#include <string>
#include <string_view>

namespace xdiag {

// Lower-case hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// SHA-256 of a file's contents. Throws std::runtime_error if unreadable.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace xdiag

#endif  // XDIAG_DIGEST_H_
