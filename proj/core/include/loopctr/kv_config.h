/*
 * Copyright 2026 The LoopCTR Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LOOPCTR_KV_CONFIG_H_
#define LOOPCTR_KV_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace loopctr {

// Flat `key = value` text file. Blank lines and lines starting with '#' are
// ignored. Readers take() the keys they understand; finish() rejects any key
// nobody consumed.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source);
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> take(const std::string& key);

  std::string take_string(const std::string& key, const std::string& fallback);
  std::size_t take_size(const std::string& key, std::size_t fallback);
  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
  double take_double(const std::string& key, double fallback);
  bool take_bool(const std::string& key, bool fallback);

  void finish() const;
  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
  std::set<std::string> consumed_;
};

}  // namespace loopctr

#endif  // LOOPCTR_KV_CONFIG_H_
