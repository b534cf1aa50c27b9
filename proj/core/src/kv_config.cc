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

#include "loopctr/kv_config.h"

#include <charconv>
#include <fstream>
#include <istream>

#include "loopctr/errors.h"

namespace loopctr {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": empty key");
    }
    if (kv.values_.count(key)) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": duplicate key `" + key + "`");
    }
    kv.values_[key] = value;
    kv.lines_[key] = line_no;
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return parse(in, path.string());
}

std::optional<std::string> KeyValueFile::take(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  consumed_.insert(key);
  return it->second;
}

std::string KeyValueFile::take_string(const std::string& key, const std::string& fallback) {
  return take(key).value_or(fallback);
}

std::uint64_t KeyValueFile::take_u64(const std::string& key, std::uint64_t fallback) {
  auto v = take(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ParseError(source_ + ":" + std::to_string(lines_.at(key)) + ": `" + key +
                     "` expects a non-negative integer, got `" + *v + "`");
  }
  return out;
}

std::size_t KeyValueFile::take_size(const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(take_u64(key, fallback));
}

double KeyValueFile::take_double(const std::string& key, double fallback) {
  auto v = take(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ParseError(source_ + ":" + std::to_string(lines_.at(key)) + ": `" + key +
                     "` expects a number, got `" + *v + "`");
  }
}

bool KeyValueFile::take_bool(const std::string& key, bool fallback) {
  auto v = take(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ParseError(source_ + ":" + std::to_string(lines_.at(key)) + ": `" + key +
                   "` expects a boolean, got `" + *v + "`");
}

void KeyValueFile::finish() const {
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) {
      throw ParseError(source_ + ":" + std::to_string(lines_.at(key)) + ": unknown key `" +
                       key + "`");
    }
  }
}

}  // namespace loopctr
