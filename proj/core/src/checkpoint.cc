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

#include "loopctr/checkpoint.h"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "loopctr/errors.h"
#include "loopctr/kv_config.h"

namespace loopctr {
namespace {

constexpr const char* kMagic = "loopctr-checkpoint v1";

void write_double(std::ostream& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

std::size_t parse_size(const std::string& s, int line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("checkpoint line " + std::to_string(line) + ": bad integer `" + s + "`");
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, std::ostream& out) {
  out << kMagic << '\n';
  for (const auto& [k, v] : model_config_entries(model.config())) out << "config " << k << " = " << v << '\n';
  const FeatureSchema& s = model.schema();
  out << "schema n_users = " << s.n_users << '\n'
      << "schema n_items = " << s.n_items << '\n'
      << "schema n_categories = " << s.n_categories << '\n'
      << "schema short_len = " << s.short_len << '\n'
      << "schema long_len = " << s.long_len << '\n';
  for (const auto& f : s.global_fields) out << "field " << f.name << ' ' << f.vocab << '\n';
  for (const auto& [name, var] : model.named_parameters()) {
    const Tensor& t = var.value();
    out << "param " << name;
    for (std::size_t dim : t.shape()) out << ' ' << dim;
    out << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = t.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ' ';
        write_double(out, row[c]);
      }
      out << '\n';
    }
  }
  out << "end\n";
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
  if (!out) throw ParseError("write failed: " + path.string());
}

Model load_checkpoint(std::istream& in) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || line != kMagic) throw ParseError("checkpoint: missing header");

  std::ostringstream config_text;
  std::map<std::string, std::size_t> schema_keys;
  std::vector<GlobalField> fields;
  std::map<std::string, Tensor> blocks;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "config") {
      config_text << line.substr(7) << '\n';
    } else if (tag == "schema") {
      std::string key, eq, value;
      ls >> key >> eq >> value;
      if (eq != "=") throw ParseError("checkpoint line " + std::to_string(line_no) + ": malformed schema entry");
      schema_keys[key] = parse_size(value, line_no);
    } else if (tag == "field") {
      std::string name, vocab;
      ls >> name >> vocab;
      fields.push_back({name, parse_size(vocab, line_no)});
    } else if (tag == "param") {
      std::string name, dim_s;
      ls >> name;
      Shape shape;
      while (ls >> dim_s) shape.push_back(parse_size(dim_s, line_no));
      Tensor probe(shape);
      const std::size_t rows = probe.rows();
      const std::size_t cols = probe.cols();
      if (name.empty() || rows == 0 || cols == 0)
        throw ParseError("checkpoint line " + std::to_string(line_no) + ": empty block");
      std::vector<double> values;
      values.reserve(rows * cols);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw ParseError("checkpoint: truncated block " + name);
        ++line_no;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (std::size_t c = 0; c < cols; ++c) {
          while (p < end && *p == ' ') ++p;
          double v = 0.0;
          auto [next, ec] = std::from_chars(p, end, v);
          if (ec != std::errc())
            throw ParseError("checkpoint line " + std::to_string(line_no) + ": bad value in " + name);
          values.push_back(v);
          p = next;
        }
        while (p < end && *p == ' ') ++p;
        if (p != end) throw ParseError("checkpoint line " + std::to_string(line_no) + ": extra values in " + name);
      }
      if (!blocks.emplace(name, Tensor(shape, std::move(values))).second)
        throw ParseError("checkpoint: duplicate block " + name);
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      throw ParseError("checkpoint line " + std::to_string(line_no) + ": unknown record `" + tag + "`");
    }
  }
  if (!ended) throw ParseError("checkpoint: missing end marker");

  std::istringstream cfg_in(config_text.str());
  KeyValueFile kv = KeyValueFile::parse(cfg_in, "checkpoint config");
  ModelConfig config = model_config_from_keys(kv);
  kv.finish();

  FeatureSchema schema;
  auto need = [&](const char* key) {
    auto it = schema_keys.find(key);
    if (it == schema_keys.end()) throw ParseError(std::string("checkpoint: missing schema ") + key);
    return it->second;
  };
  schema.n_users = need("n_users");
  schema.n_items = need("n_items");
  schema.n_categories = need("n_categories");
  schema.short_len = need("short_len");
  schema.long_len = need("long_len");
  schema.global_fields = std::move(fields);

  Model model(std::move(config), std::move(schema));
  for (auto& [name, var] : model.named_parameters()) {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw ParseError("checkpoint: missing block " + name);
    Tensor& dst = var.mutable_value();
    if (!it->second.same_shape(dst))
      throw ParseError("checkpoint: block " + name + " has the wrong shape");
    std::copy(it->second.data().begin(), it->second.data().end(), dst.data().begin());
    blocks.erase(it);
  }
  if (!blocks.empty()) throw ParseError("checkpoint: unknown block " + blocks.begin()->first);
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace loopctr
