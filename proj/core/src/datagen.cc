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

#include "loopctr/datagen.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "loopctr/errors.h"
#include "loopctr/kv_config.h"

namespace loopctr {
namespace {

constexpr const char* kMagic = "#loopctr-dataset";
constexpr const char* kVersion = "v1";

// Multiplier applied to the combined planted score. Large enough that the
// noise-free logit separates clicks from non-clicks well.
constexpr double kSignalScale = 3.0;
constexpr std::size_t kLatentDim = 4;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix(mix(a, b), c);
}

// Salts separating the latent streams.
enum Salt : std::uint64_t {
  kItemCategory = 0x11,
  kUserPrefA = 0x21,
  kUserPrefB = 0x22,
  kUserLongTerm = 0x23,
  kUserVector = 0x24,
  kItemVector = 0x31,
  kContext = 0x41,
  kSample = 0x51,
};

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::vector<double> latent_vector(std::uint64_t seed, std::uint64_t salt, std::uint64_t id) {
  std::mt19937_64 rng(mix(seed, salt, id));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(kLatentDim);
  for (double& x : v) x = normal(rng);
  return v;
}

struct UserLatent {
  std::uint32_t pref_a, pref_b, long_term;
};

UserLatent user_latent(const FeatureSchema& s, std::uint64_t seed, std::uint32_t user) {
  const auto pick = [&](Salt salt) {
    return static_cast<std::uint32_t>(1 + mix(seed, salt, user) % s.n_categories);
  };
  return {pick(kUserPrefA), pick(kUserPrefB), pick(kUserLongTerm)};
}

// Items grouped by category, index 0 unused.
std::vector<std::vector<std::uint32_t>> items_by_category(const FeatureSchema& s,
                                                          std::uint64_t seed) {
  std::vector<std::vector<std::uint32_t>> by_cat(s.n_categories + 1);
  for (std::uint32_t i = 1; i <= s.n_items; ++i) by_cat[item_category(s, seed, i)].push_back(i);
  return by_cat;
}

double context_effect(std::uint64_t seed, std::size_t field, std::uint32_t value) {
  return 2.0 * unit(mix(seed, kContext + field * 0x100, value)) - 1.0;
}

// Global field layout produced by make_schema.
constexpr std::size_t kUserField = 0;
constexpr std::size_t kItemField = 1;
constexpr std::size_t kCategoryField = 2;
constexpr std::size_t kFixedLeadingFields = 3;

std::size_t context_field_count(const FeatureSchema& s) {
  return s.global_fields.size() - kFixedLeadingFields - 1;
}

double overlap(const FeatureSchema& s, std::uint64_t seed,
               const std::vector<std::uint32_t>& seq, std::uint32_t category) {
  std::size_t valid = 0, hits = 0;
  for (std::uint32_t item : seq) {
    if (item == 0) continue;
    ++valid;
    if (item_category(s, seed, item) == category) ++hits;
  }
  return valid ? static_cast<double>(hits) / static_cast<double>(valid) : 0.0;
}

double planted_score(const PlantedFeatures& f) {
  const double z = 4.0 * f.short_overlap + 3.0 * f.long_overlap +
                   4.0 * f.short_overlap * f.long_overlap + f.user_item + 0.5 * f.context;
  return kSignalScale * z;
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::string join_ids(const std::vector<std::uint32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::uint64_t parse_uint(const std::string& text, int line, const char* what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("line " + std::to_string(line) + ": malformed " + what + " `" + text + "`");
  }
  return v;
}

std::vector<std::uint32_t> parse_ids(const std::string& field, int line, std::size_t vocab,
                                     const char* what) {
  std::vector<std::uint32_t> ids;
  if (field.empty()) return ids;
  for (const std::string& part : split(field, ',')) {
    const std::uint64_t v = parse_uint(part, line, what);
    if (v >= vocab) {
      throw ParseError("line " + std::to_string(line) + ": " + what + " id " + part +
                       " out of vocabulary (size " + std::to_string(vocab) + ")");
    }
    ids.push_back(static_cast<std::uint32_t>(v));
  }
  return ids;
}

}  // namespace

void FeatureSchema::validate() const {
  require(n_users >= 1 && n_items >= 1 && n_categories >= 1,
          "schema: users, items and categories must be positive (vocab >= 2)");
  require(short_len >= 1, "schema: short_len must be >= 1");
  require(long_len >= short_len, "schema: long_len must be >= short_len");
  require(!global_fields.empty(), "schema: needs at least one global field");
  for (const auto& f : global_fields) {
    require(f.vocab >= 2, "schema: vocabulary of `" + f.name + "` is smaller than 2");
  }
  require(noise_scale >= 0.0, "schema: noise must be non-negative");
  require(target_ctr > 0.0 && target_ctr < 1.0, "schema: target_ctr must lie in (0, 1)");
  require(test_fraction >= 0.0 && test_fraction < 1.0, "schema: test_fraction must lie in [0, 1)");
}

FeatureSchema make_schema(std::size_t n_users, std::size_t n_items, std::size_t n_categories,
                          std::size_t short_len, std::size_t long_len,
                          std::vector<GlobalField> context_fields) {
  FeatureSchema s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_categories = n_categories;
  s.short_len = short_len;
  s.long_len = long_len;
  s.global_fields.push_back({"user", n_users + 1});
  s.global_fields.push_back({"item", n_items + 1});
  s.global_fields.push_back({"category", n_categories + 1});
  for (auto& f : context_fields) s.global_fields.push_back(std::move(f));
  s.global_fields.push_back({"affinity", 3});
  return s;
}

std::uint32_t item_category(const FeatureSchema& schema, std::uint64_t seed, std::uint32_t item) {
  return static_cast<std::uint32_t>(1 + mix(seed, kItemCategory, item) % schema.n_categories);
}

PlantedFeatures planted_features(const FeatureSchema& schema, std::uint64_t seed,
                                 const Sample& sample) {
  PlantedFeatures f;
  const std::uint32_t item = sample.global_ids.at(kItemField);
  const std::uint32_t cat = item_category(schema, seed, item);
  f.short_overlap = overlap(schema, seed, sample.short_seq, cat);
  f.long_overlap = overlap(schema, seed, sample.long_seq, cat);
  const auto u = latent_vector(seed, kUserVector, sample.user_id);
  const auto v = latent_vector(seed, kItemVector, item);
  double dot = 0.0;
  for (std::size_t i = 0; i < kLatentDim; ++i) dot += u[i] * v[i];
  f.user_item = dot / 2.0;
  const std::size_t n_ctx = context_field_count(schema);
  double ctx = 0.0;
  for (std::size_t c = 0; c < n_ctx; ++c) {
    ctx += context_effect(seed, c, sample.global_ids.at(kFixedLeadingFields + c));
  }
  f.context = n_ctx ? ctx / static_cast<double>(n_ctx) : 0.0;
  return f;
}

Dataset generate_dataset(const FeatureSchema& schema, std::size_t n_samples, std::uint64_t seed) {
  schema.validate();
  require(n_samples >= 2, "generate_dataset: need at least 2 samples");
  require(schema.global_fields.size() >= kFixedLeadingFields + 1 &&
              schema.global_fields[kUserField].name == "user" &&
              schema.global_fields[kItemField].name == "item" &&
              schema.global_fields[kCategoryField].name == "category" &&
              schema.global_fields.back().name == "affinity",
          "generate_dataset: schema must come from make_schema");

  const auto by_cat = items_by_category(schema, seed);
  Dataset ds;
  ds.schema = schema;
  ds.seed = seed;
  ds.samples.resize(n_samples);

  std::vector<double> signal(n_samples), noise(n_samples), coin(n_samples);
  for (std::size_t idx = 0; idx < n_samples; ++idx) {
    std::mt19937_64 rng(mix(seed, kSample, idx));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uniform_below = [&](std::size_t n) {
      return static_cast<std::uint32_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    };
    auto item_in = [&](std::uint32_t cat) -> std::uint32_t {
      const auto& pool = by_cat[cat];
      if (pool.empty()) return 1 + uniform_below(schema.n_items);
      return pool[uniform_below(pool.size())];
    };
    auto any_item = [&] { return 1 + uniform_below(schema.n_items); };

    Sample& s = ds.samples[idx];
    s.user_id = 1 + uniform_below(schema.n_users);
    const UserLatent ul = user_latent(schema, seed, s.user_id);

    const std::size_t short_n = (schema.short_len + 1) / 2 +
                                uniform_below(schema.short_len - (schema.short_len + 1) / 2 + 1);
    for (std::size_t t = 0; t < short_n; ++t) {
      const double r = u01(rng);
      s.short_seq.push_back(r < 0.375   ? item_in(ul.pref_a)
                            : r < 0.75  ? item_in(ul.pref_b)
                                        : any_item());
    }
    const std::size_t long_n = (schema.long_len + 1) / 2 +
                               uniform_below(schema.long_len - (schema.long_len + 1) / 2 + 1);
    for (std::size_t t = 0; t < long_n; ++t) {
      const double r = u01(rng);
      s.long_seq.push_back(r < 0.6   ? item_in(ul.long_term)
                           : r < 0.7 ? item_in(ul.pref_a)
                           : r < 0.8 ? item_in(ul.pref_b)
                                     : any_item());
    }

    std::uint32_t item;
    if (u01(rng) < 0.5) {
      const std::uint32_t pick = uniform_below(3);
      item = item_in(pick == 0 ? ul.pref_a : pick == 1 ? ul.pref_b : ul.long_term);
    } else {
      item = any_item();
    }
    const std::uint32_t cat = item_category(schema, seed, item);

    s.global_ids.reserve(schema.global_fields.size());
    s.global_ids.push_back(s.user_id);
    s.global_ids.push_back(item);
    s.global_ids.push_back(cat);
    for (std::size_t c = kFixedLeadingFields; c + 1 < schema.global_fields.size(); ++c) {
      s.global_ids.push_back(1 + uniform_below(schema.global_fields[c].vocab - 1));
    }
    s.global_ids.push_back(cat == ul.pref_a || cat == ul.pref_b ? 2 : 1);

    signal[idx] = planted_score(planted_features(schema, seed, s));
    noise[idx] = std::normal_distribution<double>(0.0, 1.0)(rng);
    coin[idx] = u01(rng);
  }

  // Calibrate the logit bias so the expected click rate matches target_ctr.
  auto mean_ctr = [&](double bias) {
    double total = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i)
      total += sigmoid(signal[i] + bias + schema.noise_scale * noise[i]);
    return total / static_cast<double>(n_samples);
  };
  double lo = -60.0, hi = 60.0;
  for (int iter = 0; iter < 100; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_ctr(mid) < schema.target_ctr) lo = mid; else hi = mid;
  }
  const double bias = 0.5 * (lo + hi);

  for (std::size_t i = 0; i < n_samples; ++i) {
    Sample& s = ds.samples[i];
    s.planted_logit = signal[i] + bias;
    s.label = coin[i] < sigmoid(s.planted_logit + schema.noise_scale * noise[i]) ? 1 : 0;
  }
  ds.split = n_samples - static_cast<std::size_t>(
                             std::floor(schema.test_fraction * static_cast<double>(n_samples)));
  return ds;
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  const FeatureSchema& s = ds.schema;
  out << kMagic << '\t' << kVersion << "\tn_users=" << s.n_users << "\tn_items=" << s.n_items
      << "\tn_categories=" << s.n_categories << "\tshort_len=" << s.short_len
      << "\tlong_len=" << s.long_len << std::setprecision(17) << "\tnoise=" << s.noise_scale
      << "\ttarget_ctr=" << s.target_ctr << "\ttest_fraction=" << s.test_fraction
      << "\tglobal=";
  for (std::size_t i = 0; i < s.global_fields.size(); ++i) {
    if (i) out << ',';
    out << s.global_fields[i].name << ':' << s.global_fields[i].vocab;
  }
  out << "\tseed=" << ds.seed << "\tsplit=" << ds.split << "\tn=" << ds.samples.size() << '\n';
  for (const Sample& x : ds.samples) {
    out << x.user_id << '\t' << join_ids(x.global_ids) << '\t' << join_ids(x.short_seq) << '\t'
        << join_ids(x.long_seq) << '\t' << x.label << '\n';
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  write_dataset(ds, out);
  if (!out) throw ParseError("write failed: " + path.string());
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ParseError("no header");
  const auto head = split(line, '\t');
  if (head.size() < 2 || head[0] != kMagic) throw ParseError("no header");
  if (head[1] != kVersion) throw ParseError("line 1: unsupported dataset version " + head[1]);

  Dataset ds;
  FeatureSchema& s = ds.schema;
  std::size_t expected = 0;
  bool have_n = false;
  for (std::size_t i = 2; i < head.size(); ++i) {
    const auto eq = head[i].find('=');
    if (eq == std::string::npos) throw ParseError("line 1: malformed header field " + head[i]);
    const std::string key = head[i].substr(0, eq);
    const std::string value = head[i].substr(eq + 1);
    if (key == "n_users") s.n_users = parse_uint(value, 1, key.c_str());
    else if (key == "n_items") s.n_items = parse_uint(value, 1, key.c_str());
    else if (key == "n_categories") s.n_categories = parse_uint(value, 1, key.c_str());
    else if (key == "short_len") s.short_len = parse_uint(value, 1, key.c_str());
    else if (key == "long_len") s.long_len = parse_uint(value, 1, key.c_str());
    else if (key == "noise") s.noise_scale = std::stod(value);
    else if (key == "target_ctr") s.target_ctr = std::stod(value);
    else if (key == "test_fraction") s.test_fraction = std::stod(value);
    else if (key == "seed") ds.seed = parse_uint(value, 1, key.c_str());
    else if (key == "split") ds.split = parse_uint(value, 1, key.c_str());
    else if (key == "n") { expected = parse_uint(value, 1, key.c_str()); have_n = true; }
    else if (key == "global") {
      for (const std::string& f : split(value, ',')) {
        const auto colon = f.find(':');
        if (colon == std::string::npos) throw ParseError("line 1: malformed global field " + f);
        s.global_fields.push_back(
            {f.substr(0, colon), parse_uint(f.substr(colon + 1), 1, "vocabulary")});
      }
    } else {
      throw ParseError("line 1: unknown header key " + key);
    }
  }
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("line 1: ") + e.what());
  }

  const std::size_t user_vocab = s.n_users + 1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 5) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 tab-separated fields, got " +
                       std::to_string(cols.size()));
    }
    Sample x;
    const std::uint64_t user = parse_uint(cols[0], line_no, "user");
    if (user >= user_vocab) {
      throw ParseError("line " + std::to_string(line_no) + ": user id " + cols[0] +
                       " out of vocabulary (size " + std::to_string(user_vocab) + ")");
    }
    x.user_id = static_cast<std::uint32_t>(user);
    const auto globals = split(cols[1], ',');
    if (globals.size() != s.global_fields.size()) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(s.global_fields.size()) + " global ids, got " +
                       std::to_string(globals.size()));
    }
    for (std::size_t g = 0; g < globals.size(); ++g) {
      const auto ids = parse_ids(globals[g], line_no, s.global_fields[g].vocab,
                                 s.global_fields[g].name.c_str());
      if (ids.size() != 1) {
        throw ParseError("line " + std::to_string(line_no) + ": empty global id");
      }
      x.global_ids.push_back(ids[0]);
    }
    x.short_seq = parse_ids(cols[2], line_no, s.item_vocab(), "short-sequence item");
    x.long_seq = parse_ids(cols[3], line_no, s.item_vocab(), "long-sequence item");
    if (x.short_seq.size() > s.short_len || x.long_seq.size() > s.long_len) {
      throw ParseError("line " + std::to_string(line_no) + ": sequence longer than schema allows");
    }
    if (cols[4] != "0" && cols[4] != "1") {
      throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    x.label = cols[4] == "1" ? 1 : 0;
    x.planted_logit = std::numeric_limits<double>::quiet_NaN();
    ds.samples.push_back(std::move(x));
  }
  if (have_n && expected != ds.samples.size()) {
    throw ParseError("header announces " + std::to_string(expected) + " records, found " +
                     std::to_string(ds.samples.size()));
  }
  if (ds.split > ds.samples.size()) throw ParseError("line 1: split beyond record count");
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_dataset(in);
}

FeatureSchema schema_from_keys(KeyValueFile& kv) {
  std::vector<GlobalField> context;
  const std::string ctx = kv.take_string("context_fields", "device:4,hour:24");
  if (!ctx.empty()) {
    for (const std::string& f : split(ctx, ',')) {
      const auto colon = f.find(':');
      if (colon == std::string::npos) {
        throw ParseError(kv.source() + ": malformed context field `" + f + "`");
      }
      context.push_back({f.substr(0, colon),
                         static_cast<std::size_t>(parse_uint(f.substr(colon + 1), 0, "vocabulary")) + 1});
    }
  }
  FeatureSchema s = make_schema(kv.take_size("n_users", 500), kv.take_size("n_items", 400),
                                kv.take_size("n_categories", 20), kv.take_size("short_len", 10),
                                kv.take_size("long_len", 40), std::move(context));
  s.noise_scale = kv.take_double("noise", 1.0);
  s.target_ctr = kv.take_double("target_ctr", 0.3);
  s.test_fraction = kv.take_double("test_fraction", 0.2);
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw ParseError(kv.source() + ": " + e.what());
  }
  return s;
}

FeatureSchema read_schema_file(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  FeatureSchema s = schema_from_keys(kv);
  kv.finish();
  return s;
}

}  // namespace loopctr
