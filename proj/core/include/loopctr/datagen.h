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

#ifndef LOOPCTR_DATAGEN_H_
#define LOOPCTR_DATAGEN_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace loopctr {

struct GlobalField {
  std::string name;
  std::size_t vocab = 0;  // includes the pad id 0

  friend bool operator==(const GlobalField&, const GlobalField&) = default;
};

// Shape of the synthetic CTR data. Id 0 is the pad id of every vocabulary;
// real items are 1..n_items, real categories 1..n_categories.
struct FeatureSchema {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_categories = 0;
  std::vector<GlobalField> global_fields;
  std::size_t short_len = 0;
  std::size_t long_len = 0;
  double noise_scale = 1.0;
  double target_ctr = 0.3;
  double test_fraction = 0.2;

  std::size_t item_vocab() const { return n_items + 1; }
  // Throws ContractViolation on a degenerate schema.
  void validate() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

// Builds the generator's field list: user, item, category, the given
// context fields, then the user-category affinity cross field.
FeatureSchema make_schema(std::size_t n_users, std::size_t n_items,
                          std::size_t n_categories, std::size_t short_len,
                          std::size_t long_len,
                          std::vector<GlobalField> context_fields);

struct Sample {
  std::uint32_t user_id = 0;
  std::vector<std::uint32_t> global_ids;  // one per global field
  std::vector<std::uint32_t> short_seq;   // item ids, 0 = pad
  std::vector<std::uint32_t> long_seq;    // item ids, 0 = pad
  int label = 0;
  // Noise-free part of the planted logit. Diagnostics only; not persisted.
  double planted_logit = 0.0;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Sample> samples;
  std::uint64_t seed = 0;
  std::size_t split = 0;  // samples [0, split) train, [split, n) test

  std::span<const Sample> train() const {
    return std::span<const Sample>(samples).first(split);
  }
  std::span<const Sample> test() const {
    return std::span<const Sample>(samples).subspan(split);
  }
};

// Hand-crafted features the planted logit is built from; exposed so tests
// can fit an oracle baseline on them.
struct PlantedFeatures {
  double short_overlap = 0.0;  // fraction of valid short items in the candidate's category
  double long_overlap = 0.0;   // same over the long history
  double user_item = 0.0;      // latent user/item affinity
  double context = 0.0;        // context effect
};

PlantedFeatures planted_features(const FeatureSchema& schema, std::uint64_t seed,
                                 const Sample& sample);

// Category of an item under the generator's item->category map.
std::uint32_t item_category(const FeatureSchema& schema, std::uint64_t seed,
                            std::uint32_t item);

Dataset generate_dataset(const FeatureSchema& schema, std::size_t n_samples,
                         std::uint64_t seed);

// Text format: one header line encoding the schema, then one record per
// line: user \t g1,g2,... \t s1,s2,... \t l1,l2,... \t label.
void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

class KeyValueFile;

// Consumes the schema keys (n_users, n_items, n_categories, short_len,
// long_len, context_fields, noise, target_ctr, test_fraction) from `kv`,
// falling back to defaults for absent keys.
FeatureSchema schema_from_keys(KeyValueFile& kv);

// Flat "key = value" schema file used by the `gen` command. Unknown keys are
// errors.
FeatureSchema read_schema_file(const std::filesystem::path& path);

}  // namespace loopctr

#endif  // LOOPCTR_DATAGEN_H_
