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

#ifndef LOOPCTR_CHECKPOINT_H_
#define LOOPCTR_CHECKPOINT_H_

#include <filesystem>
#include <iosfwd>

#include "loopctr/model.h"

namespace loopctr {

// Text container:
//   loopctr-checkpoint v1
//   config <key> = <value>          model configuration
//   schema <key> = <value>          n_users, n_items, n_categories, short_len, long_len
//   field <name> <vocab>            global fields in order
//   param <name> <dims...>          followed by one line per row (last dim = cols)
//   end
// Values use the shortest decimal form that reads back to the same double.
void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);

// Rebuilds the model and overwrites every parameter. Missing, unknown or
// misshaped blocks are parse errors.
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace loopctr

#endif  // LOOPCTR_CHECKPOINT_H_
