// Copyright (c) the cvpp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CVPP_CHECKPOINT_H_
#define CVPP_CHECKPOINT_H_

#include <string>
#include <vector>

#include <json.hpp>

#include "cvpp/autodiff.h"

namespace cvpp {

// Single-file archive: named float arrays plus a JSON manifest (model
// revision, lambda, stage, architecture config). Loading matches by name, so
// checkpoints stay forward/backward compatible across model revisions:
// unknown arrays are skipped, missing ones keep their initialization.
void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const nlohmann::json& manifest);

// Reads only the manifest — cheap, and needed to construct the right model
// before loading the arrays.
nlohmann::json read_manifest(const std::string& path);

// Returns the manifest. `missing` lists store params absent from the file;
// `unknown` lists file arrays with no matching parameter (either may be null).
// Arrays whose shape disagrees with the parameter are treated as unknown.
nlohmann::json load_checkpoint(const std::string& path, ParamStore& ps,
                               std::vector<std::string>* missing = nullptr,
                               std::vector<std::string>* unknown = nullptr);

}  // namespace cvpp

#endif  // CVPP_CHECKPOINT_H_
