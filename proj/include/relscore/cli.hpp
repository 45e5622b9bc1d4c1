// Copyright 2026 The RelScore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

namespace relscore::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInputError = 2,
  kProviderError = 3,
  kInternalError = 4,
};

/// Runs the relscore command line (args excludes the program name) and returns
/// the process exit code. Diagnostics go to stderr; reports go where --out says.
int run(const std::vector<std::string>& args);

}  // namespace relscore::cli
