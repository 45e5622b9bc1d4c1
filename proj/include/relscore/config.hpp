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

#include <filesystem>
#include <string>

#include "relscore/metrics.hpp"
#include "relscore/pipeline.hpp"

namespace relscore {

/// Everything a run can be configured with. Loaded from a JSON file with
/// optional "metrics" and "pipeline" sections; absent keys keep defaults.
struct ToolConfig {
  MetricConfig metrics;
  PipelineConfig pipeline;
};

ToolConfig load_tool_config(const std::filesystem::path& path);

/// One phrase per line; blank lines and '#' comments ignored.
std::set<std::string> load_phrase_list(const std::filesystem::path& path);

/// Fully expanded, key-sorted JSON of the effective configuration.
std::string config_to_json(const ToolConfig& config);
std::string config_digest(const ToolConfig& config);

}  // namespace relscore
