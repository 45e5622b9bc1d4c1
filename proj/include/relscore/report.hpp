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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relscore/config.hpp"
#include "relscore/metrics.hpp"
#include "relscore/model.hpp"
#include "relscore/pipeline.hpp"

namespace relscore {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Embedded in every report so a run can be reproduced from its output alone.
struct RunManifest {
  std::string command;
  std::string config_digest;
  /// (path, sha256) of every input file.
  std::vector<std::pair<std::string, std::string>> inputs;
  std::string backend;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::string tool_version{kToolVersion};
};

/// ISO-8601 UTC. Honors SOURCE_DATE_EPOCH so reruns can be byte-identical.
std::string utc_timestamp();

struct DatasetStats {
  std::size_t images = 0;
  std::size_t objects = 0;
  std::size_t triplets = 0;
  std::size_t predicates = 0;
  double mean_relations_per_image = 0.0;
  std::vector<std::pair<std::string, std::size_t>> histogram;
  /// Share of all triplets covered by the top-r predicates, r = 1..predicates.
  std::vector<double> cumulative_share;
};

DatasetStats dataset_stats(const SceneGraphDataset& dataset);

std::string render_score_report(const RunManifest& manifest, const ToolConfig& config, const ScoreReport& report);
std::string render_alignment_report(const RunManifest& manifest, const ToolConfig& config,
                                    const AlignmentReport& report, std::size_t top_confusions = 20);
std::string render_stats_report(const RunManifest& manifest, const DatasetStats& stats, std::size_t top_k = 20);
std::string render_generation_report(const RunManifest& manifest, const ToolConfig& config,
                                     const GenerationResult& result);

/// "rank predicate count cumulative_share" rows, tab-separated with a header.
std::string histogram_tsv(const DatasetStats& stats);

void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace relscore
