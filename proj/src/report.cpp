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

#include "relscore/report.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>

#include "json.hpp"
#include "relscore/errors.hpp"

namespace relscore {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json manifest_json(const RunManifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["config_digest"] = m.config_digest;
  auto inputs = ordered_json::array();
  for (const auto& [path, digest] : m.inputs) inputs.push_back({{"path", path}, {"sha256", digest}});
  j["inputs"] = std::move(inputs);
  j["backend"] = m.backend;
  j["seed"] = m.seed;
  j["started"] = m.started;
  j["finished"] = m.finished;
  return j;
}

ordered_json image_eval_json(const ImageEvaluation& e) {
  ordered_json j;
  j["image_id"] = e.image_id;
  j["k"] = e.k;
  j["m"] = e.m;
  j["p"] = e.p;
  j["mean_score"] = e.mean_score;
  j["penalized_score"] = e.penalized_score;
  j["skipped"] = e.skipped;
  if (e.skipped) j["skip_reason"] = e.skip_reason;
  return j;
}

ordered_json config_json(const ToolConfig& config) { return ordered_json::parse(config_to_json(config)); }

std::string finish(const ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string utc_timestamp() {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

DatasetStats dataset_stats(const SceneGraphDataset& dataset) {
  DatasetStats s;
  s.images = dataset.images.size();
  s.objects = dataset.object_count();
  s.triplets = dataset.relation_count();
  s.histogram = predicate_histogram(dataset);
  s.predicates = s.histogram.size();
  s.mean_relations_per_image = s.images == 0 ? 0.0 : static_cast<double>(s.triplets) / static_cast<double>(s.images);
  std::size_t running = 0;
  for (const auto& [pred, count] : s.histogram) {
    running += count;
    s.cumulative_share.push_back(static_cast<double>(running) / static_cast<double>(s.triplets));
  }
  return s;
}

std::string render_score_report(const RunManifest& manifest, const ToolConfig& config, const ScoreReport& r) {
  ordered_json j;
  j["report"] = "score";
  j["manifest"] = manifest_json(manifest);
  ordered_json scores;
  scores["backend"] = manifest.backend;
  scores["relscore"] = r.relscore.value;
  scores["ref_relscore"] = r.ref_relscore ? ordered_json(*r.ref_relscore) : ordered_json(nullptr);
  scores["precision"] = r.precision;
  j["scores"] = std::move(scores);
  ordered_json counts;
  counts["predictions"] = r.predictions_total;
  counts["admitted"] = r.admitted;
  counts["unadmitted"] = r.unadmitted;
  counts["images_used"] = r.relscore.images_used;
  counts["images_skipped"] = r.relscore.images_skipped;
  j["counts"] = std::move(counts);
  auto per_image = ordered_json::array();
  for (const auto& e : r.per_image) per_image.push_back(image_eval_json(e));
  j["per_image"] = std::move(per_image);
  j["config"] = config_json(config);
  return finish(j);
}

std::string render_alignment_report(const RunManifest& manifest, const ToolConfig& config,
                                    const AlignmentReport& r, std::size_t top_confusions) {
  ordered_json j;
  j["report"] = "align";
  j["manifest"] = manifest_json(manifest);
  ordered_json scores;
  scores["backend"] = manifest.backend;
  scores["theta"] = r.mean_theta;
  scores["precision"] = r.precision;
  scores["mean_raw_score"] = r.mean_raw_score;
  scores["penalized_relscore"] = r.penalized ? ordered_json(r.penalized->value) : ordered_json(nullptr);
  j["scores"] = std::move(scores);
  ordered_json counts;
  counts["relations_scored"] = r.relations_scored;
  counts["skipped_empty_candidates"] = r.skipped_empty_candidates;
  counts["images_used"] = r.penalized ? r.penalized->images_used : 0;
  counts["images_skipped"] = r.penalized ? r.penalized->images_skipped : r.per_image.size();
  j["counts"] = std::move(counts);
  auto confusions = ordered_json::array();
  for (std::size_t i = 0; i < r.confusions.size() && i < top_confusions; ++i) {
    const auto& c = r.confusions[i];
    confusions.push_back({{"groundtruth", c.groundtruth_triplet}, {"confused", c.confused_triplet}, {"count", c.count}});
  }
  j["confusions"] = std::move(confusions);
  auto per_image = ordered_json::array();
  for (const auto& e : r.per_image) per_image.push_back(image_eval_json(e));
  j["per_image"] = std::move(per_image);
  j["config"] = config_json(config);
  return finish(j);
}

std::string render_stats_report(const RunManifest& manifest, const DatasetStats& s, std::size_t top_k) {
  ordered_json j;
  j["report"] = "stats";
  j["manifest"] = manifest_json(manifest);
  ordered_json counts;
  counts["images"] = s.images;
  counts["objects"] = s.objects;
  counts["triplets"] = s.triplets;
  counts["predicates"] = s.predicates;
  counts["mean_relations_per_image"] = s.mean_relations_per_image;
  j["counts"] = std::move(counts);
  auto top = ordered_json::array();
  for (std::size_t i = 0; i < s.histogram.size() && i < top_k; ++i) {
    top.push_back({{"predicate", s.histogram[i].first}, {"count", s.histogram[i].second}});
  }
  j["top_predicates"] = std::move(top);
  auto hist = ordered_json::array();
  for (std::size_t i = 0; i < s.histogram.size(); ++i) {
    hist.push_back({{"rank", i + 1},
                    {"predicate", s.histogram[i].first},
                    {"count", s.histogram[i].second},
                    {"cumulative_share", s.cumulative_share[i]}});
  }
  j["histogram"] = std::move(hist);
  return finish(j);
}

std::string render_generation_report(const RunManifest& manifest, const ToolConfig& config,
                                     const GenerationResult& result) {
  std::map<std::string, std::size_t> by_status;
  for (const auto& r : result.ledger) ++by_status[std::string(to_string(r.status))];
  ordered_json j;
  j["report"] = "generate";
  j["manifest"] = manifest_json(manifest);
  ordered_json counts;
  counts["images"] = result.dataset.images.size();
  counts["prompts_built"] = result.prompts_built;
  counts["attempted"] = result.attempted;
  counts["reused_from_ledger"] = result.reused;
  counts["relations"] = result.dataset.relation_count();
  counts["mean_relations_per_image"] =
      result.dataset.images.empty()
          ? 0.0
          : static_cast<double>(result.dataset.relation_count()) / static_cast<double>(result.dataset.images.size());
  counts["interrupted"] = result.interrupted;
  j["counts"] = std::move(counts);
  ordered_json status;
  for (const auto& [k, v] : by_status) status[k] = v;
  j["ledger_status"] = std::move(status);
  j["config"] = config_json(config);
  return finish(j);
}

std::string histogram_tsv(const DatasetStats& s) {
  std::string out = "rank\tpredicate\tcount\tcumulative_share\n";
  for (std::size_t i = 0; i < s.histogram.size(); ++i) {
    out += fmt::format("{}\t{}\t{}\t{:.6f}\n", i + 1, s.histogram[i].first, s.histogram[i].second,
                       s.cumulative_share[i]);
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace relscore
