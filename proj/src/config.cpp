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

#include "relscore/config.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "relscore/digest.hpp"
#include "relscore/errors.hpp"

namespace relscore {

using json = nlohmann::json;

namespace {

Rgba rgba_from(const json& j, const std::string& key) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 3 && v.size() != 4) throw ValidationError(key + " must be [r, g, b] or [r, g, b, a]");
  for (int c : v) {
    if (c < 0 || c > 255) throw ValidationError(key + " components must be in [0, 255]");
  }
  return Rgba{static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2]),
              static_cast<std::uint8_t>(v.size() == 4 ? v[3] : 255)};
}

json rgba_to(const Rgba& c) { return json::array({c.r, c.g, c.b, c.a}); }

std::set<std::string> normalized_set(const std::vector<std::string>& items) {
  std::set<std::string> out;
  for (const auto& s : items) {
    auto n = normalize_label(s);
    if (!n.empty()) out.insert(std::move(n));
  }
  return out;
}

void read_metrics(const json& m, MetricConfig& c) {
  c.alpha = m.value("alpha", c.alpha);
  c.report_scale = m.value("report_scale", c.report_scale);
  c.region_match_iou = m.value("region_match_iou", c.region_match_iou);
  c.penalty_enabled = m.value("penalty_enabled", c.penalty_enabled);
  c.denominator_floor = m.value("denominator_floor", c.denominator_floor);
  if (m.contains("log_base")) {
    const auto& b = m["log_base"];
    c.log_base = log_base_from_string(b.is_string() ? b.get<std::string>() : b.dump());
  }
  c.triplet_template = m.value("triplet_template", c.triplet_template);
  c.crop_expansion = m.value("crop_expansion", c.crop_expansion);
}

void read_pipeline(const json& p, PipelineConfig& c, const std::filesystem::path& base) {
  c.seed = p.value("seed", c.seed);
  c.sampling_fraction = p.value("sampling_fraction", c.sampling_fraction);
  if (p.contains("pair_cap")) {
    // null means unlimited
    c.pair_cap = p["pair_cap"].is_null() ? std::numeric_limits<std::size_t>::max() : p["pair_cap"].get<std::size_t>();
  }
  if (p.contains("pair_count_mode")) {
    const auto mode = p["pair_count_mode"].get<std::string>();
    if (mode == "ordered") {
      c.count_mode = PairCountMode::kOrdered;
    } else if (mode == "unordered") {
      c.count_mode = PairCountMode::kUnordered;
    } else {
      throw ValidationError("pipeline.pair_count_mode must be \"ordered\" or \"unordered\"");
    }
  }
  c.expansion = p.value("expansion", c.expansion);
  if (p.contains("blocklist")) c.blocklist = normalized_set(p["blocklist"].get<std::vector<std::string>>());
  if (p.contains("blocklist_path")) c.blocklist = load_phrase_list(base / p["blocklist_path"].get<std::string>());
  if (p.contains("no_relation_phrases")) {
    c.no_relation_phrases = normalized_set(p["no_relation_phrases"].get<std::vector<std::string>>());
  }
  c.prompt_template = p.value("prompt_template", c.prompt_template);
  if (p.contains("subject_color")) c.overlay.subject_color = rgba_from(p["subject_color"], "pipeline.subject_color");
  if (p.contains("object_color")) c.overlay.object_color = rgba_from(p["object_color"], "pipeline.object_color");
  c.overlay.alpha = p.value("overlay_alpha", c.overlay.alpha);
  c.decode.max_tokens = p.value("max_tokens", c.decode.max_tokens);
  c.decode.temperature = p.value("temperature", c.decode.temperature);
  c.max_words = p.value("max_words", c.max_words);
  c.use_masks = p.value("use_masks", c.use_masks);
}

}  // namespace

std::set<std::string> load_phrase_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open phrase list " + path.string());
  std::vector<std::string> items;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    items.push_back(line);
  }
  return normalized_set(items);
}

ToolConfig load_tool_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ToolConfig config;
  try {
    const auto root = json::parse(ss.str());
    if (!root.is_object()) throw ParseError(path.string() + ": config must be a JSON object");
    if (root.contains("metrics")) read_metrics(root["metrics"], config.metrics);
    if (root.contains("pipeline")) read_pipeline(root["pipeline"], config.pipeline, path.parent_path());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  config.metrics.validate();
  config.pipeline.validate();
  return config;
}

std::string config_to_json(const ToolConfig& config) {
  const auto& m = config.metrics;
  const auto& p = config.pipeline;
  json j;
  j["metrics"] = {
      {"alpha", m.alpha},
      {"report_scale", m.report_scale},
      {"region_match_iou", m.region_match_iou},
      {"penalty_enabled", m.penalty_enabled},
      {"denominator_floor", m.denominator_floor},
      {"log_base", std::string(to_string(m.log_base))},
      {"triplet_template", m.triplet_template},
      {"crop_expansion", m.crop_expansion},
  };
  j["pipeline"] = {
      {"seed", p.seed},
      {"sampling_fraction", p.sampling_fraction},
      {"pair_cap", p.pair_cap == std::numeric_limits<std::size_t>::max() ? json(nullptr) : json(p.pair_cap)},
      {"pair_count_mode", p.count_mode == PairCountMode::kOrdered ? "ordered" : "unordered"},
      {"expansion", p.expansion},
      {"blocklist", p.blocklist},
      {"no_relation_phrases", p.no_relation_phrases},
      {"prompt_template", p.prompt_template},
      {"subject_color", rgba_to(p.overlay.subject_color)},
      {"object_color", rgba_to(p.overlay.object_color)},
      {"overlay_alpha", p.overlay.alpha},
      {"max_tokens", p.decode.max_tokens},
      {"temperature", p.decode.temperature},
      {"max_words", p.max_words},
      {"use_masks", p.use_masks},
  };
  return j.dump(2);
}

std::string config_digest(const ToolConfig& config) { return sha256_hex(config_to_json(config)); }

}  // namespace relscore
