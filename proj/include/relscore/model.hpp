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
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relscore {

/// Axis-aligned box in pixels, top-left origin.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0 && x >= 0.0 && y >= 0.0; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct ObjectInstance {
  std::int64_t object_id = 0;
  std::string class_label;
  BoundingBox box;
  std::optional<std::string> mask_ref;

  friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;
};

enum class Provenance { kGroundtruth, kPredicted, kGenerated };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct RelationInstance {
  std::int64_t subject_id = 0;
  std::int64_t object_id = 0;
  std::string predicate;
  Provenance provenance = Provenance::kGroundtruth;
  std::optional<double> score;

  friend bool operator==(const RelationInstance&, const RelationInstance&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::string file_path;
  std::vector<ObjectInstance> objects;
  std::vector<RelationInstance> relations;

  /// Returns nullptr when the id is absent.
  const ObjectInstance* find_object(std::int64_t object_id) const;
  const ObjectInstance& object(std::int64_t object_id) const;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct SceneGraphDataset {
  std::string name;
  std::vector<ImageRecord> images;

  std::set<std::string> predicate_vocabulary() const;
  std::size_t relation_count() const;
  std::size_t object_count() const;
  const ImageRecord* find_image(std::string_view image_id) const;

  friend bool operator==(const SceneGraphDataset&, const SceneGraphDataset&) = default;
};

/// Ordered (subject, object) pair inside one image.
struct PairKey {
  std::string image_id;
  std::int64_t subject_id = 0;
  std::int64_t object_id = 0;

  friend auto operator<=>(const PairKey&, const PairKey&) = default;
};

enum class DatasetFormat { kCanonical, kPsgJson, kCocoBoxes };

DatasetFormat dataset_format_from_string(std::string_view s);

struct LoadOptions {
  /// PSG only: restrict to "train" or "test" via the file's *_image_ids lists.
  std::optional<std::string> psg_split;
  /// Overhang tolerated (and clamped away) before a box is rejected.
  double clamp_tolerance_px = 2.0;
};

/// Lowercase, underscores to spaces, collapse and trim whitespace.
std::string normalize_label(std::string_view raw);

/// Validates, clamps, normalizes, removes duplicate triplets, and sorts into
/// canonical order. Every loader funnels through this.
void canonicalize(SceneGraphDataset& dataset, const LoadOptions& options = {});

SceneGraphDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                               const LoadOptions& options = {});

/// Streams a canonical file one image at a time. Records are validated and
/// normalized individually; cross-image checks (duplicate image ids) are the
/// caller's business.
void for_each_canonical_image(const std::filesystem::path& path,
                              const std::function<void(ImageRecord&&)>& visit,
                              const LoadOptions& options = {});

void save_dataset(const SceneGraphDataset& dataset, const std::filesystem::path& path);
std::string serialize_canonical(const SceneGraphDataset& dataset);

/// Descending by count, ties lexicographic.
std::vector<std::pair<std::string, std::size_t>> predicate_histogram(
    const SceneGraphDataset& dataset);

/// "{subject label} {predicate} {object label}" by default; template placeholders
/// are {subject}, {predicate}, {object}.
std::string render_triplet(std::string_view subject_label, std::string_view predicate,
                           std::string_view object_label,
                           std::string_view templ = "{subject} {predicate} {object}");

std::string file_sha256(const std::filesystem::path& path);

}  // namespace relscore
