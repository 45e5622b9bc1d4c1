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
#include <random>
#include <string>

#include "relscore/imaging.hpp"
#include "relscore/metrics.hpp"
#include "relscore/model.hpp"
#include "relscore/providers.hpp"

namespace relscore::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "relscore");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct SyntheticOptions {
  std::size_t images = 10;
  int min_objects = 2;
  int max_objects = 8;
  int width = 160;
  int height = 120;
  /// Chance that a generated relation pair is kept; relations are drawn over all ordered pairs.
  double relation_density = 0.3;
  std::vector<std::string> labels = {"person", "dog", "table", "cup", "car", "tree", "chair", "horse"};
  std::vector<std::string> predicates = {"on", "holding", "riding", "under", "beside", "in front of",
                                         "sitting on", "looking at"};
  bool write_images = true;
  /// Annotate at most one direction of each object pair.
  bool one_direction = false;
};

/// Random but seed-reproducible dataset. When write_images is set, every image
/// is written as a PNG of noise under `root` and file_path is relative to it.
SceneGraphDataset make_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options,
                                         std::uint64_t seed);

/// Writes a deterministic noise PNG of the given size.
void write_noise_png(const std::filesystem::path& path, int width, int height, std::uint64_t seed);

/// Box with integer-valued corners inside a width x height image.
BoundingBox random_box(std::mt19937_64& rng, int width, int height);

/// Binds every groundtruth triplet's text to its scoring crop, so the mock
/// gives the annotated predicate cosine 1 and everything else less.
void bind_groundtruth(MockProvider& mock, const SceneGraphDataset& dataset, ImageStore& store,
                      const MetricConfig& config);

}  // namespace relscore::testing
