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

#include "fixtures.hpp"

#include <atomic>
#include <opencv2/imgcodecs.hpp>

#include "relscore/digest.hpp"
#include "relscore/geometry.hpp"

namespace relscore::testing {

namespace {

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

BoundingBox random_box(std::mt19937_64& rng, int width, int height) {
  const int w = uniform_int(rng, 2, std::max(2, width / 2));
  const int h = uniform_int(rng, 2, std::max(2, height / 2));
  const int x = uniform_int(rng, 0, width - w);
  const int y = uniform_int(rng, 0, height - h);
  return {double(x), double(y), double(w), double(h)};
}

void write_noise_png(const std::filesystem::path& path, int width, int height, std::uint64_t seed) {
  cv::Mat img(height, width, CV_8UC3);
  std::mt19937_64 rng(seed);
  for (int r = 0; r < height; ++r) {
    auto* row = img.ptr<std::uint8_t>(r);
    for (int c = 0; c < width * 3; ++c) row[c] = static_cast<std::uint8_t>(rng() & 0xff);
  }
  std::filesystem::create_directories(path.parent_path());
  cv::imwrite(path.string(), img);
}

SceneGraphDataset make_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneGraphDataset dataset;
  dataset.name = "synthetic";
  for (std::size_t i = 0; i < options.images; ++i) {
    ImageRecord image;
    char id[32];
    std::snprintf(id, sizeof id, "img%05zu", i);
    image.image_id = id;
    image.width = options.width;
    image.height = options.height;
    image.file_path = "images/" + image.image_id + ".png";
    const int n = uniform_int(rng, options.min_objects, options.max_objects);
    for (int o = 0; o < n; ++o) {
      ObjectInstance obj;
      obj.object_id = o + 1;
      obj.class_label = options.labels[rng() % options.labels.size()];
      obj.box = random_box(rng, options.width, options.height);
      image.objects.push_back(obj);
    }
    for (int s = 1; s <= n; ++s) {
      for (int o = 1; o <= n; ++o) {
        if (s == o || (options.one_direction && s > o) || unit(rng) >= options.relation_density) continue;
        RelationInstance rel;
        rel.subject_id = s;
        rel.object_id = o;
        rel.predicate = options.predicates[rng() % options.predicates.size()];
        image.relations.push_back(rel);
      }
    }
    if (options.write_images) {
      write_noise_png(root / image.file_path, options.width, options.height, mix_seed(seed, i));
    }
    dataset.images.push_back(std::move(image));
  }
  canonicalize(dataset);
  return dataset;
}

void bind_groundtruth(MockProvider& mock, const SceneGraphDataset& dataset, ImageStore& store,
                      const MetricConfig& config) {
  for (const auto& image : dataset.images) {
    for (const auto& rel : image.relations) {
      const auto crop =
          crop_region(store, image, make_region_crop(image, rel.subject_id, rel.object_id, config.crop_expansion));
      mock.bind_seed_phrase(crop.digest, render_triplet(image.object(rel.subject_id).class_label, rel.predicate,
                                                        image.object(rel.object_id).class_label,
                                                        config.triplet_template));
    }
  }
}

}  // namespace relscore::testing
