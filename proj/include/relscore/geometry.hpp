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

#include "relscore/model.hpp"

namespace relscore {

/// Union crop for one subject/object pair, after context expansion and clamping.
struct RegionCropSpec {
  std::string source_image_id;
  BoundingBox crop_box;
  BoundingBox subject_box;
  BoundingBox object_box;
  double expansion_fraction = 0.0;

  friend bool operator==(const RegionCropSpec&, const RegionCropSpec&) = default;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Intersection over union in [0, 1]; 0 for degenerate inputs.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Smallest axis-aligned box containing both.
BoundingBox union_box(const BoundingBox& a, const BoundingBox& b);

/// Grows width and height by `fraction` of themselves (half on each edge), then
/// clamps to [0, image_w] x [0, image_h].
BoundingBox expand_and_clamp(const BoundingBox& box, double fraction, int image_w, int image_h);

/// min(area) / max(area), in (0, 1].
double size_ratio(const BoundingBox& a, const BoundingBox& b);

/// Euclidean gap between the closest points of the two boxes, over
/// max(image_w, image_h). Zero when the boxes touch or overlap.
double separation(const BoundingBox& a, const BoundingBox& b, int image_w, int image_h);

RegionCropSpec make_region_crop(const ImageRecord& image, std::int64_t subject_id,
                                std::int64_t object_id, double expansion_fraction);

}  // namespace relscore
