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

#include "relscore/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "relscore/errors.hpp"

namespace relscore {

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BoundingBox union_box(const BoundingBox& a, const BoundingBox& b) {
  const double x0 = std::min(a.x, b.x);
  const double y0 = std::min(a.y, b.y);
  const double x1 = std::max(a.right(), b.right());
  const double y1 = std::max(a.bottom(), b.bottom());
  return {x0, y0, x1 - x0, y1 - y0};
}

BoundingBox expand_and_clamp(const BoundingBox& box, double fraction, int image_w, int image_h) {
  if (fraction < 0.0) throw ValidationError("expansion fraction must be >= 0");
  const double dx = 0.5 * fraction * box.w;
  const double dy = 0.5 * fraction * box.h;
  const double x0 = std::clamp(box.x - dx, 0.0, static_cast<double>(image_w));
  const double y0 = std::clamp(box.y - dy, 0.0, static_cast<double>(image_h));
  const double x1 = std::clamp(box.right() + dx, 0.0, static_cast<double>(image_w));
  const double y1 = std::clamp(box.bottom() + dy, 0.0, static_cast<double>(image_h));
  return {x0, y0, x1 - x0, y1 - y0};
}

double size_ratio(const BoundingBox& a, const BoundingBox& b) {
  const double lo = std::min(a.area(), b.area());
  const double hi = std::max(a.area(), b.area());
  if (hi <= 0.0) return 1.0;
  return lo / hi;
}

double separation(const BoundingBox& a, const BoundingBox& b, int image_w, int image_h) {
  const double gap_x = std::max({0.0, b.x - a.right(), a.x - b.right()});
  const double gap_y = std::max({0.0, b.y - a.bottom(), a.y - b.bottom()});
  const double scale = static_cast<double>(std::max(image_w, image_h));
  if (scale <= 0.0) return 0.0;
  return std::hypot(gap_x, gap_y) / scale;
}

RegionCropSpec make_region_crop(const ImageRecord& image, std::int64_t subject_id,
                                std::int64_t object_id, double expansion_fraction) {
  if (subject_id == object_id) {
    throw ValidationError("image " + image.image_id + ": subject and object must differ");
  }
  const auto& subject = image.object(subject_id);
  const auto& object = image.object(object_id);
  RegionCropSpec spec;
  spec.source_image_id = image.image_id;
  spec.subject_box = subject.box;
  spec.object_box = object.box;
  spec.expansion_fraction = expansion_fraction;
  spec.crop_box = expand_and_clamp(union_box(subject.box, object.box), expansion_fraction,
                                   image.width, image.height);
  return spec;
}

}  // namespace relscore
