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

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include "relscore/geometry.hpp"
#include "relscore/model.hpp"
#include "relscore/providers.hpp"

namespace relscore {

struct Rgba {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  std::uint8_t a = 255;

  friend bool operator==(const Rgba&, const Rgba&) = default;
};

/// Set-of-Mark colors: subject blue, object red.
struct OverlaySpec {
  Rgba subject_color{0, 0, 255, 255};
  Rgba object_color{255, 0, 0, 255};
  double alpha = 0.45;
};

/// Binary masks (CV_8U, nonzero = inside) at full image resolution.
struct MaskPair {
  cv::Mat subject;
  cv::Mat object;
};

/// Integer pixel rectangle covering `box`, clamped to the image.
cv::Rect pixel_rect(const BoundingBox& box, int image_w, int image_h);

/// Loads images (and masks) relative to a root directory, keeping a few
/// decoded images around. Safe for concurrent use.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root, std::size_t capacity = 8);

  /// BGR image; throws IoError when unreadable and ValidationError when its
  /// size disagrees with the record.
  cv::Mat load(const ImageRecord& image);

  /// "file.png" is a binary mask; "file.png#ID" selects segment ID from a
  /// panoptic PNG (ID = R + 256 G + 65536 B).
  cv::Mat load_mask(const std::string& mask_ref, const ImageRecord& image);

  std::optional<MaskPair> load_masks(const ImageRecord& image, std::int64_t subject_id, std::int64_t object_id);

  std::filesystem::path resolve(const std::string& relative) const;

 private:
  std::filesystem::path root_;
  std::size_t capacity_;
  std::mutex mu_;
  std::list<std::pair<std::string, cv::Mat>> lru_;
};

/// Lossless PNG encoding; the same pixels always give the same bytes.
ImagePayload encode_png(const cv::Mat& image);

/// Plain union crop of `spec.crop_box`, encoded.
ImagePayload crop_region(ImageStore& store, const ImageRecord& image, const RegionCropSpec& spec);

/// Blends the subject and object marks into a copy of `image`: mask fill when
/// masks are given, filled boxes otherwise.
cv::Mat render_marks(const cv::Mat& image, const BoundingBox& subject, const BoundingBox& object,
                     const std::optional<MaskPair>& masks, const OverlaySpec& overlay);

}  // namespace relscore
