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

#include "relscore/imaging.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

#include "relscore/errors.hpp"

namespace relscore {

namespace {

void blend(cv::Mat& canvas, const cv::Mat& region_mask, const Rgba& color, double alpha) {
  const double a = alpha * (color.a / 255.0);
  const cv::Vec3d bgr(color.b, color.g, color.r);
  for (int y = 0; y < canvas.rows; ++y) {
    auto* px = canvas.ptr<cv::Vec3b>(y);
    const auto* m = region_mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < canvas.cols; ++x) {
      if (!m[x]) continue;
      for (int c = 0; c < 3; ++c) {
        px[x][c] = cv::saturate_cast<std::uint8_t>((1.0 - a) * px[x][c] + a * bgr[c]);
      }
    }
  }
}

cv::Mat box_mask(const BoundingBox& box, int w, int h) {
  cv::Mat mask = cv::Mat::zeros(h, w, CV_8U);
  const auto rect = pixel_rect(box, w, h);
  if (rect.area() > 0) mask(rect).setTo(255);
  return mask;
}

}  // namespace

cv::Rect pixel_rect(const BoundingBox& box, int image_w, int image_h) {
  const int x0 = std::clamp(static_cast<int>(std::floor(box.x)), 0, image_w);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.y)), 0, image_h);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.right())), 0, image_w);
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.bottom())), 0, image_h);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

ImageStore::ImageStore(std::filesystem::path root, std::size_t capacity)
    : root_(std::move(root)), capacity_(std::max<std::size_t>(1, capacity)) {}

std::filesystem::path ImageStore::resolve(const std::string& relative) const {
  std::filesystem::path p(relative);
  return p.is_absolute() ? p : root_ / p;
}

cv::Mat ImageStore::load(const ImageRecord& image) {
  const auto path = resolve(image.file_path).string();
  std::lock_guard lock(mu_);
  for (auto it = lru_.begin(); it != lru_.end(); ++it) {
    if (it->first == path) {
      lru_.splice(lru_.begin(), lru_, it);
      return lru_.front().second;
    }
  }
  if (image.file_path.empty()) throw IoError("image " + image.image_id + " has no file_path");
  cv::Mat decoded = cv::imread(path, cv::IMREAD_COLOR);
  if (decoded.empty()) throw IoError("image " + image.image_id + ": cannot read " + path);
  if (decoded.cols != image.width || decoded.rows != image.height) {
    throw ValidationError("image " + image.image_id + ": file is " + std::to_string(decoded.cols) + "x" +
                          std::to_string(decoded.rows) + " but the record says " + std::to_string(image.width) +
                          "x" + std::to_string(image.height));
  }
  lru_.emplace_front(path, decoded);
  if (lru_.size() > capacity_) lru_.pop_back();
  return decoded;
}

cv::Mat ImageStore::load_mask(const std::string& mask_ref, const ImageRecord& image) {
  const auto hash = mask_ref.rfind('#');
  const std::string file = hash == std::string::npos ? mask_ref : mask_ref.substr(0, hash);
  const auto path = resolve(file).string();
  cv::Mat raw = cv::imread(path, hash == std::string::npos ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (raw.empty()) throw IoError("image " + image.image_id + ": cannot read mask " + path);
  if (raw.cols != image.width || raw.rows != image.height) {
    throw ValidationError("image " + image.image_id + ": mask " + path + " has the wrong size");
  }
  cv::Mat mask(raw.rows, raw.cols, CV_8U);
  if (hash == std::string::npos) {
    cv::compare(raw, 0, mask, cv::CMP_NE);
    return mask;
  }
  long segment = 0;
  try {
    segment = std::stol(mask_ref.substr(hash + 1));
  } catch (const std::exception&) {
    throw ParseError("bad mask reference \"" + mask_ref + "\"");
  }
  for (int y = 0; y < raw.rows; ++y) {
    const auto* px = raw.ptr<cv::Vec3b>(y);
    auto* m = mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) {
      // OpenCV stores BGR.
      const long id = px[x][2] + 256L * px[x][1] + 65536L * px[x][0];
      m[x] = id == segment ? 255 : 0;
    }
  }
  return mask;
}

std::optional<MaskPair> ImageStore::load_masks(const ImageRecord& image, std::int64_t subject_id,
                                               std::int64_t object_id) {
  const auto& subject = image.object(subject_id);
  const auto& object = image.object(object_id);
  if (!subject.mask_ref || !object.mask_ref) return std::nullopt;
  return MaskPair{load_mask(*subject.mask_ref, image), load_mask(*object.mask_ref, image)};
}

ImagePayload encode_png(const cv::Mat& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", image, bytes, {cv::IMWRITE_PNG_COMPRESSION, 3})) {
    throw IoError("PNG encoding failed");
  }
  return ImagePayload::from_bytes(std::move(bytes));
}

ImagePayload crop_region(ImageStore& store, const ImageRecord& image, const RegionCropSpec& spec) {
  const cv::Mat full = store.load(image);
  const auto rect = pixel_rect(spec.crop_box, full.cols, full.rows);
  if (rect.area() <= 0) throw ValidationError("image " + image.image_id + ": empty crop region");
  return encode_png(full(rect));
}

cv::Mat render_marks(const cv::Mat& image, const BoundingBox& subject, const BoundingBox& object,
                     const std::optional<MaskPair>& masks, const OverlaySpec& overlay) {
  cv::Mat canvas = image.clone();
  const cv::Mat subject_mask = masks ? masks->subject : box_mask(subject, image.cols, image.rows);
  const cv::Mat object_mask = masks ? masks->object : box_mask(object, image.cols, image.rows);
  blend(canvas, subject_mask, overlay.subject_color, overlay.alpha);
  blend(canvas, object_mask, overlay.object_color, overlay.alpha);
  return canvas;
}

}  // namespace relscore
