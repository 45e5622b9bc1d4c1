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

#include "relscore/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include "json.hpp"
#include "relscore/digest.hpp"
#include "relscore/errors.hpp"

namespace relscore {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kCanonicalFormatTag = "relscore-scene-graph";
constexpr int kCanonicalVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

void clamp_box(BoundingBox& box, const ImageRecord& image, std::size_t object_index,
               double tolerance) {
  const auto where = [&] {
    return fmt::format("image {}: objects[{}].bbox", image.image_id, object_index);
  };
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw ValidationError(where() + " has non-positive size");
  }
  if (box.x < -tolerance || box.y < -tolerance || box.right() > image.width + tolerance ||
      box.bottom() > image.height + tolerance) {
    throw ValidationError(where() + " lies outside the image bounds");
  }
  const double x0 = std::max(0.0, box.x);
  const double y0 = std::max(0.0, box.y);
  const double x1 = std::min<double>(image.width, box.right());
  const double y1 = std::min<double>(image.height, box.bottom());
  if (x1 <= x0 || y1 <= y0) throw ValidationError(where() + " is empty after clamping");
  box = BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

void canonicalize_image(ImageRecord& image, const LoadOptions& options) {
  if (image.image_id.empty()) throw ValidationError("image with empty image_id");
  if (image.width <= 0) throw ValidationError("image " + image.image_id + ": width must be > 0");
  if (image.height <= 0) throw ValidationError("image " + image.image_id + ": height must be > 0");

  std::unordered_set<std::int64_t> ids;
  for (std::size_t i = 0; i < image.objects.size(); ++i) {
    auto& obj = image.objects[i];
    obj.class_label = normalize_label(obj.class_label);
    if (obj.class_label.empty()) {
      throw ValidationError(fmt::format("image {}: objects[{}].label is empty", image.image_id, i));
    }
    if (!ids.insert(obj.object_id).second) {
      throw ValidationError(
          fmt::format("image {}: objects[{}].id {} is duplicated", image.image_id, i, obj.object_id));
    }
    clamp_box(obj.box, image, i, options.clamp_tolerance_px);
  }

  std::set<std::tuple<std::int64_t, std::int64_t, std::string>> seen;
  std::vector<RelationInstance> kept;
  kept.reserve(image.relations.size());
  for (std::size_t i = 0; i < image.relations.size(); ++i) {
    auto& rel = image.relations[i];
    rel.predicate = normalize_label(rel.predicate);
    if (rel.predicate.empty()) {
      throw ValidationError(fmt::format("image {}: relations[{}].pred is empty", image.image_id, i));
    }
    if (rel.subject_id == rel.object_id) {
      throw ValidationError(
          fmt::format("image {}: relations[{}] has sub == obj ({})", image.image_id, i, rel.subject_id));
    }
    if (!ids.contains(rel.subject_id)) {
      throw ValidationError(fmt::format("image {}: relations[{}].sub references unknown object_id {}",
                                        image.image_id, i, rel.subject_id));
    }
    if (!ids.contains(rel.object_id)) {
      throw ValidationError(fmt::format("image {}: relations[{}].obj references unknown object_id {}",
                                        image.image_id, i, rel.object_id));
    }
    if (seen.emplace(rel.subject_id, rel.object_id, rel.predicate).second) {
      kept.push_back(std::move(rel));
    }
  }
  image.relations = std::move(kept);

  std::sort(image.objects.begin(), image.objects.end(),
            [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
  std::sort(image.relations.begin(), image.relations.end(), [](const auto& a, const auto& b) {
    return std::tie(a.subject_id, a.object_id, a.predicate) <
           std::tie(b.subject_id, b.object_id, b.predicate);
  });
}

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing field \"" + key + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field \"" + key + "\": " + e.what());
  }
}

std::string id_to_string(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  throw ParseError("image id must be a string or integer");
}

ImageRecord image_from_canonical(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  ImageRecord image;
  image.image_id = required<std::string>(j, "image_id", where);
  const std::string at = where + " (image " + image.image_id + ")";
  image.width = required<int>(j, "width", at);
  image.height = required<int>(j, "height", at);
  image.file_path = j.value("file_path", std::string{});
  for (const auto& o : j.value("objects", json::array())) {
    ObjectInstance obj;
    obj.object_id = required<std::int64_t>(o, "id", at);
    obj.class_label = required<std::string>(o, "label", at);
    const auto bbox = required<std::vector<double>>(o, "bbox", at);
    if (bbox.size() != 4) throw ParseError(at + ": bbox must have 4 numbers");
    obj.box = {bbox[0], bbox[1], bbox[2], bbox[3]};
    if (auto it = o.find("mask_ref"); it != o.end() && !it->is_null()) {
      obj.mask_ref = it->get<std::string>();
    }
    image.objects.push_back(std::move(obj));
  }
  for (const auto& r : j.value("relations", json::array())) {
    RelationInstance rel;
    rel.subject_id = required<std::int64_t>(r, "sub", at);
    rel.object_id = required<std::int64_t>(r, "obj", at);
    rel.predicate = required<std::string>(r, "pred", at);
    rel.provenance = provenance_from_string(r.value("prov", std::string{"groundtruth"}));
    if (auto it = r.find("score"); it != r.end() && !it->is_null()) rel.score = it->get<double>();
    image.relations.push_back(std::move(rel));
  }
  return image;
}

ordered_json image_to_canonical(const ImageRecord& image) {
  ordered_json j;
  j["image_id"] = image.image_id;
  j["width"] = image.width;
  j["height"] = image.height;
  j["file_path"] = image.file_path;
  auto objects = ordered_json::array();
  for (const auto& obj : image.objects) {
    ordered_json o;
    o["id"] = obj.object_id;
    o["label"] = obj.class_label;
    o["bbox"] = {obj.box.x, obj.box.y, obj.box.w, obj.box.h};
    if (obj.mask_ref) o["mask_ref"] = *obj.mask_ref;
    objects.push_back(std::move(o));
  }
  j["objects"] = std::move(objects);
  auto relations = ordered_json::array();
  for (const auto& rel : image.relations) {
    ordered_json r;
    r["sub"] = rel.subject_id;
    r["obj"] = rel.object_id;
    r["pred"] = rel.predicate;
    r["prov"] = std::string(to_string(rel.provenance));
    if (rel.score) r["score"] = *rel.score;
    relations.push_back(std::move(r));
  }
  j["relations"] = std::move(relations);
  return j;
}

bool is_header(const json& j) { return j.is_object() && j.contains("format"); }

void check_header(const json& j, const std::string& where) {
  if (j.value("format", std::string{}) != kCanonicalFormatTag) {
    throw ParseError(where + ": unknown format tag");
  }
  if (j.value("version", 0) != kCanonicalVersion) {
    throw ParseError(where + ": unsupported schema version " + j.value("version", json{}).dump());
  }
}

// Returns the dataset name from the header line, if any.
std::string stream_canonical(const std::filesystem::path& path,
                             const std::function<void(ImageRecord&&)>& visit,
                             const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string name;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = fmt::format("{}:{}", path.string(), line_no);
    const json j = parse_json_text(line, where);
    if (is_header(j)) {
      if (line_no != 1) throw ParseError(where + ": header must be the first line");
      check_header(j, where);
      name = j.value("name", std::string{});
      continue;
    }
    ImageRecord image = image_from_canonical(j, where);
    canonicalize_image(image, options);
    visit(std::move(image));
  }
  return name;
}

SceneGraphDataset load_psg(const std::filesystem::path& path, const LoadOptions& options) {
  const json root = parse_json_text(read_file(path), path.string());
  const std::string where = path.string();
  auto classes = required<std::vector<std::string>>(root, "thing_classes", where);
  const auto stuff = root.value("stuff_classes", std::vector<std::string>{});
  classes.insert(classes.end(), stuff.begin(), stuff.end());
  const auto predicates = required<std::vector<std::string>>(root, "predicate_classes", where);

  std::optional<std::unordered_set<std::string>> keep;
  if (options.psg_split) {
    const std::string key = *options.psg_split + "_image_ids";
    keep.emplace();
    for (const auto& id : required<json>(root, key.c_str(), where)) keep->insert(id_to_string(id));
  }

  SceneGraphDataset dataset;
  dataset.name = path.stem().string() + (options.psg_split ? ":" + *options.psg_split : "");
  for (const auto& entry : required<json>(root, "data", where)) {
    ImageRecord image;
    image.image_id = id_to_string(required<json>(entry, "image_id", where));
    if (keep && !keep->contains(image.image_id)) continue;
    const std::string at = where + " (image " + image.image_id + ")";
    image.width = required<int>(entry, "width", at);
    image.height = required<int>(entry, "height", at);
    image.file_path = entry.value("file_name", std::string{});
    const auto pan_seg = entry.value("pan_seg_file_name", std::string{});
    const auto segments = entry.value("segments_info", json::array());
    const auto annotations = entry.value("annotations", json::array());
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      const auto& a = annotations[i];
      ObjectInstance obj;
      obj.object_id = static_cast<std::int64_t>(i);
      const auto category = required<std::size_t>(a, "category_id", at);
      if (category >= classes.size()) {
        throw ValidationError(fmt::format("{}: annotations[{}].category_id {} out of range", at, i, category));
      }
      obj.class_label = classes[category];
      const auto bbox = required<std::vector<double>>(a, "bbox", at);
      if (bbox.size() != 4) throw ParseError(at + ": bbox must have 4 numbers");
      // bbox_mode 0 is XYXY_ABS (the PSG default), 1 is XYWH_ABS.
      if (a.value("bbox_mode", 0) == 1) {
        obj.box = {bbox[0], bbox[1], bbox[2], bbox[3]};
      } else {
        obj.box = {bbox[0], bbox[1], bbox[2] - bbox[0], bbox[3] - bbox[1]};
      }
      if (!pan_seg.empty() && i < segments.size() && segments[i].contains("id")) {
        obj.mask_ref = pan_seg + "#" + segments[i]["id"].dump();
      }
      image.objects.push_back(std::move(obj));
    }
    const auto relations = entry.value("relations", json::array());
    for (std::size_t i = 0; i < relations.size(); ++i) {
      const auto triple = relations[i].get<std::vector<std::int64_t>>();
      if (triple.size() != 3) throw ParseError(fmt::format("{}: relations[{}] must have 3 entries", at, i));
      if (triple[2] < 0 || static_cast<std::size_t>(triple[2]) >= predicates.size()) {
        throw ValidationError(fmt::format("{}: relations[{}] predicate index out of range", at, i));
      }
      image.relations.push_back({triple[0], triple[1], predicates[static_cast<std::size_t>(triple[2])],
                                 Provenance::kGroundtruth, std::nullopt});
    }
    dataset.images.push_back(std::move(image));
  }
  canonicalize(dataset, options);
  return dataset;
}

SceneGraphDataset load_coco(const std::filesystem::path& path, const LoadOptions& options) {
  const json root = parse_json_text(read_file(path), path.string());
  const std::string where = path.string();
  std::map<std::int64_t, std::string> categories;
  for (const auto& c : required<json>(root, "categories", where)) {
    categories[required<std::int64_t>(c, "id", where)] = required<std::string>(c, "name", where);
  }
  SceneGraphDataset dataset;
  dataset.name = path.stem().string();
  std::map<std::string, std::size_t> index;
  for (const auto& im : required<json>(root, "images", where)) {
    ImageRecord image;
    image.image_id = id_to_string(required<json>(im, "id", where));
    image.width = required<int>(im, "width", where);
    image.height = required<int>(im, "height", where);
    image.file_path = im.value("file_name", std::string{});
    index[image.image_id] = dataset.images.size();
    dataset.images.push_back(std::move(image));
  }
  for (const auto& a : root.value("annotations", json::array())) {
    const std::string image_id = id_to_string(required<json>(a, "image_id", where));
    const auto it = index.find(image_id);
    if (it == index.end()) {
      throw ValidationError(where + ": annotation references unknown image_id " + image_id);
    }
    ObjectInstance obj;
    obj.object_id = required<std::int64_t>(a, "id", where);
    const auto category = required<std::int64_t>(a, "category_id", where);
    const auto cat = categories.find(category);
    if (cat == categories.end()) {
      throw ValidationError(fmt::format("image {}: annotation {} has unknown category_id {}", image_id,
                                        obj.object_id, category));
    }
    obj.class_label = cat->second;
    const auto bbox = required<std::vector<double>>(a, "bbox", where);
    if (bbox.size() != 4) throw ParseError(where + ": bbox must have 4 numbers");
    obj.box = {bbox[0], bbox[1], bbox[2], bbox[3]};
    dataset.images[it->second].objects.push_back(std::move(obj));
  }
  canonicalize(dataset, options);
  return dataset;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kGroundtruth: return "groundtruth";
    case Provenance::kPredicted: return "predicted";
    case Provenance::kGenerated: return "generated";
  }
  return "groundtruth";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "groundtruth" || s == "gt") return Provenance::kGroundtruth;
  if (s == "predicted" || s == "pred") return Provenance::kPredicted;
  if (s == "generated" || s == "gen") return Provenance::kGenerated;
  throw ParseError("unknown provenance \"" + std::string(s) + "\"");
}

DatasetFormat dataset_format_from_string(std::string_view s) {
  if (s == "canonical") return DatasetFormat::kCanonical;
  if (s == "psg_json" || s == "psg") return DatasetFormat::kPsgJson;
  if (s == "coco_boxes" || s == "coco") return DatasetFormat::kCocoBoxes;
  throw InputError("unknown dataset format \"" + std::string(s) + "\"");
}

const ObjectInstance* ImageRecord::find_object(std::int64_t id) const {
  const auto it = std::find_if(objects.begin(), objects.end(),
                               [id](const ObjectInstance& o) { return o.object_id == id; });
  return it == objects.end() ? nullptr : &*it;
}

const ObjectInstance& ImageRecord::object(std::int64_t id) const {
  if (const auto* obj = find_object(id)) return *obj;
  throw ValidationError(fmt::format("image {}: no object with id {}", image_id, id));
}

std::set<std::string> SceneGraphDataset::predicate_vocabulary() const {
  std::set<std::string> vocab;
  for (const auto& image : images) {
    for (const auto& rel : image.relations) vocab.insert(rel.predicate);
  }
  return vocab;
}

std::size_t SceneGraphDataset::relation_count() const {
  std::size_t n = 0;
  for (const auto& image : images) n += image.relations.size();
  return n;
}

std::size_t SceneGraphDataset::object_count() const {
  std::size_t n = 0;
  for (const auto& image : images) n += image.objects.size();
  return n;
}

const ImageRecord* SceneGraphDataset::find_image(std::string_view image_id) const {
  const auto it = std::lower_bound(images.begin(), images.end(), image_id,
                                   [](const ImageRecord& im, std::string_view id) { return im.image_id < id; });
  if (it != images.end() && it->image_id == image_id) return &*it;
  // Not canonicalized; fall back to a scan.
  const auto lin = std::find_if(images.begin(), images.end(),
                                [&](const ImageRecord& im) { return im.image_id == image_id; });
  return lin == images.end() ? nullptr : &*lin;
}

std::string normalize_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    const auto uc = static_cast<unsigned char>(c);
    if (c == '_' || std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

void canonicalize(SceneGraphDataset& dataset, const LoadOptions& options) {
  for (auto& image : dataset.images) canonicalize_image(image, options);
  std::sort(dataset.images.begin(), dataset.images.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  const auto dup = std::adjacent_find(dataset.images.begin(), dataset.images.end(),
                                      [](const auto& a, const auto& b) { return a.image_id == b.image_id; });
  if (dup != dataset.images.end()) throw ValidationError("duplicate image_id " + dup->image_id);
}

void for_each_canonical_image(const std::filesystem::path& path,
                              const std::function<void(ImageRecord&&)>& visit,
                              const LoadOptions& options) {
  stream_canonical(path, visit, options);
}

SceneGraphDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                               const LoadOptions& options) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  switch (format) {
    case DatasetFormat::kPsgJson: return load_psg(path, options);
    case DatasetFormat::kCocoBoxes: return load_coco(path, options);
    case DatasetFormat::kCanonical: break;
  }
  SceneGraphDataset dataset;
  dataset.name = stream_canonical(
      path, [&](ImageRecord&& image) { dataset.images.push_back(std::move(image)); }, options);
  canonicalize(dataset, options);
  return dataset;
}

std::string serialize_canonical(const SceneGraphDataset& dataset) {
  std::vector<const ImageRecord*> order;
  order.reserve(dataset.images.size());
  for (const auto& image : dataset.images) order.push_back(&image);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->image_id < b->image_id; });

  ordered_json header;
  header["format"] = kCanonicalFormatTag;
  header["version"] = kCanonicalVersion;
  header["name"] = dataset.name;
  std::string out = header.dump() + "\n";
  for (const auto* image : order) {
    ImageRecord sorted = *image;
    std::sort(sorted.objects.begin(), sorted.objects.end(),
              [](const auto& a, const auto& b) { return a.object_id < b.object_id; });
    std::sort(sorted.relations.begin(), sorted.relations.end(), [](const auto& a, const auto& b) {
      return std::tie(a.subject_id, a.object_id, a.predicate) <
             std::tie(b.subject_id, b.object_id, b.predicate);
    });
    out += image_to_canonical(sorted).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const SceneGraphDataset& dataset, const std::filesystem::path& path) {
  const std::string text = serialize_canonical(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::pair<std::string, std::size_t>> predicate_histogram(const SceneGraphDataset& dataset) {
  std::map<std::string, std::size_t> counts;
  for (const auto& image : dataset.images) {
    for (const auto& rel : image.relations) ++counts[rel.predicate];
  }
  std::vector<std::pair<std::string, std::size_t>> hist(counts.begin(), counts.end());
  std::stable_sort(hist.begin(), hist.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return hist;
}

std::string render_triplet(std::string_view subject_label, std::string_view predicate,
                           std::string_view object_label, std::string_view templ) {
  try {
    return fmt::format(fmt::runtime(templ), fmt::arg("subject", subject_label),
                       fmt::arg("predicate", predicate), fmt::arg("object", object_label));
  } catch (const fmt::format_error& e) {
    throw InputError("bad triplet template \"" + std::string(templ) + "\": " + e.what());
  }
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace relscore
