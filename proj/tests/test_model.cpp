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

#include <fstream>
#include <sstream>

#include "doctest.h"
#include "relscore/errors.hpp"
#include "relscore/model.hpp"
#include "support/fixtures.hpp"

using namespace relscore;
using relscore::testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kOneImage =
    R"({"format":"relscore-scene-graph","version":1,"name":"tiny"}
{"image_id":"a","width":100,"height":80,"file_path":"a.png","objects":[{"id":1,"label":"Person","bbox":[0,0,10,10]},{"id":2,"label":"dining_table","bbox":[5,5,20,20]}],"relations":[{"sub":1,"obj":2,"pred":"Sitting  At","prov":"groundtruth"}]}
)";

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("canonical load normalizes labels and predicates") {
    TempDir dir;
    write(dir / "d.jsonl", kOneImage);
    const auto ds = load_dataset(dir / "d.jsonl", DatasetFormat::kCanonical);
    CHECK(ds.name == "tiny");
    REQUIRE(ds.images.size() == 1);
    CHECK(ds.predicate_vocabulary() == std::set<std::string>{"sitting at"});
    CHECK(ds.images[0].object(2).class_label == "dining table");
    CHECK(ds.relation_count() == 1);
    CHECK(ds.object_count() == 2);
  }

  TEST_CASE("dangling relation id names the image and relation index") {
    TempDir dir;
    write(dir / "d.jsonl",
          R"({"image_id":"img7","width":50,"height":50,"objects":[{"id":1,"label":"a","bbox":[0,0,5,5]},{"id":2,"label":"b","bbox":[1,1,5,5]}],"relations":[{"sub":1,"obj":2,"pred":"on"},{"sub":1,"obj":99,"pred":"on"}]})"
          "\n");
    try {
      load_dataset(dir / "d.jsonl", DatasetFormat::kCanonical);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("img7") != std::string::npos);
      CHECK(msg.find("relations[1]") != std::string::npos);
      CHECK(msg.find("99") != std::string::npos);
    }
  }

  TEST_CASE("self relations and duplicate object ids are rejected") {
    SceneGraphDataset ds;
    ImageRecord im{"x", 10, 10, "", {{1, "a", {0, 0, 2, 2}, {}}, {2, "b", {1, 1, 2, 2}, {}}}, {}};
    im.relations.push_back({1, 1, "on", Provenance::kGroundtruth, {}});
    ds.images = {im};
    CHECK_THROWS_AS(canonicalize(ds), ValidationError);

    im.relations.clear();
    im.objects.push_back({1, "c", {0, 0, 1, 1}, {}});
    ds.images = {im};
    CHECK_THROWS_AS(canonicalize(ds), ValidationError);
  }

  TEST_CASE("small overhang is clamped, large overhang is rejected") {
    SceneGraphDataset ds;
    ds.images = {ImageRecord{"x", 10, 10, "", {{1, "a", {8, 8, 3.5, 3}, {}}, {2, "b", {0, 0, 2, 2}, {}}}, {}}};
    canonicalize(ds);
    CHECK(ds.images[0].object(1).box == BoundingBox{8, 8, 2, 2});

    ds.images = {ImageRecord{"x", 10, 10, "", {{1, "a", {8, 8, 6, 3}, {}}}, {}}};
    CHECK_THROWS_AS(canonicalize(ds), ValidationError);
  }

  TEST_CASE("duplicate triplets collapse and order is canonical") {
    SceneGraphDataset ds;
    ImageRecord im{"x", 10, 10, "", {{2, "b", {1, 1, 2, 2}, {}}, {1, "a", {0, 0, 2, 2}, {}}}, {}};
    im.relations = {{2, 1, "under", Provenance::kGroundtruth, {}},
                    {1, 2, "on", Provenance::kGroundtruth, {}},
                    {1, 2, "On", Provenance::kGroundtruth, {}}};
    ds.images = {im, ImageRecord{"a", 5, 5, "", {}, {}}};
    canonicalize(ds);
    CHECK(ds.images[0].image_id == "a");
    const auto& r = ds.images[1].relations;
    REQUIRE(r.size() == 2);
    CHECK(r[0].subject_id == 1);
    CHECK(r[1].predicate == "under");
    CHECK(ds.images[1].objects[0].object_id == 1);
  }

  TEST_CASE("save and reload round-trips, and repeated saves are byte-identical") {
    TempDir dir;
    SUBCASE("empty dataset") {
      SceneGraphDataset empty;
      empty.name = "empty";
      save_dataset(empty, dir / "e.jsonl");
      CHECK(load_dataset(dir / "e.jsonl", DatasetFormat::kCanonical) == empty);
    }
    SUBCASE("three images with scores and masks") {
      relscore::testing::SyntheticOptions opt;
      opt.images = 3;
      opt.write_images = false;
      auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 11);
      ds.images[0].objects[0].mask_ref = "pan.png#3";
      if (!ds.images[1].relations.empty()) {
        ds.images[1].relations[0].score = 0.125;
        ds.images[1].relations[0].provenance = Provenance::kPredicted;
      }
      save_dataset(ds, dir / "a.jsonl");
      save_dataset(ds, dir / "b.jsonl");
      CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
      CHECK(load_dataset(dir / "a.jsonl", DatasetFormat::kCanonical) == ds);
    }
  }

  TEST_CASE("streaming reader visits the same records as the batch loader") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 5;
    opt.write_images = false;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 3);
    save_dataset(ds, dir / "d.jsonl");
    std::vector<ImageRecord> seen;
    for_each_canonical_image(dir / "d.jsonl", [&](ImageRecord&& im) { seen.push_back(std::move(im)); });
    CHECK(seen == ds.images);
  }

  TEST_CASE("malformed input maps to parse and io errors") {
    TempDir dir;
    write(dir / "bad.jsonl", "{not json\n");
    CHECK_THROWS_AS(load_dataset(dir / "bad.jsonl", DatasetFormat::kCanonical), ParseError);
    CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl", DatasetFormat::kCanonical), IoError);
    write(dir / "nobox.jsonl", R"({"image_id":"a","width":5,"height":5,"objects":[{"id":1,"label":"a"}],"relations":[]})"
                               "\n");
    CHECK_THROWS_AS(load_dataset(dir / "nobox.jsonl", DatasetFormat::kCanonical), ParseError);
  }

  TEST_CASE("predicate histogram counts and orders") {
    SceneGraphDataset ds;
    ImageRecord im{"x", 10, 10, "", {{1, "a", {0, 0, 2, 2}, {}}, {2, "b", {1, 1, 2, 2}, {}}, {3, "c", {2, 2, 2, 2}, {}}}, {}};
    im.relations = {{1, 2, "on", {}, {}}, {2, 3, "on", {}, {}}, {3, 1, "on", {}, {}}, {1, 3, "under", {}, {}}};
    ds.images = {im};
    const auto h = predicate_histogram(ds);
    REQUIRE(h.size() == 2);
    CHECK(h[0] == std::pair<std::string, std::size_t>{"on", 3});
    CHECK(h[1] == std::pair<std::string, std::size_t>{"under", 1});
  }

  TEST_CASE("PSG loader reads XYXY boxes, predicate indices and split filters") {
    TempDir dir;
    write(dir / "psg.json", R"({
      "thing_classes": ["person", "dog"], "stuff_classes": ["grass"],
      "predicate_classes": ["on", "walking"],
      "test_image_ids": ["2"],
      "data": [
        {"image_id": "1", "width": 50, "height": 40, "file_name": "1.jpg", "pan_seg_file_name": "1.png",
         "segments_info": [{"id": 7}, {"id": 9}],
         "annotations": [{"category_id": 0, "bbox": [0, 0, 10, 20]}, {"category_id": 2, "bbox": [5, 5, 50, 40]}],
         "relations": [[0, 1, 0]]},
        {"image_id": "2", "width": 50, "height": 40, "file_name": "2.jpg",
         "annotations": [{"category_id": 0, "bbox": [0, 0, 10, 20]}, {"category_id": 1, "bbox": [1, 1, 4, 4]}],
         "relations": [[0, 1, 1]]}
      ]})");
    const auto all = load_dataset(dir / "psg.json", DatasetFormat::kPsgJson);
    REQUIRE(all.images.size() == 2);
    CHECK(all.images[0].object(0).box == BoundingBox{0, 0, 10, 20});
    CHECK(all.images[0].object(1).class_label == "grass");
    CHECK(all.images[0].object(1).mask_ref == std::optional<std::string>("1.png#9"));
    CHECK(all.images[0].relations[0].predicate == "on");

    LoadOptions test_only;
    test_only.psg_split = "test";
    const auto test = load_dataset(dir / "psg.json", DatasetFormat::kPsgJson, test_only);
    REQUIRE(test.images.size() == 1);
    CHECK(test.images[0].relations[0].predicate == "walking");
  }

  TEST_CASE("COCO boxes load objects without relations") {
    TempDir dir;
    write(dir / "coco.json", R"({
      "categories": [{"id": 18, "name": "dog"}],
      "images": [{"id": 42, "width": 64, "height": 48, "file_name": "42.jpg"}],
      "annotations": [{"id": 5, "image_id": 42, "category_id": 18, "bbox": [1, 2, 3, 4]}]})");
    const auto ds = load_dataset(dir / "coco.json", DatasetFormat::kCocoBoxes);
    REQUIRE(ds.images.size() == 1);
    CHECK(ds.images[0].image_id == "42");
    CHECK(ds.images[0].object(5).box == BoundingBox{1, 2, 3, 4});
    CHECK(ds.images[0].relations.empty());
  }

  TEST_CASE("triplet rendering follows the template") {
    CHECK(render_triplet("person", "riding", "horse") == "person riding horse");
    CHECK(render_triplet("a", "b", "c", "a photo of {subject} {predicate} {object}") == "a photo of a b c");
    CHECK_THROWS_AS(render_triplet("a", "b", "c", "{subj}"), InputError);
  }
}
