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
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "doctest.h"
#include "relscore/errors.hpp"
#include "relscore/geometry.hpp"
#include "relscore/pipeline.hpp"
#include "support/fixtures.hpp"

using namespace relscore;
using relscore::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ImageRecord overlapping_image(int n, int size = 200) {
  ImageRecord im{"dense", size, size, "", {}, {}};
  for (int i = 1; i <= n; ++i) im.objects.push_back({i, "thing", {double(i), double(i), 100, 100}, {}});
  return im;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("sampling indices are a seeded prefix of a permutation") {
    const auto a = sample_indices(100, 30, 4);
    CHECK(a == sample_indices(100, 30, 4));
    CHECK(a != sample_indices(100, 30, 5));
    std::set<std::size_t> unique(a.begin(), a.end());
    CHECK(unique.size() == 30);
    CHECK(*unique.rbegin() < 100);
    CHECK(sample_indices(5, 10, 1).size() == 5);
    CHECK(sample_indices(0, 3, 1).empty());
  }

  TEST_CASE("sampling is close to uniform") {
    std::vector<int> hits(10, 0);
    for (std::uint64_t s = 0; s < 4000; ++s) hits[sample_indices(10, 1, s)[0]]++;
    for (int h : hits) {
      CHECK(h > 300);
      CHECK(h < 500);
    }
  }

  TEST_CASE("subset membership and partitions") {
    ImageRecord im{"i", 1000, 800, "",
                   {{1, "a", {0, 0, 10, 10}, {}}, {2, "b", {510, 0, 10, 10}, {}}, {3, "c", {5, 5, 50, 50}, {}}}, {}};
    CHECK(subset_member(im, 1, 2, SubsetKind::kDistant, 0.2));
    CHECK_FALSE(subset_member(im, 1, 2, SubsetKind::kIntersecting, 0.2));
    CHECK(subset_member(im, 1, 3, SubsetKind::kIntersecting, 0.2));
    CHECK(subset_member(im, 1, 3, SubsetKind::kRatioLow, 0.2));
    CHECK_FALSE(subset_member(im, 1, 3, SubsetKind::kRatioHigh, 0.2));
    CHECK(subset_member(im, 1, 2, SubsetKind::kRatioHigh, 0.2));
  }

  TEST_CASE("build subset is reproducible and errors when nothing qualifies") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 40;
    opt.write_images = false;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 8);
    SubsetSpec spec{SubsetKind::kRatioLow, 0.2, 25, 7};
    const auto a = build_subset(ds, spec);
    CHECK(a.size() == 25);
    CHECK(a == build_subset(ds, spec));
    CHECK(std::is_sorted(a.begin(), a.end()));
    for (const auto& p : a) {
      const auto* im = ds.find_image(p.image_id);
      CHECK(size_ratio(im->object(p.subject_id).box, im->object(p.object_id).box) < 0.2);
    }
    write_pair_list(dir / "pairs.tsv", a);
    CHECK(read_pair_list(dir / "pairs.tsv") == a);

    SceneGraphDataset crowded;
    crowded.images = {overlapping_image(4)};
    crowded.images[0].relations = {{1, 2, "on", {}, {}}, {3, 4, "on", {}, {}}};
    CHECK_THROWS_AS(build_subset(crowded, SubsetSpec{SubsetKind::kDistant, 0.2, 10, 1}), EvaluationError);
    CHECK(build_subset(crowded, SubsetSpec{SubsetKind::kIntersecting, 0.2, 10, 1}).size() == 2);
  }

  TEST_CASE("malformed pair lists are parse errors") {
    TempDir dir;
    std::ofstream(dir / "bad.tsv") << "img\t1\n";
    CHECK_THROWS_AS(read_pair_list(dir / "bad.tsv"), ParseError);
    CHECK_THROWS_AS(read_pair_list(dir / "absent.tsv"), IoError);
  }

  TEST_CASE("candidate pairs") {
    ImageRecord apart{"x", 100, 100, "", {{1, "a", {0, 0, 10, 10}, {}}, {2, "b", {50, 50, 10, 10}, {}}}, {}};
    CHECK(select_candidate_pairs(apart, 0.5, 50, 1).empty());

    const auto three = select_candidate_pairs(overlapping_image(3), 1.0, SIZE_MAX, 1);
    CHECK(three.size() == 6);

    // 15 objects give 210 ordered intersecting pairs; half is 105, capped at 50.
    const auto dense = overlapping_image(15);
    const auto capped = select_candidate_pairs(dense, 0.5, 50, 3);
    CHECK(capped.size() == 50);
    CHECK(capped == select_candidate_pairs(dense, 0.5, 50, 3));
    CHECK(std::is_sorted(capped.begin(), capped.end()));
    std::set<std::pair<std::int64_t, std::int64_t>> unique(capped.begin(), capped.end());
    CHECK(unique.size() == capped.size());

    const auto unordered = select_candidate_pairs(overlapping_image(3), 1.0, SIZE_MAX, 1, PairCountMode::kUnordered);
    CHECK(unordered.size() == 6);
    const auto half = select_candidate_pairs(overlapping_image(3), 0.34, SIZE_MAX, 1, PairCountMode::kUnordered);
    CHECK(half.size() == 4);  // two unordered pairs, each asked in both directions
    CHECK_THROWS_AS(select_candidate_pairs(apart, 1.5, 5, 1), ValidationError);
  }

  TEST_CASE("postprocessing") {
    const auto block = default_blocklist();
    auto r = postprocess("is standing next to", block);
    CHECK(r.status == GenerationStatus::kRejectedVague);
    r = postprocess("holding", block);
    CHECK(r.status == GenerationStatus::kAccepted);
    CHECK(r.predicate == std::optional<std::string>("holding"));
    CHECK(postprocess("has a small light blue handbag attached to", block).status ==
          GenerationStatus::kRejectedLength);
    CHECK(postprocess("", block).status == GenerationStatus::kRejectedEmpty);
    CHECK(postprocess("  \n\n", block).status == GenerationStatus::kRejectedEmpty);
    CHECK(postprocess("No relation.", block).status == GenerationStatus::kRejectedEmpty);
    CHECK(postprocess("N/A", block).status == GenerationStatus::kRejectedEmpty);
    CHECK(postprocess("Object 1 is sitting on Object 2", block).predicate == std::optional<std::string>("sitting on"));
    CHECK(postprocess("\"Leaning against.\"\nBecause the ladder...", block).predicate ==
          std::optional<std::string>("leaning against"));
    CHECK(postprocess("hand-in-hand with", block).status == GenerationStatus::kRejectedVague);
    // Whole-phrase matching: "withdrawn from" does not contain the word "with".
    CHECK(postprocess("withdrawn from", block).status == GenerationStatus::kAccepted);
    CHECK(postprocess("standing beside", {}).status == GenerationStatus::kAccepted);
  }

  TEST_CASE("prompt instantiation and artifacts") {
    const auto text = instantiate_prompt(default_prompt_template(), "person", "horse");
    CHECK(text.find("Object 1 (a person)") != std::string::npos);
    CHECK(text.find("blue") != std::string::npos);
    CHECK_THROWS_AS(instantiate_prompt("{subject}", "a", "b"), InputError);

    TempDir dir;
    relscore::testing::write_noise_png(dir / "im.png", 64, 48, 1);
    ImageRecord im{"im", 64, 48, "im.png", {{1, "a", {4, 4, 20, 20}, {}}, {2, "b", {10, 10, 30, 30}, {}}}, {}};
    ImageStore store(dir.path());
    const auto a = build_prompt(store, im, 1, 2, std::nullopt, default_prompt_template());
    const auto b = build_prompt(store, im, 1, 2, std::nullopt, default_prompt_template());
    CHECK(a.digest() == b.digest());
    CHECK(a.image.bytes == b.image.bytes);
    const auto swapped = build_prompt(store, im, 2, 1, std::nullopt, default_prompt_template());
    CHECK(swapped.digest() != a.digest());
    const cv::Mat decoded = cv::imdecode(a.image.bytes, cv::IMREAD_COLOR);
    const auto rect = pixel_rect(a.crop.crop_box, 64, 48);
    CHECK(decoded.cols == rect.width);
    CHECK(decoded.rows == rect.height);
    CHECK_THROWS_AS(build_prompt(store, im, 1, 1, std::nullopt, default_prompt_template()), ValidationError);
  }

  TEST_CASE("marks tint the subject blue and the object red") {
    cv::Mat gray(20, 40, CV_8UC3, cv::Scalar(128, 128, 128));
    const auto out = render_marks(gray, {0, 0, 10, 10}, {30, 10, 10, 10}, std::nullopt, OverlaySpec{});
    const auto s = out.at<cv::Vec3b>(5, 5);    // BGR
    const auto o = out.at<cv::Vec3b>(15, 35);
    const auto bg = out.at<cv::Vec3b>(15, 15);
    CHECK(s[0] > s[2]);
    CHECK(o[2] > o[0]);
    CHECK(bg == cv::Vec3b(128, 128, 128));
  }

  TEST_CASE("ledger records round-trip") {
    GenerationRecord r;
    r.pair = {"img", 3, 4};
    r.backend = "mock";
    r.prompt_digest = "abc";
    r.raw_text = "Sitting \"on\"\n";
    r.predicate = "sitting on";
    r.status = GenerationStatus::kAccepted;
    CHECK(record_from_json_line(to_json_line(r)) == r);
    r.predicate.reset();
    r.status = GenerationStatus::kProviderError;
    r.error = "boom";
    CHECK(record_from_json_line(to_json_line(r)) == r);
    CHECK_THROWS_AS(record_from_json_line("{\"image_id\":"), ParseError);
  }

  TEST_CASE("generation is deterministic and respects the invariants") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 10;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 33);
    ImageStore store(dir.path());
    PipelineConfig cfg;
    cfg.seed = 5;

    MockProvider mock_a;
    GenerationOptions oa;
    oa.ledger_path = dir / "a.ledger";
    const auto a = generate_dataset(ds, mock_a, store, cfg, oa);
    save_dataset(a.dataset, dir / "a.jsonl");

    MockProvider mock_b;
    GenerationOptions ob;
    ob.ledger_path = dir / "b.ledger";
    const auto b = generate_dataset(ds, mock_b, store, cfg, ob);
    save_dataset(b.dataset, dir / "b.jsonl");

    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    CHECK(slurp(dir / "a.ledger") == slurp(dir / "b.ledger"));
    CHECK(a.attempted == a.ledger.size());
    CHECK(a.dataset.relation_count() > 0);

    for (const auto& im : a.dataset.images) {
      std::set<std::pair<std::int64_t, std::int64_t>> seen;
      for (const auto& rel : im.relations) {
        CHECK(seen.insert({rel.subject_id, rel.object_id}).second);
        CHECK(iou(im.object(rel.subject_id).box, im.object(rel.object_id).box) > 0.0);
        CHECK(rel.provenance == Provenance::kGenerated);
        CHECK_FALSE(rel.predicate.empty());
        std::istringstream words(rel.predicate);
        CHECK(std::distance(std::istream_iterator<std::string>(words), std::istream_iterator<std::string>()) <= 5);
        for (const auto& blocked : cfg.blocklist) {
          CHECK((" " + rel.predicate + " ").find(" " + blocked + " ") == std::string::npos);
        }
      }
    }
    std::map<std::string, int> attempts;
    for (const auto& r : a.ledger) attempts[r.pair.image_id]++;
    for (const auto& [id, n] : attempts) CHECK(n <= 50);
  }

  TEST_CASE("resume after an interruption matches an uninterrupted run") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 10;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 34);
    ImageStore store(dir.path());
    PipelineConfig cfg;

    MockProvider full_mock;
    GenerationOptions full;
    full.ledger_path = dir / "full.ledger";
    const auto reference = generate_dataset(ds, full_mock, store, cfg, full);

    MockProvider first_mock;
    GenerationOptions part;
    part.ledger_path = dir / "part.ledger";
    part.should_stop = [](std::size_t done) { return done == 5; };
    const auto first = generate_dataset(ds, first_mock, store, cfg, part);
    CHECK(first.interrupted);

    MockProvider second_mock;
    part.should_stop = nullptr;
    part.resume = true;
    const auto second = generate_dataset(ds, second_mock, store, cfg, part);
    CHECK_FALSE(second.interrupted);
    CHECK(second.reused == first.attempted);
    CHECK(second_mock.stats().generate_calls == reference.attempted - first.attempted);
    CHECK(slurp(dir / "part.ledger") == slurp(dir / "full.ledger"));
    CHECK(serialize_canonical(second.dataset) == serialize_canonical(reference.dataset));
  }

  TEST_CASE("a torn final ledger line is dropped on resume") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 4;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 35);
    ImageStore store(dir.path());
    PipelineConfig cfg;
    MockProvider mock;
    GenerationOptions go;
    go.ledger_path = dir / "l.ledger";
    generate_dataset(ds, mock, store, cfg, go);
    const auto complete = slurp(dir / "l.ledger");
    REQUIRE(complete.size() > 40);
    // Cut the last record in half.
    const auto last = complete.rfind('\n', complete.size() - 2);
    std::ofstream(dir / "l.ledger", std::ios::binary | std::ios::trunc)
        << complete.substr(0, last + 1 + (complete.size() - last) / 2);
    MockProvider again;
    go.resume = true;
    const auto resumed = generate_dataset(ds, again, store, cfg, go);
    CHECK(resumed.attempted == 1);
    CHECK(slurp(dir / "l.ledger") == complete);
  }

  TEST_CASE("provider failures are recorded and retried on resume") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 5;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 36);
    ImageStore store(dir.path());
    PipelineConfig cfg;
    MockProvider flaky;
    flaky.set_failure([](const std::string& digest) { return digest[0] < '8'; });
    GenerationOptions go;
    go.ledger_path = dir / "l.ledger";
    const auto first = generate_dataset(ds, flaky, store, cfg, go);
    std::size_t failed = 0;
    for (const auto& r : first.ledger) failed += r.status == GenerationStatus::kProviderError;
    REQUIRE(failed > 0);

    MockProvider healthy;
    go.resume = true;
    const auto second = generate_dataset(ds, healthy, store, cfg, go);
    CHECK(second.attempted == failed);
    CHECK(healthy.stats().generate_calls == failed);
  }

  TEST_CASE("dry run writes artifacts and calls nothing") {
    TempDir dir;
    relscore::testing::SyntheticOptions opt;
    opt.images = 3;
    const auto ds = relscore::testing::make_synthetic_dataset(dir.path(), opt, 37);
    ImageStore store(dir.path());
    MockProvider mock;
    GenerationOptions go;
    go.dry_run = true;
    go.artifact_dir = dir / "artifacts";
    const auto result = generate_dataset(ds, mock, store, PipelineConfig{}, go);
    CHECK(mock.stats().total() == 0);
    CHECK(result.prompts_built > 0);
    std::size_t pngs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "artifacts")) pngs += e.path().extension() == ".png";
    CHECK(pngs == result.prompts_built);
    std::ifstream log(dir / "artifacts" / "prompts.jsonl");
    std::size_t lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == result.prompts_built);
  }

  TEST_CASE("masks from a panoptic PNG drive the overlay") {
    TempDir dir;
    relscore::testing::write_noise_png(dir / "im.png", 40, 30, 2);
    cv::Mat pan(30, 40, CV_8UC3, cv::Scalar(0, 0, 0));
    // Segment 300 = R 44 + 256 * G 1 (BGR storage), segment 5 = R 5.
    cv::rectangle(pan, cv::Rect(0, 0, 10, 10), cv::Scalar(0, 1, 44), cv::FILLED);
    cv::rectangle(pan, cv::Rect(5, 5, 10, 10), cv::Scalar(0, 0, 5), cv::FILLED);
    cv::imwrite((dir / "pan.png").string(), pan);
    ImageRecord im{"im", 40, 30, "im.png",
                   {{1, "a", {0, 0, 10, 10}, std::string("pan.png#300")}, {2, "b", {5, 5, 10, 10}, std::string("pan.png#5")}},
                   {}};
    ImageStore store(dir.path());
    const auto m = store.load_mask("pan.png#300", im);
    CHECK(cv::countNonZero(m) == 100 - 25);
    CHECK(cv::countNonZero(store.load_mask("pan.png#5", im)) == 100);
    const auto masks = store.load_masks(im, 1, 2);
    REQUIRE(masks.has_value());
    CHECK_THROWS_AS(store.load_mask("missing.png#1", im), IoError);
  }

  TEST_CASE("image size mismatches are validation errors") {
    TempDir dir;
    relscore::testing::write_noise_png(dir / "im.png", 40, 30, 3);
    ImageRecord im{"im", 41, 30, "im.png", {}, {}};
    ImageStore store(dir.path());
    CHECK_THROWS_AS(store.load(im), ValidationError);
    im.file_path = "nope.png";
    CHECK_THROWS_AS(store.load(im), IoError);
  }
}
