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

#include "doctest.h"
#include "relscore/config.hpp"
#include "relscore/errors.hpp"
#include "relscore/report.hpp"
#include "support/fixtures.hpp"

using namespace relscore;
using relscore::testing::TempDir;

TEST_SUITE("config") {
  TEST_CASE("absent keys keep defaults") {
    TempDir dir;
    std::ofstream(dir / "c.json") << "{}";
    const auto c = load_tool_config(dir / "c.json");
    CHECK(c.metrics.alpha == 1e-5);
    CHECK(c.pipeline.pair_cap == 50);
    CHECK(config_digest(c) == config_digest(ToolConfig{}));
  }

  TEST_CASE("sections override fields and the blocklist path is relative to the file") {
    TempDir dir;
    std::filesystem::create_directories(dir / "lists");
    std::ofstream(dir / "lists" / "block.txt") << "# vague words\nNext To\n\nalongside\n";
    std::ofstream(dir / "c.json") << R"({
      "metrics": {"alpha": 0.001, "log_base": "2", "penalty_enabled": false},
      "pipeline": {"seed": 42, "pair_cap": null, "pair_count_mode": "unordered",
                   "blocklist_path": "lists/block.txt", "subject_color": [0, 255, 0],
                   "temperature": 0.5}
    })";
    const auto c = load_tool_config(dir / "c.json");
    CHECK(c.metrics.alpha == 0.001);
    CHECK(c.metrics.log_base == LogBase::kTwo);
    CHECK_FALSE(c.metrics.penalty_enabled);
    CHECK(c.pipeline.seed == 42);
    CHECK(c.pipeline.pair_cap == SIZE_MAX);
    CHECK(c.pipeline.count_mode == PairCountMode::kUnordered);
    CHECK(c.pipeline.blocklist == std::set<std::string>{"next to", "alongside"});
    CHECK(c.pipeline.overlay.subject_color == Rgba{0, 255, 0, 255});
    CHECK(c.pipeline.decode.temperature == 0.5);
    CHECK(config_digest(c) != config_digest(ToolConfig{}));
  }

  TEST_CASE("invalid configs are input errors") {
    TempDir dir;
    std::ofstream(dir / "a.json") << R"({"pipeline": {"subject_color": [255, 0, 0], "object_color": [255, 0, 0]}})";
    CHECK_THROWS_AS(load_tool_config(dir / "a.json"), InputError);
    std::ofstream(dir / "b.json") << "not json";
    CHECK_THROWS_AS(load_tool_config(dir / "b.json"), InputError);
    std::ofstream(dir / "c.json") << R"({"pipeline": {"pair_count_mode": "sideways"}})";
    CHECK_THROWS_AS(load_tool_config(dir / "c.json"), InputError);
    CHECK_THROWS_AS(load_tool_config(dir / "absent.json"), IoError);
  }

  TEST_CASE("timestamps honor SOURCE_DATE_EPOCH") {
    setenv("SOURCE_DATE_EPOCH", "0", 1);
    CHECK(utc_timestamp() == "1970-01-01T00:00:00Z");
    unsetenv("SOURCE_DATE_EPOCH");
    CHECK(utc_timestamp().size() == 20);
  }

  TEST_CASE("dataset stats cumulate shares") {
    SceneGraphDataset ds;
    ImageRecord im{"x", 10, 10, "", {{1, "a", {0, 0, 2, 2}, {}}, {2, "b", {1, 1, 2, 2}, {}}, {3, "c", {2, 2, 2, 2}, {}}}, {}};
    im.relations = {{1, 2, "on", {}, {}}, {2, 3, "on", {}, {}}, {3, 1, "on", {}, {}}, {1, 3, "under", {}, {}}};
    ds.images = {im, ImageRecord{"y", 4, 4, "", {}, {}}};
    const auto s = dataset_stats(ds);
    CHECK(s.images == 2);
    CHECK(s.triplets == 4);
    CHECK(s.predicates == 2);
    CHECK(s.mean_relations_per_image == 2.0);
    REQUIRE(s.cumulative_share.size() == 2);
    CHECK(s.cumulative_share[0] == doctest::Approx(0.75));
    CHECK(s.cumulative_share[1] == doctest::Approx(1.0));
  }
}
