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
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relscore/geometry.hpp"
#include "relscore/imaging.hpp"
#include "relscore/model.hpp"
#include "relscore/providers.hpp"

namespace relscore {

// ---------------------------------------------------------------------------
// Ablation subsets

enum class SubsetKind { kRatioLow, kRatioHigh, kIntersecting, kDistant };

std::string_view to_string(SubsetKind k);
SubsetKind subset_kind_from_string(std::string_view s);

struct SubsetSpec {
  SubsetKind kind = SubsetKind::kRatioLow;
  double threshold = 0.2;
  std::size_t sample_size = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Whether the (subject, object) pair of `image` belongs to a subset kind.
bool subset_member(const ImageRecord& image, std::int64_t subject_id, std::int64_t object_id, SubsetKind kind,
                   double threshold);

/// Every distinct annotated (subject, object) pair satisfying the kind, sorted.
std::vector<PairKey> subset_pool(const SceneGraphDataset& dataset, SubsetKind kind, double threshold);

/// Seeded uniform sample of the pool without replacement, sorted. Returns the
/// whole pool (with a warning) when it is smaller than the sample size; throws
/// EvaluationError when nothing qualifies.
std::vector<PairKey> build_subset(const SceneGraphDataset& dataset, const SubsetSpec& spec);

/// Tab-separated "image_id subject_id object_id" lines.
void write_pair_list(const std::filesystem::path& path, const std::vector<PairKey>& pairs);
std::vector<PairKey> read_pair_list(const std::filesystem::path& path);

/// First k positions of a seeded Fisher-Yates shuffle of [0, n). Uses only raw
/// mt19937_64 output so results are identical across standard libraries.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Set-of-Mark prompts

inline constexpr std::string_view kSubjectAlias = "Object 1";
inline constexpr std::string_view kObjectAlias = "Object 2";

std::string default_prompt_template();

/// Placeholders: {subject_alias} {object_alias} {subject_label} {object_label}
/// Colors are named in the template text itself.
std::string instantiate_prompt(std::string_view templ, std::string_view subject_label,
                               std::string_view object_label);

struct PromptArtifact {
  RegionCropSpec crop;
  OverlaySpec overlay;
  std::string prompt_text;
  std::string subject_alias{kSubjectAlias};
  std::string object_alias{kObjectAlias};
  /// The marked, cropped image as sent to the model.
  ImagePayload image;

  /// SHA-256 over the prompt text and the image digest.
  std::string digest() const;
};

PromptArtifact build_prompt(ImageStore& store, const ImageRecord& image, std::int64_t subject_id,
                            std::int64_t object_id, const std::optional<MaskPair>& masks, std::string_view templ,
                            const OverlaySpec& overlay = {}, double expansion = 0.2);

// ---------------------------------------------------------------------------
// Candidate pairs and post-filtering

enum class PairCountMode { kOrdered, kUnordered };

/// Intersecting pairs in both directions, a seeded ceil(fraction * count)
/// sample, truncated to `cap`, sorted.
std::vector<std::pair<std::int64_t, std::int64_t>> select_candidate_pairs(
    const ImageRecord& image, double sampling_fraction, std::size_t cap, std::uint64_t seed,
    PairCountMode mode = PairCountMode::kOrdered);

enum class GenerationStatus { kAccepted, kRejectedLength, kRejectedVague, kRejectedEmpty, kProviderError };

std::string_view to_string(GenerationStatus s);
GenerationStatus generation_status_from_string(std::string_view s);

struct PostprocessResult {
  GenerationStatus status = GenerationStatus::kRejectedEmpty;
  std::optional<std::string> predicate;
};

std::set<std::string> default_blocklist();
std::set<std::string> default_no_relation_phrases();

/// Normalizes raw model text into a predicate and applies the empty, length
/// and vague-phrase filters, in that order.
PostprocessResult postprocess(std::string_view raw_text, const std::set<std::string>& blocklist,
                              const std::set<std::string>& no_relation_phrases = default_no_relation_phrases(),
                              std::size_t max_words = 5);

// ---------------------------------------------------------------------------
// Generation

struct PipelineConfig {
  std::uint64_t seed = 0;
  double sampling_fraction = 0.5;
  std::size_t pair_cap = 50;
  PairCountMode count_mode = PairCountMode::kOrdered;
  double expansion = 0.2;
  std::set<std::string> blocklist = default_blocklist();
  std::set<std::string> no_relation_phrases = default_no_relation_phrases();
  std::string prompt_template = default_prompt_template();
  OverlaySpec overlay;
  DecodeParams decode;
  std::size_t max_words = 5;
  bool use_masks = true;

  void validate() const;
};

struct GenerationRecord {
  PairKey pair;
  std::string backend;
  std::string prompt_digest;
  std::string prompt_artifact_ref;
  std::string raw_text;
  std::optional<std::string> predicate;
  GenerationStatus status = GenerationStatus::kRejectedEmpty;
  std::string error;

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

std::string to_json_line(const GenerationRecord& record);
GenerationRecord record_from_json_line(std::string_view line);

struct GenerationOptions {
  std::filesystem::path ledger_path;
  bool resume = false;
  bool dry_run = false;
  /// Dry runs write one PNG and one prompt line per pair here.
  std::optional<std::filesystem::path> artifact_dir;
  /// Polled after each image with the number of images finished; returning
  /// true stops the run as if interrupted.
  std::function<bool(std::size_t)> should_stop;
};

struct GenerationResult {
  SceneGraphDataset dataset;
  std::vector<GenerationRecord> ledger;
  std::size_t reused = 0;
  std::size_t attempted = 0;
  std::size_t prompts_built = 0;
  bool interrupted = false;
};

/// Runs select_candidate_pairs -> build_prompt -> generate_relation ->
/// postprocess over every image. Accepted predicates become generated
/// relations; the input relations are not carried over. Provider failures are
/// recorded and retried on resume; ledger I/O failures abort.
GenerationResult generate_dataset(const SceneGraphDataset& images, Provider& vlm, ImageStore& store,
                                  const PipelineConfig& config, const GenerationOptions& options);

}  // namespace relscore
