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
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relscore/imaging.hpp"
#include "relscore/model.hpp"
#include "relscore/providers.hpp"

namespace relscore {

enum class LogBase { kNatural, kTwo, kTen };

std::string_view to_string(LogBase b);
LogBase log_base_from_string(std::string_view s);

struct MetricConfig {
  double alpha = 1e-5;
  double report_scale = 100.0;
  double region_match_iou = 0.5;
  bool penalty_enabled = true;
  double denominator_floor = 1.0;
  LogBase log_base = LogBase::kNatural;
  std::string triplet_template = "{subject} {predicate} {object}";
  /// Context added around the union box before scoring a region.
  double crop_expansion = 0.2;

  void validate() const;
};

struct ImageEvaluation {
  std::string image_id;
  int k = 0;
  int m = 0;
  std::int64_t p = 0;
  double mean_score = 0.0;
  double penalized_score = 0.0;
  bool skipped = false;
  std::string skip_reason;
};

struct CorpusScore {
  double value = 0.0;
  std::size_t images_used = 0;
  std::size_t images_skipped = 0;
};

struct RankingResult {
  PairKey pair_key;
  std::vector<std::pair<std::string, double>> candidate_scores;
  std::string groundtruth_predicate;
  std::size_t rank = 0;
  double theta = 0.0;
  /// Groundtruth strictly above every other candidate (vacuous for one candidate).
  bool strict_top = false;
};

/// max(cos(a, b), 0).
ProviderScore cosine_score(const EmbeddingVector& a, const EmbeddingVector& b);

/// Text-text similarity, max(cos, 0).
double sim_text(const EmbeddingVector& groundtruth, const EmbeddingVector& predicted);

/// Clamped cosine for embedding backends, the provider's own probability otherwise.
ProviderScore region_score(Provider& provider, const ImagePayload& crop, std::string_view triplet_text);

/// m (m - 1) / 2.
std::int64_t possible_pairs(int m);

/// max(log(p - k) + alpha, floor) when the penalty applies, else floor.
double penalty_denominator(std::int64_t p, int k, const MetricConfig& config);

ImageEvaluation image_relscore(std::string image_id, std::span<const ProviderScore> scores, int m,
                               const MetricConfig& config);

/// Mean penalized score over non-skipped images, times report_scale.
/// Throws EvaluationError when every image was skipped.
CorpusScore corpus_relscore(std::span<const ImageEvaluation> per_image, const MetricConfig& config);

/// Harmonic mean of the region score and SimText; 0 when both are 0.
double ref_relscore(double image_text_score, double sim_text);

/// rank = number of candidates scoring strictly higher than the groundtruth.
RankingResult rank_groundtruth(std::vector<std::pair<std::string, double>> pair_scores,
                               const std::string& groundtruth);

/// Memoizes embeddings per crop digest and phrase so each is requested once
/// per run. Safe for concurrent use.
class ScoringSession {
 public:
  explicit ScoringSession(Provider& provider) : provider_(provider) {}

  ProviderScore score(const ImagePayload& crop, const std::string& triplet_text);
  EmbeddingVector text_embedding(const std::string& phrase);
  Provider& provider() { return provider_; }

 private:
  EmbeddingVector image_embedding(const ImagePayload& crop);

  Provider& provider_;
  std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> images_;
  std::unordered_map<std::string, EmbeddingVector> texts_;
};

struct Confusion {
  std::string groundtruth_triplet;
  std::string confused_triplet;
  std::size_t count = 0;
};

struct AlignmentReport {
  double mean_theta = 0.0;      // x report_scale
  double precision = 0.0;       // x report_scale
  double mean_raw_score = 0.0;  // x report_scale, unpenalized
  std::optional<CorpusScore> penalized;
  std::size_t relations_scored = 0;
  std::size_t skipped_empty_candidates = 0;
  std::vector<Confusion> confusions;
  std::vector<RankingResult> rankings;
  std::vector<ImageEvaluation> per_image;
};

/// Candidate predicates per (subject label, object label): every predicate
/// annotated at least once for that label pair anywhere in the dataset.
std::map<std::pair<std::string, std::string>, std::vector<std::string>> candidate_predicates(
    const SceneGraphDataset& dataset);

AlignmentReport alignment_study(const SceneGraphDataset& dataset, Provider& backend, ImageStore& images,
                                const MetricConfig& config,
                                const std::optional<std::set<PairKey>>& subset = std::nullopt);

struct ScoredPrediction {
  PairKey predicted_pair;
  std::string predicate;
  bool admitted = false;
  std::optional<PairKey> matched_groundtruth;
  double region_score = 0.0;
  std::optional<double> sim_text;
  std::optional<double> ref_score;
  bool correct = false;
};

struct ScoreReport {
  CorpusScore relscore;
  std::optional<double> ref_relscore;  // x report_scale; absent when the backend has no text embeddings
  double precision = 0.0;              // x report_scale, over admitted predictions
  std::size_t predictions_total = 0;
  std::size_t admitted = 0;
  std::size_t unadmitted = 0;
  std::vector<ImageEvaluation> per_image;
  std::vector<ScoredPrediction> predictions;
};

/// Greedy one-to-one matching of predicted (subject, object) pairs to
/// groundtruth relation pairs, highest min(IoU_subject, IoU_object) first.
/// Returns predicted pair -> groundtruth pair.
std::map<std::pair<std::int64_t, std::int64_t>, std::pair<std::int64_t, std::int64_t>> match_pairs(
    const ImageRecord& predicted, const ImageRecord& groundtruth, double min_iou,
    const std::optional<std::set<PairKey>>& subset = std::nullopt);

ScoreReport score_predictions(const SceneGraphDataset& predictions, const SceneGraphDataset& groundtruth,
                              Provider& backend, ImageStore& images, const MetricConfig& config,
                              const std::optional<std::set<PairKey>>& subset = std::nullopt);

}  // namespace relscore
