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

#include "relscore/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "relscore/errors.hpp"
#include "relscore/geometry.hpp"
#include "relscore/parallel.hpp"

namespace relscore {

std::string_view to_string(LogBase b) {
  switch (b) {
    case LogBase::kNatural: return "e";
    case LogBase::kTwo: return "2";
    case LogBase::kTen: return "10";
  }
  return "e";
}

LogBase log_base_from_string(std::string_view s) {
  if (s == "e" || s == "natural" || s == "ln") return LogBase::kNatural;
  if (s == "2") return LogBase::kTwo;
  if (s == "10") return LogBase::kTen;
  throw InputError("unknown log base \"" + std::string(s) + "\"");
}

void MetricConfig::validate() const {
  if (!(alpha > 0.0)) throw ValidationError("metrics.alpha must be > 0");
  if (!(region_match_iou > 0.0 && region_match_iou <= 1.0)) {
    throw ValidationError("metrics.region_match_iou must be in (0, 1]");
  }
  if (!(denominator_floor > 0.0)) throw ValidationError("metrics.denominator_floor must be > 0");
  if (!(report_scale > 0.0)) throw ValidationError("metrics.report_scale must be > 0");
  if (crop_expansion < 0.0) throw ValidationError("metrics.crop_expansion must be >= 0");
  render_triplet("s", "p", "o", triplet_template);
}

ProviderScore cosine_score(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension() || a.dimension() == 0) {
    throw BackendError("dimension_mismatch",
                       fmt::format("embedding dimensions {} and {} differ", a.dimension(), b.dimension()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  const double na = a.normalized ? 1.0 : a.norm();
  const double nb = b.normalized ? 1.0 : b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return {0.0, ScoreMethod::kCosineClamped};
  // Float rounding can push a unit-vector dot product a hair above 1.
  const double cos = std::clamp(dot / (na * nb), -1.0, 1.0);
  return {std::max(cos, 0.0), ScoreMethod::kCosineClamped};
}

double sim_text(const EmbeddingVector& groundtruth, const EmbeddingVector& predicted) {
  return cosine_score(groundtruth, predicted).value;
}

ProviderScore region_score(Provider& provider, const ImagePayload& crop, std::string_view triplet_text) {
  if (provider.method() == ScoreMethod::kCosineClamped) {
    return cosine_score(provider.embed_image(crop), provider.embed_text(triplet_text));
  }
  return provider.pair_score(crop, triplet_text);
}

std::int64_t possible_pairs(int m) {
  if (m < 2) return 0;
  return static_cast<std::int64_t>(m) * (m - 1) / 2;
}

double penalty_denominator(std::int64_t p, int k, const MetricConfig& config) {
  const std::int64_t remaining = p - k;
  if (!config.penalty_enabled || remaining < 1) return config.denominator_floor;
  double log_value = std::log(static_cast<double>(remaining));
  if (config.log_base == LogBase::kTwo) log_value /= std::log(2.0);
  if (config.log_base == LogBase::kTen) log_value /= std::log(10.0);
  return std::max(log_value + config.alpha, config.denominator_floor);
}

ImageEvaluation image_relscore(std::string image_id, std::span<const ProviderScore> scores, int m,
                               const MetricConfig& config) {
  ImageEvaluation eval;
  eval.image_id = std::move(image_id);
  eval.k = static_cast<int>(scores.size());
  eval.m = m;
  eval.p = possible_pairs(m);
  if (eval.k == 0) {
    eval.skipped = true;
    eval.skip_reason = "no scored relations";
    return eval;
  }
  if (m < 2) {
    eval.skipped = true;
    eval.skip_reason = "fewer than 2 objects";
    return eval;
  }
  double sum = 0.0;
  for (const auto& s : scores) sum += s.value;
  eval.mean_score = sum / eval.k;
  eval.penalized_score = eval.mean_score / penalty_denominator(eval.p, eval.k, config);
  return eval;
}

CorpusScore corpus_relscore(std::span<const ImageEvaluation> per_image, const MetricConfig& config) {
  CorpusScore out;
  double sum = 0.0;
  for (const auto& e : per_image) {
    if (e.skipped) {
      ++out.images_skipped;
      continue;
    }
    sum += e.penalized_score;
    ++out.images_used;
  }
  if (out.images_used == 0) {
    throw EvaluationError(fmt::format("all {} images were skipped; nothing to average", per_image.size()));
  }
  out.value = config.report_scale * sum / static_cast<double>(out.images_used);
  return out;
}

double ref_relscore(double image_text_score, double sim) {
  const double denom = image_text_score + sim;
  if (denom <= 0.0) return 0.0;
  return 2.0 * image_text_score * sim / denom;
}

RankingResult rank_groundtruth(std::vector<std::pair<std::string, double>> pair_scores,
                               const std::string& groundtruth) {
  const auto gt = std::find_if(pair_scores.begin(), pair_scores.end(),
                               [&](const auto& c) { return c.first == groundtruth; });
  if (gt == pair_scores.end()) {
    throw ValidationError("groundtruth predicate \"" + groundtruth + "\" is not among the candidates");
  }
  const double gt_score = gt->second;
  RankingResult result;
  result.groundtruth_predicate = groundtruth;
  std::size_t ties = 0;
  for (const auto& [pred, score] : pair_scores) {
    if (score > gt_score) ++result.rank;
    if (score == gt_score && pred != groundtruth) ++ties;
  }
  result.theta = 1.0 - static_cast<double>(result.rank) / static_cast<double>(pair_scores.size());
  result.strict_top = result.rank == 0 && ties == 0;
  result.candidate_scores = std::move(pair_scores);
  return result;
}

// ---------------------------------------------------------------------------

EmbeddingVector ScoringSession::image_embedding(const ImagePayload& crop) {
  {
    std::lock_guard lock(mu_);
    if (auto it = images_.find(crop.digest); it != images_.end()) return it->second;
  }
  auto v = provider_.embed_image(crop);
  std::lock_guard lock(mu_);
  return images_.emplace(crop.digest, std::move(v)).first->second;
}

EmbeddingVector ScoringSession::text_embedding(const std::string& phrase) {
  {
    std::lock_guard lock(mu_);
    if (auto it = texts_.find(phrase); it != texts_.end()) return it->second;
  }
  auto v = provider_.embed_text(phrase);
  std::lock_guard lock(mu_);
  return texts_.emplace(phrase, std::move(v)).first->second;
}

ProviderScore ScoringSession::score(const ImagePayload& crop, const std::string& triplet_text) {
  if (provider_.method() == ScoreMethod::kCosineClamped) {
    return cosine_score(image_embedding(crop), text_embedding(triplet_text));
  }
  return provider_.pair_score(crop, triplet_text);
}

// ---------------------------------------------------------------------------

std::map<std::pair<std::string, std::string>, std::vector<std::string>> candidate_predicates(
    const SceneGraphDataset& dataset) {
  std::map<std::pair<std::string, std::string>, std::set<std::string>> sets;
  for (const auto& image : dataset.images) {
    for (const auto& rel : image.relations) {
      sets[{image.object(rel.subject_id).class_label, image.object(rel.object_id).class_label}].insert(
          rel.predicate);
    }
  }
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> out;
  for (auto& [key, preds] : sets) out[key] = std::vector<std::string>(preds.begin(), preds.end());
  return out;
}

namespace {

struct RelationRef {
  std::size_t image_index;
  std::size_t relation_index;
};

}  // namespace

AlignmentReport alignment_study(const SceneGraphDataset& dataset, Provider& backend, ImageStore& images,
                                const MetricConfig& config, const std::optional<std::set<PairKey>>& subset) {
  config.validate();
  const auto candidates = candidate_predicates(dataset);

  std::vector<RelationRef> work;
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    const auto& image = dataset.images[i];
    for (std::size_t r = 0; r < image.relations.size(); ++r) {
      const auto& rel = image.relations[r];
      if (subset && !subset->contains(PairKey{image.image_id, rel.subject_id, rel.object_id})) continue;
      work.push_back({i, r});
    }
  }
  if (work.empty()) throw EvaluationError("alignment study: dataset has no groundtruth relations to rank");

  ScoringSession session(backend);
  std::vector<std::optional<RankingResult>> results(work.size());
  std::vector<double> gt_scores(work.size(), 0.0);

  parallel_for(work.size(), backend.max_in_flight(), [&](std::size_t w) {
    const auto& image = dataset.images[work[w].image_index];
    const auto& rel = image.relations[work[w].relation_index];
    const auto& subject_label = image.object(rel.subject_id).class_label;
    const auto& object_label = image.object(rel.object_id).class_label;
    const auto it = candidates.find({subject_label, object_label});
    if (it == candidates.end() || it->second.empty()) return;

    const auto crop = crop_region(images, image, make_region_crop(image, rel.subject_id, rel.object_id,
                                                                  config.crop_expansion));
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(it->second.size());
    for (const auto& pred : it->second) {
      const auto text = render_triplet(subject_label, pred, object_label, config.triplet_template);
      scored.emplace_back(pred, session.score(crop, text).value);
    }
    auto ranking = rank_groundtruth(std::move(scored), rel.predicate);
    ranking.pair_key = PairKey{image.image_id, rel.subject_id, rel.object_id};
    for (const auto& [pred, score] : ranking.candidate_scores) {
      if (pred == rel.predicate) gt_scores[w] = score;
    }
    results[w] = std::move(ranking);
  });

  AlignmentReport report;
  std::map<std::pair<std::string, std::string>, std::size_t> confusion_counts;
  double theta_sum = 0.0;
  double raw_sum = 0.0;
  std::size_t hits = 0;
  std::map<std::size_t, std::vector<ProviderScore>> per_image_scores;
  for (std::size_t w = 0; w < work.size(); ++w) {
    if (!results[w]) {
      ++report.skipped_empty_candidates;
      continue;
    }
    const auto& ranking = *results[w];
    const auto& image = dataset.images[work[w].image_index];
    const auto& rel = image.relations[work[w].relation_index];
    theta_sum += ranking.theta;
    raw_sum += gt_scores[w];
    if (ranking.strict_top) ++hits;
    per_image_scores[work[w].image_index].push_back({gt_scores[w], backend.method()});

    if (ranking.rank > 0) {
      // Highest-scoring other predicate; ties resolved lexicographically.
      const std::pair<std::string, double>* best = nullptr;
      for (const auto& c : ranking.candidate_scores) {
        if (c.first == rel.predicate) continue;
        if (!best || c.second > best->second || (c.second == best->second && c.first < best->first)) best = &c;
      }
      const auto& subject_label = image.object(rel.subject_id).class_label;
      const auto& object_label = image.object(rel.object_id).class_label;
      ++confusion_counts[{render_triplet(subject_label, rel.predicate, object_label, config.triplet_template),
                          render_triplet(subject_label, best->first, object_label, config.triplet_template)}];
    }
    report.rankings.push_back(ranking);
  }

  report.relations_scored = report.rankings.size();
  if (report.relations_scored == 0) throw EvaluationError("alignment study: no relation had candidates");
  const double n = static_cast<double>(report.relations_scored);
  report.mean_theta = config.report_scale * theta_sum / n;
  report.precision = config.report_scale * static_cast<double>(hits) / n;
  report.mean_raw_score = config.report_scale * raw_sum / n;

  for (const auto& [image_index, scores] : per_image_scores) {
    const auto& image = dataset.images[image_index];
    report.per_image.push_back(
        image_relscore(image.image_id, scores, static_cast<int>(image.objects.size()), config));
  }
  try {
    report.penalized = corpus_relscore(report.per_image, config);
  } catch (const EvaluationError&) {
    report.penalized.reset();
  }

  for (const auto& [key, count] : confusion_counts) report.confusions.push_back({key.first, key.second, count});
  std::stable_sort(report.confusions.begin(), report.confusions.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  return report;
}

// ---------------------------------------------------------------------------

std::map<std::pair<std::int64_t, std::int64_t>, std::pair<std::int64_t, std::int64_t>> match_pairs(
    const ImageRecord& predicted, const ImageRecord& groundtruth, double min_iou,
    const std::optional<std::set<PairKey>>& subset) {
  std::set<std::pair<std::int64_t, std::int64_t>> pred_pairs;
  for (const auto& rel : predicted.relations) pred_pairs.emplace(rel.subject_id, rel.object_id);
  std::set<std::pair<std::int64_t, std::int64_t>> gt_pairs;
  for (const auto& rel : groundtruth.relations) {
    if (subset && !subset->contains(PairKey{groundtruth.image_id, rel.subject_id, rel.object_id})) continue;
    gt_pairs.emplace(rel.subject_id, rel.object_id);
  }

  struct Candidate {
    double quality;
    std::pair<std::int64_t, std::int64_t> pred;
    std::pair<std::int64_t, std::int64_t> gt;
  };
  std::vector<Candidate> candidates;
  for (const auto& pp : pred_pairs) {
    const auto& ps = predicted.object(pp.first).box;
    const auto& po = predicted.object(pp.second).box;
    for (const auto& gp : gt_pairs) {
      const double is = iou(ps, groundtruth.object(gp.first).box);
      const double io = iou(po, groundtruth.object(gp.second).box);
      if (is >= min_iou && io >= min_iou) candidates.push_back({std::min(is, io), pp, gp});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.quality != b.quality) return a.quality > b.quality;
    return std::tie(a.pred, a.gt) < std::tie(b.pred, b.gt);
  });

  std::map<std::pair<std::int64_t, std::int64_t>, std::pair<std::int64_t, std::int64_t>> matched;
  std::set<std::pair<std::int64_t, std::int64_t>> used_gt;
  for (const auto& c : candidates) {
    if (matched.contains(c.pred) || used_gt.contains(c.gt)) continue;
    matched.emplace(c.pred, c.gt);
    used_gt.insert(c.gt);
  }
  return matched;
}

namespace {

struct PredictionRef {
  std::size_t image_index;  // into groundtruth.images
  const ImageRecord* predicted;
  std::size_t relation_index;
  std::optional<std::pair<std::int64_t, std::int64_t>> gt_pair;
};

void check_same_images(const SceneGraphDataset& predictions, const SceneGraphDataset& groundtruth) {
  std::set<std::string> pred_ids;
  std::set<std::string> gt_ids;
  for (const auto& im : predictions.images) pred_ids.insert(im.image_id);
  for (const auto& im : groundtruth.images) gt_ids.insert(im.image_id);
  if (pred_ids == gt_ids) return;
  std::vector<std::string> only_pred;
  std::vector<std::string> only_gt;
  std::set_difference(pred_ids.begin(), pred_ids.end(), gt_ids.begin(), gt_ids.end(), std::back_inserter(only_pred));
  std::set_difference(gt_ids.begin(), gt_ids.end(), pred_ids.begin(), pred_ids.end(), std::back_inserter(only_gt));
  const auto head = [](const std::vector<std::string>& v) {
    std::vector<std::string> first(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(v.size(), 5)));
    return fmt::format("{}", fmt::join(first, ", "));
  };
  throw ValidationError(fmt::format("image-id mismatch: {} only in predictions [{}], {} only in groundtruth [{}]",
                                    only_pred.size(), head(only_pred), only_gt.size(), head(only_gt)));
}

}  // namespace

ScoreReport score_predictions(const SceneGraphDataset& predictions, const SceneGraphDataset& groundtruth,
                              Provider& backend, ImageStore& images, const MetricConfig& config,
                              const std::optional<std::set<PairKey>>& subset) {
  config.validate();
  check_same_images(predictions, groundtruth);

  std::vector<PredictionRef> work;
  std::vector<std::size_t> considered_images;
  for (std::size_t i = 0; i < groundtruth.images.size(); ++i) {
    const auto& gt = groundtruth.images[i];
    if (subset) {
      const auto lo = subset->lower_bound(PairKey{gt.image_id, INT64_MIN, INT64_MIN});
      if (lo == subset->end() || lo->image_id != gt.image_id) continue;
    }
    considered_images.push_back(i);
    const auto* pred = predictions.find_image(gt.image_id);
    const auto matched = match_pairs(*pred, gt, config.region_match_iou, subset);
    for (std::size_t r = 0; r < pred->relations.size(); ++r) {
      const auto& rel = pred->relations[r];
      PredictionRef ref{i, pred, r, std::nullopt};
      if (auto it = matched.find({rel.subject_id, rel.object_id}); it != matched.end()) ref.gt_pair = it->second;
      work.push_back(ref);
    }
  }

  ScoringSession session(backend);
  std::vector<ScoredPrediction> scored(work.size());
  std::atomic<bool> text_supported{true};

  parallel_for(work.size(), backend.max_in_flight(), [&](std::size_t w) {
    const auto& ref = work[w];
    const auto& pred_image = *ref.predicted;
    const auto& gt_image = groundtruth.images[ref.image_index];
    const auto& rel = pred_image.relations[ref.relation_index];
    auto& out = scored[w];
    out.predicted_pair = PairKey{pred_image.image_id, rel.subject_id, rel.object_id};
    out.predicate = rel.predicate;
    if (!ref.gt_pair) return;
    out.admitted = true;
    out.matched_groundtruth = PairKey{gt_image.image_id, ref.gt_pair->first, ref.gt_pair->second};

    const auto& subject_label = pred_image.object(rel.subject_id).class_label;
    const auto& object_label = pred_image.object(rel.object_id).class_label;
    const auto text = render_triplet(subject_label, rel.predicate, object_label, config.triplet_template);
    const auto crop = crop_region(images, pred_image,
                                  make_region_crop(pred_image, rel.subject_id, rel.object_id, config.crop_expansion));
    out.region_score = session.score(crop, text).value;

    const auto& gt_subject = gt_image.object(ref.gt_pair->first).class_label;
    const auto& gt_object = gt_image.object(ref.gt_pair->second).class_label;
    std::optional<double> best_sim;
    for (const auto& gt_rel : gt_image.relations) {
      if (gt_rel.subject_id != ref.gt_pair->first || gt_rel.object_id != ref.gt_pair->second) continue;
      if (gt_rel.predicate == rel.predicate) out.correct = true;
      if (!text_supported) continue;
      try {
        const auto gt_text = render_triplet(gt_subject, gt_rel.predicate, gt_object, config.triplet_template);
        const double sim = sim_text(session.text_embedding(gt_text), session.text_embedding(text));
        best_sim = std::max(best_sim.value_or(0.0), sim);
      } catch (const UnsupportedBackendError&) {
        text_supported = false;
      }
    }
    if (best_sim) {
      out.sim_text = best_sim;
      out.ref_score = ref_relscore(out.region_score, *best_sim);
    }
  });

  ScoreReport report;
  report.predictions_total = scored.size();
  std::size_t correct = 0;
  std::map<std::size_t, std::vector<ProviderScore>> per_image_scores;
  std::map<std::size_t, std::vector<double>> per_image_refs;
  for (std::size_t w = 0; w < work.size(); ++w) {
    const auto& s = scored[w];
    if (!s.admitted) {
      ++report.unadmitted;
      continue;
    }
    ++report.admitted;
    if (s.correct) ++correct;
    per_image_scores[work[w].image_index].push_back({s.region_score, backend.method()});
    if (s.ref_score) per_image_refs[work[w].image_index].push_back(*s.ref_score);
  }
  report.predictions = std::move(scored);

  for (const auto i : considered_images) {
    const auto& gt = groundtruth.images[i];
    const auto it = per_image_scores.find(i);
    const std::vector<ProviderScore> empty;
    report.per_image.push_back(image_relscore(gt.image_id, it == per_image_scores.end() ? empty : it->second,
                                              static_cast<int>(gt.objects.size()), config));
  }
  report.relscore = corpus_relscore(report.per_image, config);
  report.precision =
      report.admitted == 0 ? 0.0 : config.report_scale * static_cast<double>(correct) / static_cast<double>(report.admitted);

  if (text_supported) {
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < considered_images.size(); ++j) {
      if (report.per_image[j].skipped) continue;
      const auto it = per_image_refs.find(considered_images[j]);
      if (it == per_image_refs.end() || it->second.empty()) continue;
      sum += std::accumulate(it->second.begin(), it->second.end(), 0.0) / static_cast<double>(it->second.size());
      ++used;
    }
    if (used > 0) report.ref_relscore = config.report_scale * sum / static_cast<double>(used);
  }
  return report;
}

}  // namespace relscore
