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

#include "relscore/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include <opencv2/imgcodecs.hpp>

#include "json.hpp"
#include "relscore/digest.hpp"
#include "relscore/errors.hpp"
#include "relscore/parallel.hpp"

namespace relscore {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Subsets

std::string_view to_string(SubsetKind k) {
  switch (k) {
    case SubsetKind::kRatioLow: return "ratio_low";
    case SubsetKind::kRatioHigh: return "ratio_high";
    case SubsetKind::kIntersecting: return "intersecting";
    case SubsetKind::kDistant: return "distant";
  }
  return "ratio_low";
}

SubsetKind subset_kind_from_string(std::string_view s) {
  if (s == "ratio_low") return SubsetKind::kRatioLow;
  if (s == "ratio_high") return SubsetKind::kRatioHigh;
  if (s == "intersecting") return SubsetKind::kIntersecting;
  if (s == "distant") return SubsetKind::kDistant;
  throw InputError("unknown subset kind \"" + std::string(s) + "\"");
}

void SubsetSpec::validate() const {
  if (sample_size == 0) throw ValidationError("subset sample_size must be > 0");
  if (!(threshold > 0.0)) throw ValidationError("subset threshold must be > 0");
}

bool subset_member(const ImageRecord& image, std::int64_t subject_id, std::int64_t object_id, SubsetKind kind,
                   double threshold) {
  const auto& a = image.object(subject_id).box;
  const auto& b = image.object(object_id).box;
  switch (kind) {
    case SubsetKind::kRatioLow: return size_ratio(a, b) < threshold;
    case SubsetKind::kRatioHigh: return size_ratio(a, b) >= threshold;
    case SubsetKind::kIntersecting: return iou(a, b) > 0.0;
    case SubsetKind::kDistant:
      return iou(a, b) == 0.0 && separation(a, b, image.width, image.height) >= threshold;
  }
  return false;
}

std::vector<PairKey> subset_pool(const SceneGraphDataset& dataset, SubsetKind kind, double threshold) {
  std::set<PairKey> pool;
  for (const auto& image : dataset.images) {
    for (const auto& rel : image.relations) {
      if (subset_member(image, rel.subject_id, rel.object_id, kind, threshold)) {
        pool.insert(PairKey{image.image_id, rel.subject_id, rel.object_id});
      }
    }
  }
  return {pool.begin(), pool.end()};
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  k = std::min(k, n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    // Unbiased draw from [0, n - i) by rejection.
    const std::uint64_t range = n - i;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(idx[i], idx[i + static_cast<std::size_t>(r % range)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<PairKey> build_subset(const SceneGraphDataset& dataset, const SubsetSpec& spec) {
  spec.validate();
  const auto pool = subset_pool(dataset, spec.kind, spec.threshold);
  if (pool.empty()) {
    throw EvaluationError(fmt::format("no pair qualifies for subset {} (threshold {})", to_string(spec.kind),
                                      spec.threshold));
  }
  if (pool.size() < spec.sample_size) {
    spdlog::warn("subset {}: only {} qualifying pairs, fewer than the requested {}; returning all",
                 to_string(spec.kind), pool.size(), spec.sample_size);
  }
  std::vector<PairKey> out;
  for (const auto i : sample_indices(pool.size(), spec.sample_size, spec.seed)) out.push_back(pool[i]);
  std::sort(out.begin(), out.end());
  return out;
}

void write_pair_list(const std::filesystem::path& path, const std::vector<PairKey>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << p.image_id << '\t' << p.subject_id << '\t' << p.object_id << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<PairKey> read_pair_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PairKey> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    PairKey key;
    if (!std::getline(fields, key.image_id, '\t') || !(fields >> key.subject_id >> key.object_id)) {
      throw ParseError(fmt::format("{}:{}: expected image_id<TAB>subject_id<TAB>object_id", path.string(), line_no));
    }
    pairs.push_back(std::move(key));
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Prompts

std::string default_prompt_template() {
  return "{subject_alias} (a {subject_label}) is highlighted in blue and {object_alias} (a {object_label}) is "
         "highlighted in red. What is the most specific relation from {subject_alias} to {object_alias}? "
         "Answer with the predicate phrase only, in five words or fewer. Avoid vague spatial phrases such as "
         "\"next to\" or \"near\".";
}

std::string instantiate_prompt(std::string_view templ, std::string_view subject_label,
                               std::string_view object_label) {
  try {
    return fmt::format(fmt::runtime(templ), fmt::arg("subject_alias", kSubjectAlias),
                       fmt::arg("object_alias", kObjectAlias), fmt::arg("subject_label", subject_label),
                       fmt::arg("object_label", object_label));
  } catch (const fmt::format_error& e) {
    throw InputError(std::string("bad prompt template: ") + e.what());
  }
}

std::string PromptArtifact::digest() const { return sha256_hex(prompt_text + "\n" + image.digest); }

PromptArtifact build_prompt(ImageStore& store, const ImageRecord& image, std::int64_t subject_id,
                            std::int64_t object_id, const std::optional<MaskPair>& masks, std::string_view templ,
                            const OverlaySpec& overlay, double expansion) {
  if (subject_id == object_id) {
    throw ValidationError(fmt::format("image {}: subject and object are the same object ({})", image.image_id,
                                      subject_id));
  }
  if (overlay.subject_color == overlay.object_color) {
    throw ValidationError("subject and object overlay colors must differ");
  }
  PromptArtifact artifact;
  artifact.crop = make_region_crop(image, subject_id, object_id, expansion);
  artifact.overlay = overlay;
  artifact.prompt_text = instantiate_prompt(templ, image.object(subject_id).class_label,
                                            image.object(object_id).class_label);

  const cv::Mat full = store.load(image);
  const cv::Mat marked = render_marks(full, artifact.crop.subject_box, artifact.crop.object_box, masks, overlay);
  const auto rect = pixel_rect(artifact.crop.crop_box, full.cols, full.rows);
  // The crop contains the union of both boxes, so neither object can fall outside it.
  if (rect.area() <= 0 || (pixel_rect(artifact.crop.subject_box, full.cols, full.rows) & rect).area() <= 0 ||
      (pixel_rect(artifact.crop.object_box, full.cols, full.rows) & rect).area() <= 0) {
    throw Error("internal: object outside its union crop in image " + image.image_id);
  }
  artifact.image = encode_png(marked(rect));
  return artifact;
}

// ---------------------------------------------------------------------------
// Candidate pairs

std::vector<std::pair<std::int64_t, std::int64_t>> select_candidate_pairs(const ImageRecord& image,
                                                                          double sampling_fraction,
                                                                          std::size_t cap, std::uint64_t seed,
                                                                          PairCountMode mode) {
  if (!(sampling_fraction >= 0.0 && sampling_fraction <= 1.0)) {
    throw ValidationError("sampling fraction must be in [0, 1]");
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> unordered;
  for (std::size_t i = 0; i < image.objects.size(); ++i) {
    for (std::size_t j = i + 1; j < image.objects.size(); ++j) {
      if (iou(image.objects[i].box, image.objects[j].box) > 0.0) {
        unordered.emplace_back(image.objects[i].object_id, image.objects[j].object_id);
      }
    }
  }
  std::vector<std::pair<std::int64_t, std::int64_t>> units;
  if (mode == PairCountMode::kOrdered) {
    for (const auto& [a, b] : unordered) {
      units.emplace_back(a, b);
      units.emplace_back(b, a);
    }
  } else {
    units = unordered;
  }
  // A hair below the product so 0.1 * 30 does not round up to 4.
  const auto wanted = static_cast<std::size_t>(
      std::ceil(sampling_fraction * static_cast<double>(units.size()) - 1e-9));
  const std::uint64_t image_seed = mix_seed(seed, stable_hash64(image.image_id));
  std::vector<std::pair<std::int64_t, std::int64_t>> picked;
  for (const auto i : sample_indices(units.size(), wanted, image_seed)) {
    picked.push_back(units[i]);
    if (mode == PairCountMode::kUnordered) picked.emplace_back(units[i].second, units[i].first);
  }
  if (picked.size() > cap) picked.resize(cap);
  std::sort(picked.begin(), picked.end());
  return picked;
}

// ---------------------------------------------------------------------------
// Post-filtering

std::string_view to_string(GenerationStatus s) {
  switch (s) {
    case GenerationStatus::kAccepted: return "accepted";
    case GenerationStatus::kRejectedLength: return "rejected_length";
    case GenerationStatus::kRejectedVague: return "rejected_vague";
    case GenerationStatus::kRejectedEmpty: return "rejected_empty";
    case GenerationStatus::kProviderError: return "provider_error";
  }
  return "rejected_empty";
}

GenerationStatus generation_status_from_string(std::string_view s) {
  for (auto st : {GenerationStatus::kAccepted, GenerationStatus::kRejectedLength, GenerationStatus::kRejectedVague,
                  GenerationStatus::kRejectedEmpty, GenerationStatus::kProviderError}) {
    if (to_string(st) == s) return st;
  }
  throw ParseError("unknown generation status \"" + std::string(s) + "\"");
}

std::set<std::string> default_blocklist() { return {"next to", "near", "beside", "with", "and", "close to"}; }

std::set<std::string> default_no_relation_phrases() {
  return {"no relation", "no relationship", "none", "no visible relationship", "unknown", "nothing", "n a"};
}

namespace {

std::vector<std::string> tokenize_predicate(std::string_view raw) {
  // First nonblank line only.
  std::string_view text = raw;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos || nl == std::string_view::npos) {
      text = line;
      break;
    }
    text.remove_prefix(nl + 1);
  }
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cleaned.push_back(static_cast<char>(std::tolower(uc)));
    } else if (c == '-') {
      cleaned.push_back('-');
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::istringstream ss(cleaned);
  std::string tok;
  while (ss >> tok) {
    while (!tok.empty() && tok.front() == '-') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == '-') tok.pop_back();
    if (!tok.empty()) tokens.push_back(tok);
  }
  return tokens;
}

bool is_alias_at(const std::vector<std::string>& t, std::size_t i) {
  return i + 1 < t.size() && t[i] == "object" && (t[i + 1] == "1" || t[i + 1] == "2");
}

void strip_echoes(std::vector<std::string>& t) {
  for (bool changed = true; changed && !t.empty();) {
    changed = false;
    if (is_alias_at(t, 0)) {
      t.erase(t.begin(), t.begin() + 2);
      changed = true;
    } else if (t.size() >= 2 && is_alias_at(t, t.size() - 2)) {
      t.resize(t.size() - 2);
      changed = true;
    } else if (!t.empty() && (t.front() == "is" || t.front() == "are")) {
      t.erase(t.begin());
      changed = true;
    }
  }
}

std::string join_words(const std::vector<std::string>& t) {
  std::string out;
  for (const auto& w : t) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

bool contains_phrase(const std::string& predicate, const std::string& phrase) {
  if (phrase.empty()) return false;
  return (" " + predicate + " ").find(" " + phrase + " ") != std::string::npos;
}

}  // namespace

PostprocessResult postprocess(std::string_view raw_text, const std::set<std::string>& blocklist,
                              const std::set<std::string>& no_relation_phrases, std::size_t max_words) {
  auto tokens = tokenize_predicate(raw_text);
  strip_echoes(tokens);
  const std::string predicate = join_words(tokens);
  if (predicate.empty()) return {GenerationStatus::kRejectedEmpty, std::nullopt};
  for (const auto& phrase : no_relation_phrases) {
    if (predicate == join_words(tokenize_predicate(phrase))) return {GenerationStatus::kRejectedEmpty, std::nullopt};
  }
  if (tokens.size() > max_words) return {GenerationStatus::kRejectedLength, std::nullopt};
  for (const auto& phrase : blocklist) {
    if (contains_phrase(predicate, join_words(tokenize_predicate(phrase)))) {
      return {GenerationStatus::kRejectedVague, std::nullopt};
    }
  }
  return {GenerationStatus::kAccepted, predicate};
}

// ---------------------------------------------------------------------------
// Generation

void PipelineConfig::validate() const {
  if (!(sampling_fraction >= 0.0 && sampling_fraction <= 1.0)) {
    throw ValidationError("pipeline.sampling_fraction must be in [0, 1]");
  }
  if (expansion < 0.0) throw ValidationError("pipeline.expansion must be >= 0");
  if (max_words == 0) throw ValidationError("pipeline.max_words must be > 0");
  if (overlay.subject_color == overlay.object_color) {
    throw ValidationError("pipeline: subject and object colors must differ");
  }
  if (!(overlay.alpha >= 0.0 && overlay.alpha <= 1.0)) throw ValidationError("pipeline.overlay_alpha must be in [0, 1]");
  if (decode.max_tokens <= 0) throw ValidationError("pipeline.max_tokens must be > 0");
  if (decode.temperature < 0.0) throw ValidationError("pipeline.temperature must be >= 0");
  instantiate_prompt(prompt_template, "a", "b");
}

std::string to_json_line(const GenerationRecord& r) {
  ordered_json j;
  j["image_id"] = r.pair.image_id;
  j["subject_id"] = r.pair.subject_id;
  j["object_id"] = r.pair.object_id;
  j["backend"] = r.backend;
  j["prompt_digest"] = r.prompt_digest;
  j["prompt_artifact_ref"] = r.prompt_artifact_ref;
  j["raw_text"] = r.raw_text;
  j["predicate"] = r.predicate ? ordered_json(*r.predicate) : ordered_json(nullptr);
  j["status"] = std::string(to_string(r.status));
  if (!r.error.empty()) j["error"] = r.error;
  return j.dump();
}

GenerationRecord record_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    GenerationRecord r;
    r.pair.image_id = j.at("image_id").get<std::string>();
    r.pair.subject_id = j.at("subject_id").get<std::int64_t>();
    r.pair.object_id = j.at("object_id").get<std::int64_t>();
    r.backend = j.at("backend").get<std::string>();
    r.prompt_digest = j.at("prompt_digest").get<std::string>();
    r.prompt_artifact_ref = j.value("prompt_artifact_ref", std::string{});
    r.raw_text = j.value("raw_text", std::string{});
    if (j.contains("predicate") && !j["predicate"].is_null()) r.predicate = j["predicate"].get<std::string>();
    r.status = generation_status_from_string(j.at("status").get<std::string>());
    r.error = j.value("error", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ledger record: ") + e.what());
  }
}

namespace {

using LedgerKey = std::tuple<std::string, std::int64_t, std::int64_t, std::string, std::string>;

LedgerKey key_of(const GenerationRecord& r) {
  return {r.pair.image_id, r.pair.subject_id, r.pair.object_id, r.backend, r.prompt_digest};
}

// Reads the ledger, dropping a torn final line. Rewrites the file when it had to drop one.
std::vector<GenerationRecord> read_ledger(const std::filesystem::path& path) {
  std::vector<GenerationRecord> records;
  std::ifstream in(path, std::ios::binary);
  if (!in) return records;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  bool torn = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      records.push_back(record_from_json_line(lines[i]));
    } catch (const ParseError& e) {
      if (i + 1 != lines.size()) {
        throw ParseError(fmt::format("{}:{}: {}", path.string(), i + 1, e.what()));
      }
      spdlog::warn("ledger {}: dropping incomplete final record", path.string());
      torn = true;
    }
  }
  if (torn) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot rewrite ledger " + path.string());
    for (const auto& r : records) out << to_json_line(r) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
  }
  return records;
}

class LedgerWriter {
 public:
  LedgerWriter(const std::filesystem::path& path, bool append)
      : out_(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc)), path_(path) {
    if (!out_) throw IoError("cannot open ledger " + path.string());
  }
  void append(const GenerationRecord& r) {
    out_ << to_json_line(r) << '\n';
    out_.flush();
    if (!out_) throw IoError("ledger write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

std::string sanitize_for_filename(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  return out;
}

}  // namespace

GenerationResult generate_dataset(const SceneGraphDataset& images, Provider& vlm, ImageStore& store,
                                  const PipelineConfig& config, const GenerationOptions& options) {
  config.validate();
  GenerationResult result;
  result.dataset.name = images.name + "+generated";

  std::map<LedgerKey, GenerationRecord> previous;
  std::optional<LedgerWriter> ledger;
  std::optional<std::ofstream> prompt_log;
  if (options.dry_run) {
    if (!options.artifact_dir) throw InputError("dry run needs an artifact directory");
    std::filesystem::create_directories(*options.artifact_dir);
    prompt_log.emplace(*options.artifact_dir / "prompts.jsonl", std::ios::binary | std::ios::trunc);
    if (!*prompt_log) throw IoError("cannot write " + (*options.artifact_dir / "prompts.jsonl").string());
  } else {
    if (options.ledger_path.empty()) throw InputError("generation needs a ledger path");
    if (options.resume) {
      for (auto& r : read_ledger(options.ledger_path)) {
        result.ledger.push_back(r);
        previous[key_of(r)] = std::move(r);
      }
    }
    ledger.emplace(options.ledger_path, options.resume);
  }

  const std::string backend = vlm.backend_id();
  std::size_t images_done = 0;
  for (const auto& image : images.images) {
    ImageRecord out = image;
    out.relations.clear();

    const auto pairs = image.objects.size() < 2
                           ? std::vector<std::pair<std::int64_t, std::int64_t>>{}
                           : select_candidate_pairs(image, config.sampling_fraction, config.pair_cap, config.seed,
                                                    config.count_mode);
    std::vector<PromptArtifact> prompts;
    prompts.reserve(pairs.size());
    for (const auto& [sub, obj] : pairs) {
      const auto masks = config.use_masks ? store.load_masks(image, sub, obj) : std::nullopt;
      prompts.push_back(build_prompt(store, image, sub, obj, masks, config.prompt_template, config.overlay,
                                     config.expansion));
    }
    result.prompts_built += prompts.size();

    if (options.dry_run) {
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto name = fmt::format("{}_{}_{}.png", sanitize_for_filename(image.image_id), pairs[i].first,
                                      pairs[i].second);
        const auto path = *options.artifact_dir / name;
        std::ofstream png(path, std::ios::binary | std::ios::trunc);
        png.write(reinterpret_cast<const char*>(prompts[i].image.bytes.data()),
                  static_cast<std::streamsize>(prompts[i].image.bytes.size()));
        if (!png) throw IoError("cannot write " + path.string());
        ordered_json j;
        j["image_id"] = image.image_id;
        j["subject_id"] = pairs[i].first;
        j["object_id"] = pairs[i].second;
        j["image"] = name;
        j["prompt"] = prompts[i].prompt_text;
        j["prompt_digest"] = prompts[i].digest();
        *prompt_log << j.dump() << '\n';
      }
    } else {
      std::vector<std::optional<GenerationRecord>> fresh(pairs.size());
      std::vector<std::size_t> pending;
      std::vector<const GenerationRecord*> reused(pairs.size(), nullptr);
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const LedgerKey key{image.image_id, pairs[i].first, pairs[i].second, backend, prompts[i].digest()};
        const auto it = previous.find(key);
        if (it != previous.end() && it->second.status != GenerationStatus::kProviderError) {
          reused[i] = &it->second;
        } else {
          pending.push_back(i);
        }
      }

      parallel_for(pending.size(), vlm.max_in_flight(), [&](std::size_t n) {
        const std::size_t i = pending[n];
        GenerationRecord rec;
        rec.pair = PairKey{image.image_id, pairs[i].first, pairs[i].second};
        rec.backend = backend;
        rec.prompt_digest = prompts[i].digest();
        rec.prompt_artifact_ref = "sha256:" + prompts[i].image.digest;
        try {
          rec.raw_text = vlm.generate_relation(GenerationRequest{prompts[i].image, prompts[i].prompt_text, config.decode});
          const auto post = postprocess(rec.raw_text, config.blocklist, config.no_relation_phrases, config.max_words);
          rec.status = post.status;
          rec.predicate = post.predicate;
        } catch (const ProviderError& e) {
          rec.status = GenerationStatus::kProviderError;
          rec.error = e.what();
        }
        fresh[i] = std::move(rec);
      });

      for (const auto i : pending) {
        ledger->append(*fresh[i]);
        result.ledger.push_back(*fresh[i]);
        ++result.attempted;
      }
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const GenerationRecord& rec = reused[i] ? *reused[i] : *fresh[i];
        if (reused[i]) ++result.reused;
        if (rec.status == GenerationStatus::kAccepted) {
          out.relations.push_back({rec.pair.subject_id, rec.pair.object_id, *rec.predicate, Provenance::kGenerated,
                                   std::nullopt});
        }
      }
    }
    result.dataset.images.push_back(std::move(out));
    ++images_done;
    if (options.should_stop && options.should_stop(images_done) && images_done < images.images.size()) {
      result.interrupted = true;
      break;
    }
  }
  canonicalize(result.dataset);
  return result;
}

}  // namespace relscore
