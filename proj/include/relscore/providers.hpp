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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace relscore {

/// How a backend turns (region, text) into a number.
enum class ScoreMethod { kCosineClamped, kSigmoidProb, kItmProb };

std::string_view to_string(ScoreMethod m);
ScoreMethod score_method_from_string(std::string_view s);

/// A region/text similarity in [0, 1], tagged with how it was produced.
struct ProviderScore {
  double value = 0.0;
  ScoreMethod method = ScoreMethod::kCosineClamped;

  /// Throws ValidationError outside [0, 1].
  static ProviderScore checked(double value, ScoreMethod method);
};

struct EmbeddingVector {
  std::vector<float> values;
  bool normalized = false;

  std::size_t dimension() const { return values.size(); }
  double norm() const;
  /// L2-normalizes; throws BackendError on a zero or non-finite vector.
  static EmbeddingVector unit(std::vector<float> values);
};

/// Encoded (PNG) image bytes plus their SHA-256, which keys every cache.
struct ImagePayload {
  std::vector<std::uint8_t> bytes;
  std::string digest;

  static ImagePayload from_bytes(std::vector<std::uint8_t> bytes);
};

struct DecodeParams {
  int max_tokens = 16;
  double temperature = 0.0;
};

struct GenerationRequest {
  ImagePayload image;
  std::string prompt_text;
  DecodeParams decode;

  void validate() const;
};

enum class BackendName { kNegclip, kClip, kSiglip, kBlip2Itm, kVlm };

std::string_view to_string(BackendName b);
BackendName backend_name_from_string(std::string_view s);
/// Cosine for CLIP-family backends, sigmoid for SigLIP, ITM for BLIP-2.
ScoreMethod native_method(BackendName b);

struct ProviderEndpoint {
  std::string base_url;
  BackendName backend_name = BackendName::kNegclip;
  std::chrono::duration<double> timeout{30.0};
  int max_in_flight = 4;
  int retry_budget = 3;
  std::chrono::duration<double> backoff_initial{0.2};
  std::chrono::duration<double> backoff_max{5.0};
  /// Sent as "Authorization: Bearer ..." when nonempty.
  std::string bearer_token;

  void validate() const;
};

/// Uniform access to a scoring or generation backend. Implementations are
/// safe for concurrent use and enforce their own in-flight limit.
class Provider {
 public:
  virtual ~Provider() = default;

  /// Stable identity used in cache keys and run manifests.
  virtual std::string backend_id() const = 0;
  virtual ScoreMethod method() const = 0;
  virtual int max_in_flight() const = 0;

  virtual EmbeddingVector embed_image(const ImagePayload& crop) = 0;
  virtual EmbeddingVector embed_text(std::string_view phrase) = 0;
  virtual ProviderScore pair_score(const ImagePayload& crop, std::string_view phrase) = 0;
  virtual std::string generate_relation(const GenerationRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Mock

struct MockOptions {
  std::string name = "mock";
  ScoreMethod method = ScoreMethod::kCosineClamped;
  int dimension = 64;
  int max_in_flight = 4;
  /// Artificial per-call latency, used to make the concurrency probe meaningful.
  std::chrono::milliseconds latency{0};
  /// Replies for generate_relation, picked by a hash of (crop digest, prompt).
  std::vector<std::string> canned_replies;
};

std::vector<std::string> default_mock_replies();

/// Deterministic in-process backend.
///
/// Text vectors are seeded by the phrase. Image vectors are seeded by the crop
/// digest unless a seed phrase was bound to that digest, in which case the
/// image vector equals the phrase's text vector (cosine 1).
class MockProvider final : public Provider {
 public:
  struct Stats {
    std::size_t embed_image_calls = 0;
    std::size_t embed_text_calls = 0;
    std::size_t pair_score_calls = 0;
    std::size_t generate_calls = 0;
    int max_observed_in_flight = 0;

    std::size_t total() const {
      return embed_image_calls + embed_text_calls + pair_score_calls + generate_calls;
    }
  };

  explicit MockProvider(MockOptions options = {});

  std::string backend_id() const override;
  ScoreMethod method() const override { return options_.method; }
  int max_in_flight() const override { return options_.max_in_flight; }

  EmbeddingVector embed_image(const ImagePayload& crop) override;
  EmbeddingVector embed_text(std::string_view phrase) override;
  ProviderScore pair_score(const ImagePayload& crop, std::string_view phrase) override;
  std::string generate_relation(const GenerationRequest& request) override;

  void bind_seed_phrase(const std::string& crop_digest, std::string phrase);
  /// Calls for which the predicate returns true throw TransportError.
  void set_failure(std::function<bool(const std::string& crop_digest)> should_fail);

  Stats stats() const;

 private:
  class CallGuard;

  EmbeddingVector seeded_vector(std::string_view seed) const;
  std::optional<std::string> seed_phrase(const std::string& digest) const;
  void maybe_fail(const std::string& digest) const;

  MockOptions options_;
  std::counting_semaphore<> slots_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> bound_;
  std::function<bool(const std::string&)> should_fail_;
  std::atomic<int> in_flight_{0};
  Stats stats_;
};

// ---------------------------------------------------------------------------
// HTTP

/// Client for the model-server JSON API (/v1/embed_image, /v1/embed_text,
/// /v1/pair_score, /v1/generate, /v1/health).
class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(ProviderEndpoint endpoint, std::uint64_t jitter_seed = 0);

  std::string backend_id() const override;
  ScoreMethod method() const override { return native_method(endpoint_.backend_name); }
  int max_in_flight() const override { return endpoint_.max_in_flight; }

  EmbeddingVector embed_image(const ImagePayload& crop) override;
  EmbeddingVector embed_text(std::string_view phrase) override;
  ProviderScore pair_score(const ImagePayload& crop, std::string_view phrase) override;
  std::string generate_relation(const GenerationRequest& request) override;

  struct Health {
    std::string backend;
    std::string model_id;
  };
  Health health();

  const ProviderEndpoint& endpoint() const { return endpoint_; }

 private:
  std::string call(const std::string& method, const std::string& path, const std::string& body,
                   bool idempotent, const std::string& context);
  std::chrono::duration<double> backoff(int attempt);

  ProviderEndpoint endpoint_;
  std::counting_semaphore<> slots_;
  std::mutex jitter_mu_;
  std::uint64_t jitter_state_;
  std::atomic<std::uint64_t> next_request_id_{1};
};

// ---------------------------------------------------------------------------
// Score cache

/// Content-addressed store of provider results keyed by
/// SHA-256(backend, kind, crop digest, phrase).
///
/// On disk: one "<key> <json>" line per entry, followed by a
/// "#sha256 <hex>" trailer over every preceding byte. store() keeps the
/// records already on disk in their order and appends new ones.
class ScoreCache {
 public:
  ScoreCache() = default;

  /// A missing file yields an empty cache. A corrupt file (bad checksum,
  /// unparsable record) also yields an empty cache, with a warning.
  static ScoreCache load(const std::filesystem::path& path);
  void store(const std::filesystem::path& path) const;

  static std::string make_key(std::string_view backend, std::string_view kind,
                              std::string_view crop_digest, std::string_view phrase);

  std::optional<std::string> lookup(const std::string& key) const;
  void insert(const std::string& key, std::string value_json);
  std::size_t size() const;
  bool loaded_from_corrupt_file() const { return corrupt_; }

  ScoreCache(const ScoreCache& other);
  ScoreCache& operator=(const ScoreCache& other);

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::vector<std::string> order_;
  bool corrupt_ = false;
};

/// Decorator that answers from a ScoreCache and only forwards misses.
/// generate_relation is cached only at temperature 0.
class CachingProvider final : public Provider {
 public:
  CachingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<ScoreCache> cache);

  std::string backend_id() const override { return inner_->backend_id(); }
  ScoreMethod method() const override { return inner_->method(); }
  int max_in_flight() const override { return inner_->max_in_flight(); }

  EmbeddingVector embed_image(const ImagePayload& crop) override;
  EmbeddingVector embed_text(std::string_view phrase) override;
  ProviderScore pair_score(const ImagePayload& crop, std::string_view phrase) override;
  std::string generate_relation(const GenerationRequest& request) override;

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<Provider> inner_;
  std::shared_ptr<ScoreCache> cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace relscore
