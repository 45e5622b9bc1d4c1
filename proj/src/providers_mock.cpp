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

#include <cmath>
#include <random>
#include <thread>

#include "relscore/digest.hpp"
#include "relscore/errors.hpp"
#include "relscore/providers.hpp"

namespace relscore {

std::vector<std::string> default_mock_replies() {
  return {
      "holding",
      "Sitting on.",
      "Object 1 is standing next to Object 2",
      "leaning against",
      "has a small light blue handbag attached to",
      "riding",
      "no relation",
      "looking at",
      "is parked in front of",
      "\"covered by\"",
      "near",
      "hanging from",
  };
}

class MockProvider::CallGuard {
 public:
  CallGuard(MockProvider& owner, std::size_t Stats::*counter) : owner_(owner) {
    owner_.slots_.acquire();
    const int now = ++owner_.in_flight_;
    {
      std::lock_guard lock(owner_.mu_);
      ++(owner_.stats_.*counter);
      owner_.stats_.max_observed_in_flight = std::max(owner_.stats_.max_observed_in_flight, now);
    }
    if (owner_.options_.latency.count() > 0) std::this_thread::sleep_for(owner_.options_.latency);
  }
  ~CallGuard() {
    --owner_.in_flight_;
    owner_.slots_.release();
  }
  CallGuard(const CallGuard&) = delete;
  CallGuard& operator=(const CallGuard&) = delete;

 private:
  MockProvider& owner_;
};

MockProvider::MockProvider(MockOptions options)
    : options_(std::move(options)), slots_(std::max(1, options_.max_in_flight)) {
  if (options_.max_in_flight < 1) throw ValidationError("mock: max_in_flight must be >= 1");
  if (options_.dimension < 2) throw ValidationError("mock: dimension must be >= 2");
  if (options_.canned_replies.empty()) options_.canned_replies = default_mock_replies();
}

std::string MockProvider::backend_id() const {
  return options_.name + "-" + std::string(to_string(options_.method));
}

EmbeddingVector MockProvider::seeded_vector(std::string_view seed) const {
  std::mt19937_64 rng(stable_hash64(seed));
  std::vector<float> v(static_cast<std::size_t>(options_.dimension));
  for (auto& x : v) {
    // Top 53 bits to [0, 1), then to [-1, 1); independent of library distributions.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    x = static_cast<float>(2.0 * u - 1.0);
  }
  return EmbeddingVector::unit(std::move(v));
}

std::optional<std::string> MockProvider::seed_phrase(const std::string& digest) const {
  std::lock_guard lock(mu_);
  const auto it = bound_.find(digest);
  if (it == bound_.end()) return std::nullopt;
  return it->second;
}

void MockProvider::maybe_fail(const std::string& digest) const {
  std::function<bool(const std::string&)> pred;
  {
    std::lock_guard lock(mu_);
    pred = should_fail_;
  }
  if (pred && pred(digest)) throw TransportError("mock: injected failure for crop " + digest.substr(0, 12));
}

EmbeddingVector MockProvider::embed_image(const ImagePayload& crop) {
  CallGuard guard(*this, &Stats::embed_image_calls);
  maybe_fail(crop.digest);
  if (auto phrase = seed_phrase(crop.digest)) return seeded_vector("text:" + *phrase);
  return seeded_vector("image:" + crop.digest);
}

EmbeddingVector MockProvider::embed_text(std::string_view phrase) {
  CallGuard guard(*this, &Stats::embed_text_calls);
  if (phrase.empty()) throw ValidationError("embed_text: phrase is empty");
  return seeded_vector("text:" + std::string(phrase));
}

ProviderScore MockProvider::pair_score(const ImagePayload& crop, std::string_view phrase) {
  if (options_.method == ScoreMethod::kCosineClamped) {
    throw UnsupportedBackendError(backend_id() + " does not support pair_score");
  }
  CallGuard guard(*this, &Stats::pair_score_calls);
  maybe_fail(crop.digest);
  if (phrase.empty()) throw ValidationError("pair_score: phrase is empty");
  const auto phrase_seed = seed_phrase(crop.digest);
  const auto image = seeded_vector(phrase_seed ? "text:" + *phrase_seed : "image:" + crop.digest);
  const auto text = seeded_vector("text:" + std::string(phrase));
  double cos = 0.0;
  for (std::size_t i = 0; i < image.values.size(); ++i) cos += double(image.values[i]) * text.values[i];
  const double prob = 1.0 / (1.0 + std::exp(-(12.0 * cos - 3.0)));
  return ProviderScore::checked(prob, options_.method);
}

std::string MockProvider::generate_relation(const GenerationRequest& request) {
  request.validate();
  CallGuard guard(*this, &Stats::generate_calls);
  maybe_fail(request.image.digest);
  const auto h = stable_hash64(request.image.digest + "\n" + request.prompt_text);
  return options_.canned_replies[h % options_.canned_replies.size()];
}

void MockProvider::bind_seed_phrase(const std::string& crop_digest, std::string phrase) {
  std::lock_guard lock(mu_);
  bound_[crop_digest] = std::move(phrase);
}

void MockProvider::set_failure(std::function<bool(const std::string&)> should_fail) {
  std::lock_guard lock(mu_);
  should_fail_ = std::move(should_fail);
}

MockProvider::Stats MockProvider::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace relscore
