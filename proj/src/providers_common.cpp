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

#include "relscore/digest.hpp"
#include "relscore/errors.hpp"
#include "relscore/providers.hpp"

namespace relscore {

std::string_view to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::kCosineClamped: return "cosine_clamped";
    case ScoreMethod::kSigmoidProb: return "sigmoid_prob";
    case ScoreMethod::kItmProb: return "itm_prob";
  }
  return "cosine_clamped";
}

ScoreMethod score_method_from_string(std::string_view s) {
  if (s == "cosine_clamped" || s == "cosine") return ScoreMethod::kCosineClamped;
  if (s == "sigmoid_prob" || s == "sigmoid") return ScoreMethod::kSigmoidProb;
  if (s == "itm_prob" || s == "itm") return ScoreMethod::kItmProb;
  throw ParseError("unknown score method \"" + std::string(s) + "\"");
}

ProviderScore ProviderScore::checked(double value, ScoreMethod method) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ValidationError("provider score " + std::to_string(value) + " outside [0, 1]");
  }
  return {value, method};
}

double EmbeddingVector::norm() const {
  double s = 0.0;
  for (float v : values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

EmbeddingVector EmbeddingVector::unit(std::vector<float> values) {
  EmbeddingVector out{std::move(values), false};
  const double n = out.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw BackendError("bad_embedding", "zero or non-finite embedding");
  for (float& v : out.values) v = static_cast<float>(v / n);
  out.normalized = true;
  return out;
}

ImagePayload ImagePayload::from_bytes(std::vector<std::uint8_t> bytes) {
  ImagePayload p;
  p.digest = sha256_hex(bytes);
  p.bytes = std::move(bytes);
  return p;
}

void GenerationRequest::validate() const {
  if (prompt_text.empty()) throw ValidationError("generation request: prompt_text is empty");
  if (decode.max_tokens <= 0) throw ValidationError("generation request: max_tokens must be > 0");
  if (decode.temperature < 0.0) throw ValidationError("generation request: temperature must be >= 0");
  if (image.bytes.empty()) throw ValidationError("generation request: image payload is empty");
}

std::string_view to_string(BackendName b) {
  switch (b) {
    case BackendName::kNegclip: return "negclip";
    case BackendName::kClip: return "clip";
    case BackendName::kSiglip: return "siglip";
    case BackendName::kBlip2Itm: return "blip2_itm";
    case BackendName::kVlm: return "vlm";
  }
  return "negclip";
}

BackendName backend_name_from_string(std::string_view s) {
  if (s == "negclip") return BackendName::kNegclip;
  if (s == "clip") return BackendName::kClip;
  if (s == "siglip") return BackendName::kSiglip;
  if (s == "blip2_itm" || s == "blip2") return BackendName::kBlip2Itm;
  if (s == "vlm") return BackendName::kVlm;
  throw InputError("unknown backend \"" + std::string(s) + "\"");
}

ScoreMethod native_method(BackendName b) {
  switch (b) {
    case BackendName::kSiglip: return ScoreMethod::kSigmoidProb;
    case BackendName::kBlip2Itm: return ScoreMethod::kItmProb;
    default: return ScoreMethod::kCosineClamped;
  }
}

void ProviderEndpoint::validate() const {
  if (base_url.empty()) throw ValidationError("provider endpoint: base_url is empty");
  if (max_in_flight < 1) throw ValidationError("provider endpoint: max_in_flight must be >= 1");
  if (!(timeout.count() > 0.0)) throw ValidationError("provider endpoint: timeout must be > 0");
  if (retry_budget < 0) throw ValidationError("provider endpoint: retry_budget must be >= 0");
}

}  // namespace relscore
