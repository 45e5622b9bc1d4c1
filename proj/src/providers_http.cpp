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

#include <spdlog/spdlog.h>

#include <cmath>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "relscore/digest.hpp"
#include "relscore/errors.hpp"
#include "relscore/providers.hpp"

namespace relscore {

using json = nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + url);
  if (url.compare(0, scheme_end, "http") != 0) {
    throw ValidationError("only http:// endpoints are supported: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path_prefix = url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  }
  return out;
}

[[noreturn]] void throw_error_payload(const std::string& body, int status, const std::string& context) {
  std::string code = "http_" + std::to_string(status);
  std::string message = body.substr(0, 200);
  try {
    const auto j = json::parse(body);
    if (j.contains("error") && j["error"].is_object()) {
      code = j["error"].value("code", code);
      message = j["error"].value("message", message);
    }
  } catch (const json::exception&) {
  }
  throw BackendError(code, message + " [" + context + "]", status);
}

json parse_response(const std::string& body, const std::string& context) {
  try {
    auto j = json::parse(body);
    if (j.is_object() && j.contains("error")) throw_error_payload(body, 200, context);
    return j;
  } catch (const json::exception& e) {
    throw BackendError("bad_response", std::string(e.what()) + " [" + context + "]");
  }
}

EmbeddingVector vector_from(const json& j, const std::string& context) {
  try {
    auto values = j.at("vector").get<std::vector<float>>();
    if (j.contains("dim") && j["dim"].get<std::size_t>() != values.size()) {
      throw BackendError("bad_response", "dim does not match vector length [" + context + "]");
    }
    return EmbeddingVector::unit(std::move(values));
  } catch (const json::exception& e) {
    throw BackendError("bad_response", std::string(e.what()) + " [" + context + "]");
  }
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpProvider::HttpProvider(ProviderEndpoint endpoint, std::uint64_t jitter_seed)
    : endpoint_(std::move(endpoint)),
      slots_(std::max(1, endpoint_.max_in_flight)),
      jitter_state_(mix_seed(jitter_seed, 0x6a17)) {
  endpoint_.validate();
  parse_base_url(endpoint_.base_url);
}

std::string HttpProvider::backend_id() const { return std::string(to_string(endpoint_.backend_name)); }

std::chrono::duration<double> HttpProvider::backoff(int attempt) {
  const double base = endpoint_.backoff_initial.count() * std::pow(2.0, attempt);
  const double capped = std::min(base, endpoint_.backoff_max.count());
  double u;
  {
    std::lock_guard lock(jitter_mu_);
    jitter_state_ = mix_seed(jitter_state_, static_cast<std::uint64_t>(attempt));
    u = static_cast<double>(jitter_state_ >> 11) * 0x1.0p-53;
  }
  // Equal jitter: half fixed, half random.
  return std::chrono::duration<double>(0.5 * capped + 0.5 * capped * u);
}

std::string HttpProvider::call(const std::string& method, const std::string& path, const std::string& body,
                               bool idempotent, const std::string& context) {
  const auto url = parse_base_url(endpoint_.base_url);
  const int attempts = idempotent ? endpoint_.retry_budget + 1 : 1;
  for (int attempt = 0;; ++attempt) {
    std::exception_ptr failure;
    bool retryable = true;
    {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};

      httplib::Client client(url.scheme_host_port);
      const auto secs = endpoint_.timeout.count();
      const auto whole = static_cast<time_t>(secs);
      const auto micros = static_cast<time_t>((secs - static_cast<double>(whole)) * 1e6);
      client.set_connection_timeout(whole, micros);
      client.set_read_timeout(whole, micros);
      client.set_write_timeout(whole, micros);

      const std::string request_id = std::to_string(next_request_id_++);
      httplib::Headers headers{{"X-Request-Id", request_id}};
      if (!endpoint_.bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.bearer_token);
      }
      const std::string full_path = url.path_prefix + path;
      auto res = method == "GET" ? client.Get(full_path, headers)
                                 : client.Post(full_path, headers, body, "application/json");
      if (!res) {
        const auto err = res.error();
        const std::string what = "request failed (" + httplib::to_string(err) + ") [" + context + "]";
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
          failure = std::make_exception_ptr(TimeoutError(what));
        } else {
          failure = std::make_exception_ptr(TransportError(what));
        }
      } else if (res->status != 200) {
        retryable = retryable_status(res->status);
        try {
          throw_error_payload(res->body, res->status, context);
        } catch (...) {
          failure = std::current_exception();
        }
      } else {
        const auto echoed = res->get_header_value("X-Request-Id");
        if (!echoed.empty() && echoed != request_id) {
          failure = std::make_exception_ptr(
              TransportError("response correlation id " + echoed + " != " + request_id + " [" + context + "]"));
        } else {
          return std::move(res->body);
        }
      }
    }
    if (!retryable || attempt + 1 >= attempts) std::rethrow_exception(failure);
    const auto wait = backoff(attempt);
    spdlog::debug("retrying {} after {:.3f}s (attempt {} of {})", context, wait.count(), attempt + 2, attempts);
    std::this_thread::sleep_for(wait);
  }
}

EmbeddingVector HttpProvider::embed_image(const ImagePayload& crop) {
  const std::string context = "embed_image crop " + crop.digest.substr(0, 12);
  json body{{"image_b64", base64_encode(crop.bytes)}};
  return vector_from(parse_response(call("POST", "/v1/embed_image", body.dump(), true, context), context),
                     context);
}

EmbeddingVector HttpProvider::embed_text(std::string_view phrase) {
  if (phrase.empty()) throw ValidationError("embed_text: phrase is empty");
  const std::string context = "embed_text \"" + std::string(phrase) + "\"";
  json body{{"text", phrase}};
  return vector_from(parse_response(call("POST", "/v1/embed_text", body.dump(), true, context), context),
                     context);
}

ProviderScore HttpProvider::pair_score(const ImagePayload& crop, std::string_view phrase) {
  if (method() == ScoreMethod::kCosineClamped) {
    throw UnsupportedBackendError(backend_id() + " is a cosine backend; compose embed_image/embed_text");
  }
  if (phrase.empty()) throw ValidationError("pair_score: phrase is empty");
  const std::string context = "pair_score crop " + crop.digest.substr(0, 12);
  json body{{"image_b64", base64_encode(crop.bytes)}, {"text", phrase}};
  const auto j = parse_response(call("POST", "/v1/pair_score", body.dump(), true, context), context);
  try {
    const auto m = j.contains("method") ? score_method_from_string(j["method"].get<std::string>()) : method();
    return ProviderScore::checked(j.at("score").get<double>(), m);
  } catch (const json::exception& e) {
    throw BackendError("bad_response", std::string(e.what()) + " [" + context + "]");
  } catch (const InputError& e) {
    throw BackendError("bad_response", std::string(e.what()) + " [" + context + "]");
  }
}

std::string HttpProvider::generate_relation(const GenerationRequest& request) {
  request.validate();
  if (endpoint_.backend_name != BackendName::kVlm) {
    throw UnsupportedBackendError(backend_id() + " cannot generate text");
  }
  const std::string context = "generate crop " + request.image.digest.substr(0, 12);
  json body{{"image_b64", base64_encode(request.image.bytes)},
            {"prompt", request.prompt_text},
            {"max_tokens", request.decode.max_tokens},
            {"temperature", request.decode.temperature}};
  // Sampling at temperature > 0 is not idempotent; those requests are sent once.
  const bool idempotent = request.decode.temperature == 0.0;
  const auto j = parse_response(call("POST", "/v1/generate", body.dump(), idempotent, context), context);
  try {
    return j.at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError("bad_response", std::string(e.what()) + " [" + context + "]");
  }
}

HttpProvider::Health HttpProvider::health() {
  const auto j = parse_response(call("GET", "/v1/health", "", true, "health"), "health");
  return {j.value("backend", std::string{}), j.value("model_id", std::string{})};
}

}  // namespace relscore
