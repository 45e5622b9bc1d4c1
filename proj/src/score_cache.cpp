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

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "relscore/digest.hpp"
#include "relscore/errors.hpp"
#include "relscore/providers.hpp"

namespace relscore {

using json = nlohmann::json;

namespace {

constexpr std::string_view kTrailerTag = "#sha256 ";

struct LogBody {
  std::vector<std::pair<std::string, std::string>> records;
  std::string raw;  // every byte before the trailer
};

// Returns nullopt for a missing file; throws ParseError for a corrupt one.
std::optional<LogBody> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.empty()) return LogBody{};

  // The trailer is the last line.
  if (text.back() != '\n') throw ParseError("missing trailing newline");
  const auto last_start = text.rfind('\n', text.size() - 2);
  const std::size_t trailer_pos = last_start == std::string::npos ? 0 : last_start + 1;
  const std::string trailer = text.substr(trailer_pos, text.size() - trailer_pos - 1);
  if (trailer.rfind(kTrailerTag, 0) != 0) throw ParseError("missing checksum trailer");
  LogBody body;
  body.raw = text.substr(0, trailer_pos);
  if (trailer.substr(kTrailerTag.size()) != sha256_hex(body.raw)) throw ParseError("checksum mismatch");

  std::istringstream lines(body.raw);
  std::string line;
  while (std::getline(lines, line)) {
    const auto space = line.find(' ');
    if (space != 64) throw ParseError("malformed record");
    auto value = line.substr(space + 1);
    if (!json::accept(value)) throw ParseError("record value is not JSON");
    body.records.emplace_back(line.substr(0, space), std::move(value));
  }
  return body;
}

}  // namespace

ScoreCache::ScoreCache(const ScoreCache& other) {
  std::lock_guard lock(other.mu_);
  entries_ = other.entries_;
  order_ = other.order_;
  corrupt_ = other.corrupt_;
}

ScoreCache& ScoreCache::operator=(const ScoreCache& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  entries_ = other.entries_;
  order_ = other.order_;
  corrupt_ = other.corrupt_;
  return *this;
}

ScoreCache ScoreCache::load(const std::filesystem::path& path) {
  ScoreCache cache;
  try {
    auto body = read_log(path);
    if (!body) return cache;
    for (auto& [key, value] : body->records) {
      if (cache.entries_.emplace(key, std::move(value)).second) cache.order_.push_back(key);
    }
  } catch (const ParseError& e) {
    spdlog::warn("score cache {} is corrupt ({}); starting from an empty cache", path.string(), e.what());
    cache = ScoreCache{};
    cache.corrupt_ = true;
  }
  return cache;
}

void ScoreCache::store(const std::filesystem::path& path) const {
  std::string raw;
  std::set<std::string> on_disk;
  try {
    if (auto body = read_log(path)) {
      raw = std::move(body->raw);
      for (const auto& rec : body->records) on_disk.insert(rec.first);
    }
  } catch (const ParseError& e) {
    spdlog::warn("overwriting corrupt score cache {} ({})", path.string(), e.what());
  }

  std::vector<std::pair<std::string, std::string>> fresh;
  {
    std::lock_guard lock(mu_);
    for (const auto& key : order_) {
      if (!on_disk.contains(key)) fresh.emplace_back(key, entries_.at(key));
    }
  }
  std::sort(fresh.begin(), fresh.end());
  for (const auto& [key, value] : fresh) {
    raw += key;
    raw += ' ';
    raw += value;
    raw += '\n';
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << raw << kTrailerTag << sha256_hex(raw) << '\n';
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace " + path.string() + ": " + ec.message());
}

std::string ScoreCache::make_key(std::string_view backend, std::string_view kind, std::string_view crop_digest,
                                 std::string_view phrase) {
  std::string material;
  material.reserve(backend.size() + kind.size() + crop_digest.size() + phrase.size() + 3);
  for (auto part : {backend, kind, crop_digest, phrase}) {
    material += part;
    material += '\x1f';
  }
  return sha256_hex(material);
}

std::optional<std::string> ScoreCache::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::insert(const std::string& key, std::string value_json) {
  std::lock_guard lock(mu_);
  if (entries_.emplace(key, std::move(value_json)).second) order_.push_back(key);
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

CachingProvider::CachingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<ScoreCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_ || !cache_) throw ValidationError("caching provider needs an inner provider and a cache");
}

EmbeddingVector CachingProvider::embed_image(const ImagePayload& crop) {
  const auto key = ScoreCache::make_key(backend_id(), "embed_image", crop.digest, "");
  if (auto hit = cache_->lookup(key)) {
    ++hits_;
    return EmbeddingVector{json::parse(*hit).at("v").get<std::vector<float>>(), true};
  }
  ++misses_;
  auto v = inner_->embed_image(crop);
  cache_->insert(key, json{{"v", v.values}}.dump());
  return v;
}

EmbeddingVector CachingProvider::embed_text(std::string_view phrase) {
  if (phrase.empty()) throw ValidationError("embed_text: phrase is empty");
  const auto key = ScoreCache::make_key(backend_id(), "embed_text", "", phrase);
  if (auto hit = cache_->lookup(key)) {
    ++hits_;
    return EmbeddingVector{json::parse(*hit).at("v").get<std::vector<float>>(), true};
  }
  ++misses_;
  auto v = inner_->embed_text(phrase);
  cache_->insert(key, json{{"v", v.values}}.dump());
  return v;
}

ProviderScore CachingProvider::pair_score(const ImagePayload& crop, std::string_view phrase) {
  const auto key = ScoreCache::make_key(backend_id(), "pair_score", crop.digest, phrase);
  if (auto hit = cache_->lookup(key)) {
    ++hits_;
    const auto j = json::parse(*hit);
    return ProviderScore::checked(j.at("s").get<double>(), score_method_from_string(j.at("m").get<std::string>()));
  }
  ++misses_;
  auto s = inner_->pair_score(crop, phrase);
  cache_->insert(key, json{{"s", s.value}, {"m", to_string(s.method)}}.dump());
  return s;
}

std::string CachingProvider::generate_relation(const GenerationRequest& request) {
  request.validate();
  if (request.decode.temperature != 0.0) return inner_->generate_relation(request);
  const auto key = ScoreCache::make_key(
      backend_id(), "generate", request.image.digest,
      request.prompt_text + "\x1e" + std::to_string(request.decode.max_tokens));
  if (auto hit = cache_->lookup(key)) {
    ++hits_;
    return json::parse(*hit).at("t").get<std::string>();
  }
  ++misses_;
  auto text = inner_->generate_relation(request);
  cache_->insert(key, json{{"t", text}}.dump());
  return text;
}

}  // namespace relscore
