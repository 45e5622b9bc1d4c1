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

#include <stdexcept>
#include <string>

namespace relscore {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: unreadable files, malformed content, violated invariants.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class IoError : public InputError {
 public:
  using InputError::InputError;
};

/// Raised when an aggregate has nothing to aggregate (e.g. every image skipped).
class EvaluationError : public InputError {
 public:
  using InputError::InputError;
};

/// Anything that went wrong while talking to a scoring or generation backend.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class TimeoutError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

/// The backend answered with an {error:{code,message}} payload.
class BackendError : public ProviderError {
 public:
  BackendError(std::string code, const std::string& message, int http_status = 0)
      : ProviderError(code + ": " + message), code_(std::move(code)), http_status_(http_status) {}

  const std::string& code() const { return code_; }
  int http_status() const { return http_status_; }

 private:
  std::string code_;
  int http_status_;
};

/// The backend cannot serve this kind of request (e.g. pair_score on a cosine model).
class UnsupportedBackendError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

}  // namespace relscore
