#pragma once

#include <stdexcept>
#include <string>

namespace cocot {

enum class ErrorCode {
  // prompt assembly
  MissingCaption,
  UnsupportedCombination,
  MissingImage,
  EmptySceneGraph,
  // dataset loading
  FileMissing,
  CountMismatch,
  // provider gateway
  ProviderFailure,
  AttachmentUnreadable,
  UnsupportedMediaType,
  SizeCapExceeded,
  // judgment
  EmptyResponse,
  // metrics
  MixedTaskKinds,
  EmptySlice,
  // planning / configuration
  InvalidCombination,
  EmptyPlan,
  ConfigError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingCaption: return "MissingCaption";
    case ErrorCode::UnsupportedCombination: return "UnsupportedCombination";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::EmptySceneGraph: return "EmptySceneGraph";
    case ErrorCode::FileMissing: return "FileMissing";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::AttachmentUnreadable: return "AttachmentUnreadable";
    case ErrorCode::UnsupportedMediaType: return "UnsupportedMediaType";
    case ErrorCode::SizeCapExceeded: return "SizeCapExceeded";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::MixedTaskKinds: return "MixedTaskKinds";
    case ErrorCode::EmptySlice: return "EmptySlice";
    case ErrorCode::InvalidCombination: return "InvalidCombination";
    case ErrorCode::EmptyPlan: return "EmptyPlan";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Remote call failure. `retryable` decides whether the gateway may re-issue
// the request (429, 5xx, timeouts); other 4xx are permanent.
class ProviderError : public Error {
 public:
  ProviderError(bool retryable, int status, const std::string& message,
                const std::string& body_snippet = "")
      : Error(ErrorCode::ProviderFailure, "status=" + std::to_string(status) +
                                              (retryable ? " (retryable): " : ": ") + message +
                                              (body_snippet.empty() ? "" : " | " + body_snippet)),
        retryable_(retryable),
        status_(status),
        body_snippet_(body_snippet) {}

  bool retryable() const noexcept { return retryable_; }
  int status() const noexcept { return status_; }
  const std::string& body_snippet() const noexcept { return body_snippet_; }

 private:
  bool retryable_;
  int status_;
  std::string body_snippet_;
};

}  // namespace cocot
