#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/domain.hpp"
#include "cocot/errors.hpp"
#include "cocot/util.hpp"

namespace cocot {

// ---------------------------------------------------------------------------
// Provider configuration
// ---------------------------------------------------------------------------

enum class Dialect { OpenAIChat, GeminiGenerate, Mock };

inline const char* to_string(Dialect d) {
  switch (d) {
    case Dialect::OpenAIChat: return "openai_chat";
    case Dialect::GeminiGenerate: return "gemini_generate";
    case Dialect::Mock: return "mock";
  }
  return "?";
}

inline Dialect dialect_from_string(std::string_view s) {
  if (s == "openai_chat") return Dialect::OpenAIChat;
  if (s == "gemini_generate") return Dialect::GeminiGenerate;
  if (s == "mock") return Dialect::Mock;
  throw Error(ErrorCode::ConfigError, "unknown dialect: " + std::string(s));
}

struct RetryPolicy {
  int max_attempts = 3;
  long base_backoff_ms = 250;
  double jitter = 0.25;  // fraction of the backoff added/subtracted at random
};

struct ProviderConfig {
  std::string provider_id;
  Dialect dialect = Dialect::Mock;
  std::string endpoint_url;  // ignored by Mock
  std::string model_name;
  int max_parallel = 1;
  RetryPolicy retry;
  long timeout_ms = 120000;
  // Sent verbatim when present; absent means each provider's own defaults.
  json sampling = json::object();
  double rate_limit_per_minute = 0;  // 0 = unlimited
  size_t image_size_cap_bytes = 20 * 1024 * 1024;
  std::filesystem::path mock_fixtures;  // rules file, Mock only
};

inline void validate(const ProviderConfig& cfg) {
  if (cfg.provider_id.empty()) {
    throw Error(ErrorCode::ConfigError, "provider_id is empty");
  }
  if (cfg.max_parallel < 1) {
    throw Error(ErrorCode::ConfigError, "max_parallel must be >= 1 for " + cfg.provider_id);
  }
  if (cfg.dialect == Dialect::Mock) {
    if (cfg.mock_fixtures.empty()) {
      throw Error(ErrorCode::ConfigError,
                  "mock provider " + cfg.provider_id + " requires a fixtures path");
    }
  } else {
    if (cfg.endpoint_url.empty()) {
      throw Error(ErrorCode::ConfigError, "provider " + cfg.provider_id + " has no endpoint_url");
    }
    if (cfg.model_name.empty()) {
      throw Error(ErrorCode::ConfigError, "provider " + cfg.provider_id + " has no model_name");
    }
  }
  if (cfg.retry.max_attempts < 1) {
    throw Error(ErrorCode::ConfigError, "retry.max_attempts must be >= 1");
  }
}

inline const char* api_key_env_var(Dialect d) {
  switch (d) {
    case Dialect::OpenAIChat: return "OPENAI_API_KEY";
    case Dialect::GeminiGenerate: return "GEMINI_API_KEY";
    case Dialect::Mock: return "";
  }
  return "";
}

// ---------------------------------------------------------------------------
// Attachment encoding
// ---------------------------------------------------------------------------

struct EncodedAttachment {
  std::string media_type;
  std::string base64_data;
};

// Media type comes from magic bytes, never from the file extension.
inline std::string sniff_media_type(std::string_view bytes) {
  static constexpr char png_magic[] = {'\x89', 'P', 'N', 'G', '\r', '\n', '\x1a', '\n'};
  if (bytes.size() >= 8 && bytes.compare(0, 8, std::string_view(png_magic, 8)) == 0) {
    return "image/png";
  }
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 &&
      static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return "image/jpeg";
  }
  if (bytes.size() >= 12 && bytes.substr(0, 4) == "RIFF" && bytes.substr(8, 4) == "WEBP") {
    return "image/webp";
  }
  throw Error(ErrorCode::UnsupportedMediaType,
              "unrecognized image format (PNG, JPEG and WebP are supported)");
}

inline EncodedAttachment encode_attachment(const std::string& image_path, size_t size_cap_bytes) {
  std::string bytes;
  try {
    bytes = read_file(image_path);
  } catch (const Error&) {
    throw Error(ErrorCode::AttachmentUnreadable, "cannot read attachment " + image_path);
  }
  if (bytes.empty()) {
    throw Error(ErrorCode::AttachmentUnreadable, "attachment is empty: " + image_path);
  }
  if (bytes.size() > size_cap_bytes) {
    throw Error(ErrorCode::SizeCapExceeded,
                image_path + " is " + std::to_string(bytes.size()) + " bytes, cap is " +
                    std::to_string(size_cap_bytes));
  }
  return {sniff_media_type(bytes), base64_encode(bytes)};
}

// ---------------------------------------------------------------------------
// Request building
// ---------------------------------------------------------------------------

struct WireRequest {
  std::string url;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;  // JSON, serialized with stable key order
};

struct WireResponse {
  std::string text;
  std::optional<TokenUsage> usage;
  bool truncated = false;
};

namespace detail {

inline std::vector<EncodedAttachment> encode_for_message(const AssembledPrompt& call,
                                                         size_t message_index,
                                                         size_t size_cap_bytes) {
  std::vector<EncodedAttachment> out;
  for (const auto& a : call.attachments) {
    if (a.message_index == message_index) {
      out.push_back(encode_attachment(a.image_path, size_cap_bytes));
    }
  }
  return out;
}

}  // namespace detail

// OpenAI-compatible chat completions. Key order is fixed (ordered_json) so the
// serialized body is byte-stable for golden comparisons.
inline WireRequest build_openai_request(const AssembledPrompt& call, const ProviderConfig& cfg,
                                        const std::string& api_key) {
  using ojson = nlohmann::ordered_json;
  ojson body;
  body["model"] = cfg.model_name;
  body["messages"] = ojson::array();
  for (size_t i = 0; i < call.messages.size(); ++i) {
    const Message& m = call.messages[i];
    ojson msg;
    msg["role"] = to_string(m.role);
    auto images = detail::encode_for_message(call, i, cfg.image_size_cap_bytes);
    if (images.empty()) {
      msg["content"] = m.text;
    } else {
      ojson content = ojson::array();
      content.push_back({{"type", "text"}, {"text", m.text}});
      for (const auto& img : images) {
        content.push_back(
            {{"type", "image_url"},
             {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64_data}}}});
      }
      msg["content"] = std::move(content);
    }
    body["messages"].push_back(std::move(msg));
  }
  for (auto it = cfg.sampling.begin(); it != cfg.sampling.end(); ++it) {
    body[it.key()] = it.value();
  }

  WireRequest req;
  req.url = cfg.endpoint_url;
  req.headers = {{"Authorization", "Bearer " + api_key}, {"Content-Type", "application/json"}};
  req.body = body.dump();
  return req;
}

inline WireResponse parse_openai_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(false, 200, "unparseable response body: " + std::string(e.what()),
                        body.substr(0, 200));
  }
  WireResponse out;
  try {
    const json& choice = doc.at("choices").at(0);
    const json& content = choice.at("message").at("content");
    out.text = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("finish_reason") && choice.at("finish_reason") == "length") {
      out.truncated = true;
    }
    if (doc.contains("usage")) {
      TokenUsage u;
      const json& usage = doc.at("usage");
      u.prompt_tokens = usage.value("prompt_tokens", 0L);
      u.completion_tokens = usage.value("completion_tokens", 0L);
      u.total_tokens = usage.value("total_tokens", 0L);
      out.usage = u;
    }
  } catch (const json::exception& e) {
    throw ProviderError(false, 200, "unexpected response shape: " + std::string(e.what()),
                        body.substr(0, 200));
  }
  return out;
}

// Gemini generateContent. System messages map to systemInstruction; assistant
// turns use the "model" role; sampling knobs nest under generationConfig.
inline WireRequest build_gemini_request(const AssembledPrompt& call, const ProviderConfig& cfg,
                                        const std::string& api_key) {
  using ojson = nlohmann::ordered_json;
  ojson body;
  ojson contents = ojson::array();
  ojson system_parts = ojson::array();
  for (size_t i = 0; i < call.messages.size(); ++i) {
    const Message& m = call.messages[i];
    if (m.role == Role::System) {
      system_parts.push_back({{"text", m.text}});
      continue;
    }
    ojson parts = ojson::array();
    parts.push_back({{"text", m.text}});
    for (const auto& img : detail::encode_for_message(call, i, cfg.image_size_cap_bytes)) {
      parts.push_back(
          {{"inline_data", {{"mime_type", img.media_type}, {"data", img.base64_data}}}});
    }
    contents.push_back(
        {{"role", m.role == Role::Assistant ? "model" : "user"}, {"parts", std::move(parts)}});
  }
  if (!system_parts.empty()) {
    body["systemInstruction"] = {{"parts", std::move(system_parts)}};
  }
  body["contents"] = std::move(contents);
  if (!cfg.sampling.empty()) {
    ojson gen;
    for (auto it = cfg.sampling.begin(); it != cfg.sampling.end(); ++it) {
      gen[it.key()] = it.value();
    }
    body["generationConfig"] = std::move(gen);
  }

  WireRequest req;
  std::string base = cfg.endpoint_url;
  if (!base.empty() && base.back() == '/') base.pop_back();
  req.url = base + "/models/" + cfg.model_name + ":generateContent";
  req.headers = {{"x-goog-api-key", api_key}, {"Content-Type", "application/json"}};
  req.body = body.dump();
  return req;
}

inline WireResponse parse_gemini_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw ProviderError(false, 200, "unparseable response body: " + std::string(e.what()),
                        body.substr(0, 200));
  }
  WireResponse out;
  try {
    const json& candidate = doc.at("candidates").at(0);
    std::string text;
    if (candidate.contains("content") && candidate.at("content").contains("parts")) {
      for (const json& part : candidate.at("content").at("parts")) {
        if (part.contains("text")) text += part.at("text").get<std::string>();
      }
    }
    out.text = std::move(text);
    if (candidate.contains("finishReason") && candidate.at("finishReason") == "MAX_TOKENS") {
      out.truncated = true;
    }
    if (doc.contains("usageMetadata")) {
      TokenUsage u;
      const json& usage = doc.at("usageMetadata");
      u.prompt_tokens = usage.value("promptTokenCount", 0L);
      u.completion_tokens = usage.value("candidatesTokenCount", 0L);
      u.total_tokens = usage.value("totalTokenCount", 0L);
      out.usage = u;
    }
  } catch (const json::exception& e) {
    throw ProviderError(false, 200, "unexpected response shape: " + std::string(e.what()),
                        body.substr(0, 200));
  }
  return out;
}

}  // namespace cocot
