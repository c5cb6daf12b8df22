#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <string>

#include "cocot/provider.hpp"

namespace cocot {

// Production transport. Kept out of provider.hpp so unit tests exercising the
// gateway with scripted transports do not pull in the HTTP stack.
class HttplibTransport : public HttpTransport {
 public:
  HttpResult post(const WireRequest& request, long timeout_ms) override {
    auto [base, path] = split_url(request.url);
    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_read_timeout(std::chrono::milliseconds(timeout_ms));
    client.set_write_timeout(std::chrono::milliseconds(timeout_ms));

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [name, value] : request.headers) {
      if (name == "Content-Type") {
        content_type = value;
      } else {
        headers.emplace(name, value);
      }
    }

    auto res = client.Post(path, headers, request.body, content_type);
    if (!res) {
      return {0, "", httplib::to_string(res.error())};
    }
    return {res->status, res->body, ""};
  }

 private:
  // "https://host[:port]/some/path" -> ("https://host[:port]", "/some/path")
  static std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::ConfigError, "endpoint URL lacks a scheme: " + url);
    }
    size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
  }
};

}  // namespace cocot
