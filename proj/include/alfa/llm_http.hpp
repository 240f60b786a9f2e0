#pragma once

// HTTP(S) transport for the LLM client. HTTPS needs the build to define
// CPPHTTPLIB_OPENSSL_SUPPORT and link OpenSSL.

#include <cstdlib>
#include <memory>
#include <regex>
#include <string>

#include <httplib.h>

#include "alfa/error.hpp"
#include "alfa/prompts.hpp"

namespace alfa {

struct Endpoint {
  std::string scheme_host_port;  // "http://host:port", as httplib::Client expects
  std::string path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?)://([^/:]+)(:(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) fail(ErrorCode::invalid_argument, "llm endpoint '" + url + "' is not an http(s) URL");
  Endpoint e;
  e.scheme_host_port = m[1].str() + "://" + m[2].str() + (m[4].matched ? ":" + m[4].str() : "");
  e.path = m[5].matched ? m[5].str() : "/";
  return e;
}

class HttpTransport : public LlmTransport {
 public:
  explicit HttpTransport(const LlmConfig& config) : endpoint_(parse_endpoint(config.endpoint)) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (endpoint_.scheme_host_port.rfind("https", 0) == 0)
      fail(ErrorCode::invalid_argument, "this build has no TLS support; use an http:// endpoint");
#endif
    client_ = std::make_unique<httplib::Client>(endpoint_.scheme_host_port);
    client_->set_connection_timeout(config.timeout_s, 0);
    client_->set_read_timeout(config.timeout_s, 0);
    client_->set_write_timeout(config.timeout_s, 0);
    if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) client_->set_bearer_token_auth(key);
  }

  std::string post(const std::string& json_body) override {
    auto res = client_->Post(endpoint_.path, json_body, "application/json");
    if (!res) fail(ErrorCode::network, "request to " + endpoint_.scheme_host_port + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      fail(ErrorCode::network, "llm endpoint answered HTTP " + std::to_string(res->status));
    return res->body;
  }

 private:
  Endpoint endpoint_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace alfa
