#pragma once

// Transport over a real HTTP(S) endpoint. Define CPPHTTPLIB_OPENSSL_SUPPORT
// and link OpenSSL::SSL for https URLs.

#include <httplib.h>

#include <chrono>
#include <string>

#include "regionkit/core/error.hpp"
#include "regionkit/genpipe/client.hpp"

namespace regionkit::genpipe {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// POSTs JSON bodies to `url`, with a bearer credential when non-empty.
inline Transport http_transport(const std::string& url, const std::string& bearer_token,
                                std::chrono::seconds timeout = std::chrono::seconds(120)) {
  Endpoint ep = split_url(url);
  if (!httplib::Client(ep.origin).is_valid()) {
    throw ConfigError("unsupported endpoint (https needs OpenSSL): " + url);
  }
  // One connection per call keeps concurrent workers independent.
  return [ep, bearer_token, timeout](const std::string& body) {
    httplib::Client client(ep.origin);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_connection_timeout(std::chrono::seconds(30));
    if (!bearer_token.empty()) client.set_bearer_token_auth(bearer_token);
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
    return HttpResult{res->status, res->body};
  };
}

}  // namespace regionkit::genpipe
