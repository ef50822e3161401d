#pragma once

// HTTP API surface, independent of any transport. Every call must run on
// the kernel thread at a tick boundary; the server guarantees that by
// routing requests through the kernel's command queue.

#include <map>
#include <optional>
#include <string>

#include "iotarch/platform.hpp"

namespace iotarch {

struct ApiRequest {
  std::string method;
  std::string path;  // without the query string
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  Json body;
};

/// Splits "/a/b?x=1&y=2" into path and decoded query parameters.
ApiRequest make_request(const std::string& method, const std::string& target, std::string body = {});

/// {code, message, position?} with the HTTP status for the code.
ApiResponse error_response(const Error& e);
int http_status(Errc code) noexcept;

class ApiRouter {
 public:
  explicit ApiRouter(Platform& platform) : platform_(platform) {}

  ApiResponse handle(const ApiRequest& request);

 private:
  ApiResponse route(const ApiRequest& request);

  Platform& platform_;
};

}  // namespace iotarch
