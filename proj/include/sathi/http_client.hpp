#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sathi/common.hpp"

namespace sathi::http {

/// Network failure, timeout, non-2xx status or a non-JSON body.
class HttpError : public Error {
 public:
  HttpError(const std::string& what, int status) : Error(what), status_(status) {}
  /// 0 when no HTTP response was received.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

/// Splits an absolute http(s) URL. Throws Error when malformed.
Url parse_url(std::string_view url);

using Headers = std::vector<std::pair<std::string, std::string>>;

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         std::chrono::milliseconds timeout, const Headers& headers = {});

}  // namespace sathi::http
