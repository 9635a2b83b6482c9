#include "sathi/http_client.hpp"

#include <httplib.h>

namespace sathi::http {

Url parse_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error("URL must be absolute: '" + std::string(url) + "'");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error("unsupported URL scheme: '" + std::string(url) + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Url out;
  if (path_start == std::string_view::npos) {
    out.origin = std::string(url);
    out.path = "/";
  } else {
    out.origin = std::string(url.substr(0, path_start));
    out.path = std::string(url.substr(path_start));
  }
  if (out.origin.size() <= scheme_end + 3) throw Error("URL has no host: '" + std::string(url) + "'");
  return out;
}

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         std::chrono::milliseconds timeout, const Headers& headers) {
  const Url u = parse_url(url);
  httplib::Client client(u.origin);
  const auto secs = timeout.count() / 1000;
  const auto usecs = (timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(u.path, h, body.dump(), "application/json");
  if (!res) {
    throw HttpError("request to " + url + " failed: " + httplib::to_string(res.error()), 0);
  }
  if (res->status < 200 || res->status >= 300) {
    throw HttpError("request to " + url + " returned HTTP " + std::to_string(res->status),
                    res->status);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw HttpError("response from " + url + " is not JSON: " + e.what(), res->status);
  }
}

}  // namespace sathi::http
