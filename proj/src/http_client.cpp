// SPDX-License-Identifier: Apache-2.0
#include "drug_insights/http_client.hpp"

#include <cstdlib>

#include "httplib.h"

#include "drug_insights/errors.hpp"

namespace drug_insights {

HttpEndpoint parse_endpoint(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw Error("endpoint URL '" + std::string(url) + "' has no scheme");
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw Error("endpoint URL '" + std::string(url) + "' must use http or https");
    auto path_start = url.find('/', scheme_end + 3);
    HttpEndpoint ep;
    ep.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) ep.base_path = std::string(url.substr(path_start));
    while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
    return ep;
}

std::optional<std::string> env_secret(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

nlohmann::json post_json(const HttpEndpoint& endpoint, std::string_view path, const nlohmann::json& body,
                         const std::optional<std::string>& bearer, double timeout_seconds) {
    httplib::Client client(endpoint.origin);
    auto seconds = static_cast<time_t>(timeout_seconds);
    auto usec = static_cast<time_t>((timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client.set_connection_timeout(seconds, usec);
    client.set_read_timeout(seconds, usec);
    client.set_write_timeout(seconds, usec);

    httplib::Headers headers;
    if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
    const std::string full_path = endpoint.base_path + std::string(path);
    auto res = client.Post(full_path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProviderError(0, "POST " + endpoint.origin + full_path + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError(res->status, "POST " + endpoint.origin + full_path + " returned HTTP " +
                                             std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error&) {
        throw ProviderError(res->status, "POST " + endpoint.origin + full_path + " returned invalid JSON");
    }
}

}  // namespace drug_insights
