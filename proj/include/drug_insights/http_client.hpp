// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace drug_insights {

/// An endpoint URL split into the part httplib connects to and the path prefix,
/// e.g. "https://api.example.com/v1" -> {"https://api.example.com", "/v1"}.
struct HttpEndpoint {
    std::string origin;
    std::string base_path;
};

HttpEndpoint parse_endpoint(std::string_view url);

/// Value of an environment variable, or nullopt when unset or empty.
std::optional<std::string> env_secret(const char* name);

/// POSTs JSON to base_path + path. Throws ProviderError with the HTTP status
/// (0 when there was no response) for any non-2xx reply or unparseable body.
nlohmann::json post_json(const HttpEndpoint& endpoint, std::string_view path,
                         const nlohmann::json& body, const std::optional<std::string>& bearer,
                         double timeout_seconds);

}  // namespace drug_insights
