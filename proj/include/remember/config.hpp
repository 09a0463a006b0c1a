#pragma once

// Service configuration: a commented INI file plus environment overrides.
// See docs/config.md.

#include "remember/fingerprint.hpp"
#include "remember/webfetch.hpp"
#include "remember/wi.hpp"
#include "remember/wi_http.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace remember::cfg {

struct MemberConfig {
    wi::MemberDescriptor descriptor;
    bool http = false; // false: simulated member
    wi::HttpTemplates templates;
};

struct ServiceConfig {
    std::string listen = "127.0.0.1:8080";
    std::filesystem::path storage = "remember-data";
    std::vector<MemberConfig> members;
    fp::Thresholds thresholds;
    size_t max_in_flight = web::kDefaultMaxInFlight;
    web::Duration deadline = web::kDefaultDeadline;
    std::optional<std::filesystem::path> web_script;
    std::string clock = "wall"; // "wall" or an RFC-3339 start time for a simulated clock
};

/// Members used when the config declares none: one simulated archive, one
/// cache and one search engine.
std::vector<MemberConfig> default_members();

/// Error{ConfigError} on syntax errors or bad values.
ServiceConfig load_config(const std::filesystem::path& path);
ServiceConfig parse_config(const std::string& text);

/// REMEMBER_LISTEN and REMEMBER_STORAGE replace listen and storage.
void apply_env(ServiceConfig& config);

/// Empty when valid. Creates the storage directory to check writability.
std::vector<std::string> validate(const ServiceConfig& config);

/// host and port of config.listen ("host:port" or ":port").
std::pair<std::string, int> split_listen(const std::string& listen);

} // namespace remember::cfg
