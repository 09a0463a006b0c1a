#pragma once

// JSON encodings shared by persistence, the HTTP API and the CLI.
// Timestamps are RFC-3339 strings; byte content is base64.

#include "remember/fingerprint.hpp"
#include "remember/ore.hpp"
#include "remember/time.hpp"
#include "remember/wi.hpp"

#include "json.hpp"

namespace remember {

nlohmann::json timestamp_json(Timestamp t);
/// Throws Error{InvalidArgument} on a malformed value.
Timestamp timestamp_from_json(const nlohmann::json& j);

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<T>();
}

} // namespace remember

namespace remember::ore {

void to_json(nlohmann::json& j, const AREntry& e);
void from_json(const nlohmann::json& j, AREntry& e);
void to_json(nlohmann::json& j, const ResourceMapDoc& d);
void from_json(const nlohmann::json& j, ResourceMapDoc& d);
void to_json(nlohmann::json& j, const ChangeRecord& c);
void from_json(const nlohmann::json& j, ChangeRecord& c);

} // namespace remember::ore

namespace remember::fp {

void to_json(nlohmann::json& j, const WICopy& c);
void from_json(const nlohmann::json& j, WICopy& c);
void to_json(nlohmann::json& j, const Fingerprint& f);
void from_json(const nlohmann::json& j, Fingerprint& f);

} // namespace remember::fp

namespace remember::wi {

void to_json(nlohmann::json& j, const WIRecord& r);
void from_json(const nlohmann::json& j, WIRecord& r);
void to_json(nlohmann::json& j, const RelocationAid& a);

} // namespace remember::wi
