#pragma once

#include <string>
#include <string_view>

namespace remember {

/// scheme ":" hier-part, scheme per RFC 3986 and a non-empty remainder.
bool is_absolute_uri(std::string_view uri) noexcept;

/// Lowercases scheme and host and drops any fragment.
std::string normalize_uri(std::string_view uri);

} // namespace remember
