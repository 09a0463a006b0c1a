#include "remember/uri.hpp"

#include <algorithm>
#include <cctype>

namespace remember {

namespace {

size_t scheme_end(std::string_view uri) noexcept {
    if (uri.empty() || !std::isalpha(static_cast<unsigned char>(uri[0]))) {
        return std::string_view::npos;
    }
    for (size_t i = 1; i < uri.size(); ++i) {
        const auto c = static_cast<unsigned char>(uri[i]);
        if (c == ':') {
            return i;
        }
        if (!std::isalnum(c) && c != '+' && c != '-' && c != '.') {
            return std::string_view::npos;
        }
    }
    return std::string_view::npos;
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

} // namespace

bool is_absolute_uri(std::string_view uri) noexcept {
    const auto end = scheme_end(uri);
    if (end == std::string_view::npos || end + 1 >= uri.size()) {
        return false;
    }
    return std::none_of(uri.begin(), uri.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '<' || c == '>' || c == '"';
    });
}

std::string normalize_uri(std::string_view uri) {
    std::string out(uri.substr(0, uri.find('#')));
    const auto end = scheme_end(out);
    if (end == std::string::npos) {
        return out;
    }
    std::transform(out.begin(), out.begin() + end, out.begin(), lower);
    if (out.compare(end, 3, "://") == 0) {
        const size_t host_start = end + 3;
        size_t host_end = out.find_first_of("/?", host_start);
        if (host_end == std::string::npos) {
            host_end = out.size();
        }
        // userinfo is left alone
        const size_t at = out.rfind('@', host_end);
        const size_t from = (at != std::string::npos && at >= host_start) ? at + 1 : host_start;
        std::transform(out.begin() + from, out.begin() + host_end, out.begin() + from, lower);
    }
    return out;
}

} // namespace remember
