#include "remember/wi_http.hpp"

#include "remember/error.hpp"

#include "httplib.h"

#include <algorithm>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace remember::wi {

namespace {

std::string percent_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += kHex[c >> 4];
            out += kHex[c & 15];
        }
    }
    return out;
}

std::pair<std::string, std::string> split_origin(const std::string& url) {
    const auto sep = url.find("://");
    if (sep == std::string::npos) {
        throw Error(Errc::InvalidArgument, "not an http URL: " + url);
    }
    const auto slash = url.find('/', sep + 3);
    if (slash == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

} // namespace

std::string expand_template(std::string_view tmpl, std::string_view uri, std::string_view timestamp,
                            std::string_view query) {
    std::string out;
    size_t i = 0;
    while (i < tmpl.size()) {
        auto try_sub = [&](std::string_view name, std::string_view value) {
            if (tmpl.substr(i, name.size()) == name) {
                out += value;
                i += name.size();
                return true;
            }
            return false;
        };
        if (try_sub("{uri}", percent_encode(uri)) || try_sub("{raw_uri}", uri) || try_sub("{timestamp}", timestamp) ||
            try_sub("{query}", percent_encode(query))) {
            continue;
        }
        out += tmpl[i++];
    }
    return out;
}

HttpMember::HttpMember(MemberDescriptor descriptor, HttpTemplates templates,
                       std::chrono::milliseconds timeout)
    : Member(std::move(descriptor)), templates_(std::move(templates)), timeout_(timeout) {}

namespace {

httplib::Result do_request(const std::string& url, std::chrono::milliseconds timeout,
                           const std::string& member_id, const std::string* body = nullptr,
                           const std::string& media_type = {}) {
    const auto [origin, target] = split_origin(url);
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto res = body ? cli.Post(target, *body, media_type.empty() ? "application/octet-stream" : media_type)
                    : cli.Get(target);
    if (!res) {
        throw Error(Errc::MemberUnavailable,
                    "member '" + member_id + "': " + httplib::to_string(res.error()));
    }
    if (res->status >= 500) {
        throw Error(Errc::MemberUnavailable,
                    "member '" + member_id + "': HTTP " + std::to_string(res->status));
    }
    return res;
}

} // namespace

WIRecord HttpMember::push(const std::string& original_uri, const std::string& content,
                          const std::string& media_type, Timestamp at) {
    require(Capability::Push);
    if (templates_.push.empty()) {
        throw Error(Errc::CapabilityMissing, "member '" + id() + "' has no push template");
    }
    const auto stamp = format_compact(at);
    auto res = do_request(expand_template(templates_.push, original_uri, stamp, ""), timeout_, id(),
                          &content, media_type);
    if (res->status / 100 != 2) {
        throw Error(Errc::MemberUnavailable,
                    "member '" + id() + "' rejected push: HTTP " + std::to_string(res->status));
    }
    std::string archived = res->get_header_value("Content-Location");
    if (archived.empty()) {
        archived = res->get_header_value("Location");
    }
    if (archived.empty()) {
        archived = templates_.replay.empty()
                       ? archived_uri_for(id(), at, original_uri)
                       : expand_template(templates_.replay, original_uri, stamp, "");
    }
    return {id(), original_uri, archived, at, content, media_type};
}

std::optional<WIRecord> HttpMember::lookup(const std::string& uri) {
    require(Capability::Lookup);
    if (templates_.lookup.empty()) {
        throw Error(Errc::CapabilityMissing, "member '" + id() + "' has no lookup template");
    }
    const auto url = expand_template(templates_.lookup, uri, "", "");
    auto res = do_request(url, timeout_, id());
    if (res->status == 404 || res->status == 410) {
        return std::nullopt;
    }
    if (res->status / 100 != 2) {
        throw Error(Errc::MemberUnavailable,
                    "member '" + id() + "' lookup: HTTP " + std::to_string(res->status));
    }
    Timestamp captured{};
    if (const auto md = res->get_header_value("Memento-Datetime"); !md.empty()) {
        std::tm tm{};
        std::istringstream in(md);
        in >> std::get_time(&tm, "%a, %d %b %Y %H:%M:%S");
        if (!in.fail()) {
            using namespace std::chrono;
            const auto day = year{tm.tm_year + 1900} / month{unsigned(tm.tm_mon + 1)} / unsigned(tm.tm_mday);
            captured = sys_days{day} + hours{tm.tm_hour} + minutes{tm.tm_min} + seconds{tm.tm_sec};
        }
    }
    return WIRecord{id(), uri, url, captured, res->body, res->get_header_value("Content-Type")};
}

std::vector<WIRecord> HttpMember::visible_records(const std::string& uri, Timestamp now) {
    require(Capability::Holdings);
    if (templates_.holdings.empty()) {
        throw Error(Errc::CapabilityMissing, "member '" + id() + "' has no holdings template");
    }
    auto res = do_request(expand_template(templates_.holdings, uri, "", ""), timeout_, id());
    std::vector<WIRecord> out;
    if (res->status == 404) {
        return out;
    }
    std::istringstream lines(res->body);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string urlkey, stamp, original, mime;
        if (!(fields >> urlkey >> stamp >> original)) {
            continue;
        }
        fields >> mime;
        if (stamp.size() != 14) {
            continue;
        }
        const auto iso = stamp.substr(0, 4) + "-" + stamp.substr(4, 2) + "-" + stamp.substr(6, 2) + "T" +
                         stamp.substr(8, 2) + ":" + stamp.substr(10, 2) + ":" + stamp.substr(12, 2) + "Z";
        const auto t = parse_rfc3339(iso);
        if (!t || *t + descriptor().lag > now) {
            continue;
        }
        const auto archived = templates_.replay.empty() ? archived_uri_for(id(), *t, original)
                                                        : expand_template(templates_.replay, original, stamp, "");
        out.push_back({id(), original, archived, *t, {}, mime});
    }
    std::sort(out.begin(), out.end(),
              [](const WIRecord& a, const WIRecord& b) { return a.captured_at > b.captured_at; });
    return out;
}

std::vector<std::string> HttpMember::search(const std::string& query) {
    require(Capability::Search);
    if (templates_.search.empty()) {
        throw Error(Errc::CapabilityMissing, "member '" + id() + "' has no search template");
    }
    auto res = do_request(expand_template(templates_.search, "", "", query), timeout_, id());
    std::vector<std::string> out;
    if (res->status / 100 != 2) {
        return out;
    }
    std::istringstream lines(res->body);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

} // namespace remember::wi
