#include "remember/webfetch.hpp"

#include "httplib.h"

#include <cstdlib>

namespace remember::web {

namespace {

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string scheme;
    std::string host;
    std::string target; // path + query, at least "/"
};

std::optional<SplitUrl> split_url(const std::string& uri) {
    const auto sep = uri.find("://");
    if (sep == std::string::npos) {
        return std::nullopt;
    }
    SplitUrl out;
    out.scheme = uri.substr(0, sep);
    for (auto& c : out.scheme) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (out.scheme != "http" && out.scheme != "https") {
        return std::nullopt;
    }
    const auto path_start = uri.find_first_of("/?#", sep + 3);
    const std::string authority =
        uri.substr(sep + 3, path_start == std::string::npos ? std::string::npos : path_start - sep - 3);
    if (authority.empty()) {
        return std::nullopt;
    }
    out.origin = out.scheme + "://" + authority;
    const auto colon = authority.rfind(':');
    out.host = colon == std::string::npos || authority.back() == ']' ? authority : authority.substr(0, colon);
    std::string rest = path_start == std::string::npos ? "" : uri.substr(path_start);
    rest = rest.substr(0, rest.find('#'));
    if (rest.empty() || rest[0] != '/') {
        rest = "/" + rest;
    }
    out.target = rest;
    return out;
}

std::string resolve_location(const SplitUrl& base, const std::string& location) {
    if (location.find("://") != std::string::npos) {
        return location;
    }
    if (location.rfind("//", 0) == 0) {
        return base.scheme + ":" + location;
    }
    if (!location.empty() && location[0] == '/') {
        return base.origin + location;
    }
    const auto path = base.target.substr(0, base.target.find('?'));
    return base.origin + path.substr(0, path.rfind('/') + 1) + location;
}

const char* env_any(const char* lower, const char* upper) {
    if (const char* v = std::getenv(lower); v && *v) {
        return v;
    }
    if (const char* v = std::getenv(upper); v && *v) {
        return v;
    }
    return nullptr;
}

bool bypass_proxy(const std::string& host) {
    const char* no_proxy = env_any("no_proxy", "NO_PROXY");
    if (!no_proxy) {
        return false;
    }
    std::string list(no_proxy);
    size_t i = 0;
    while (i <= list.size()) {
        auto comma = list.find(',', i);
        if (comma == std::string::npos) {
            comma = list.size();
        }
        std::string item = list.substr(i, comma - i);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (item == "*") {
            return true;
        }
        if (!item.empty()) {
            if (item[0] == '.') {
                item.erase(0, 1);
            }
            if (host == item ||
                (host.size() > item.size() && host.compare(host.size() - item.size(), item.size(), item) == 0 &&
                 host[host.size() - item.size() - 1] == '.')) {
                return true;
            }
        }
        i = comma + 1;
    }
    return false;
}

void apply_proxy(httplib::Client& client, const SplitUrl& url) {
    const char* proxy = url.scheme == "https" ? env_any("https_proxy", "HTTPS_PROXY")
                                              : env_any("http_proxy", "HTTP_PROXY");
    if (!proxy || bypass_proxy(url.host)) {
        return;
    }
    std::string p(proxy);
    if (const auto sep = p.find("://"); sep != std::string::npos) {
        p = p.substr(sep + 3);
    }
    p = p.substr(0, p.find('/'));
    const auto colon = p.rfind(':');
    if (colon == std::string::npos) {
        client.set_proxy(p, 80);
    } else {
        client.set_proxy(p.substr(0, colon), std::atoi(p.c_str() + colon + 1));
    }
}

} // namespace

HttpFetcher::HttpFetcher(const Clock& clock, std::string user_agent)
    : clock_(clock), user_agent_(std::move(user_agent)) {}

FetchOutcome HttpFetcher::fetch(const std::string& uri, Duration deadline) {
    using steady = std::chrono::steady_clock;
    const auto started = steady::now();
    const Timestamp at = clock_.now();
    std::string current = uri;
    for (int hops = 0;; ++hops) {
        const auto url = split_url(current);
        if (!url) {
            return FetchOutcome::error("unsupported URI " + current, at);
        }
        const auto remaining =
            deadline - std::chrono::duration_cast<Duration>(steady::now() - started);
        if (remaining <= Duration::zero()) {
            return FetchOutcome::error("timeout", at);
        }
        httplib::Client client(url->origin);
        client.set_follow_location(false);
        client.set_connection_timeout(remaining);
        client.set_read_timeout(remaining);
        client.set_write_timeout(remaining);
        apply_proxy(client, *url);
        auto res = client.Get(url->target, {{"User-Agent", user_agent_}});
        if (std::chrono::duration_cast<Duration>(steady::now() - started) > deadline) {
            return FetchOutcome::error("timeout", at);
        }
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
                return FetchOutcome::error("timeout", at);
            }
            return FetchOutcome::error(httplib::to_string(err), at);
        }
        const int status = res->status;
        if (status >= 300 && status < 400 && res->has_header("Location")) {
            if (hops >= kMaxRedirects) {
                return FetchOutcome::error("too many redirects", at);
            }
            current = resolve_location(*url, res->get_header_value("Location"));
            continue;
        }
        if (status == 404 || status == 410) {
            return FetchOutcome::not_found(at);
        }
        if (status >= 200 && status < 300) {
            return FetchOutcome::ok(std::move(res->body), res->get_header_value("Content-Type"), at);
        }
        return FetchOutcome::error("HTTP " + std::to_string(status), at);
    }
}

} // namespace remember::web
