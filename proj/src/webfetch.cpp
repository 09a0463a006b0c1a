#include "remember/webfetch.hpp"

#include "remember/error.hpp"

#include <thread>

namespace remember::web {

std::string_view fetch_kind_name(FetchKind kind) noexcept {
    switch (kind) {
    case FetchKind::Ok: return "Ok";
    case FetchKind::NotFound: return "NotFound";
    case FetchKind::Error: return "Error";
    }
    return "";
}

FetchOutcome FetchOutcome::ok(std::string content, std::string media_type, Timestamp at) {
    FetchOutcome o;
    o.kind = FetchKind::Ok;
    o.content = std::move(content);
    o.media_type = media_type.empty() ? "application/octet-stream" : std::move(media_type);
    o.fetched_at = at;
    return o;
}

FetchOutcome FetchOutcome::not_found(Timestamp at) {
    FetchOutcome o;
    o.kind = FetchKind::NotFound;
    o.fetched_at = at;
    return o;
}

FetchOutcome FetchOutcome::error(std::string detail, Timestamp at) {
    FetchOutcome o;
    o.kind = FetchKind::Error;
    o.detail = std::move(detail);
    o.fetched_at = at;
    return o;
}

std::map<std::string, FetchOutcome> fetch_all(Fetcher& fetcher, const std::vector<std::string>& uris,
                                              size_t max_in_flight, Duration deadline,
                                              const FetchCallback& on_result) {
    if (max_in_flight == 0) {
        throw Error(Errc::InvalidArgument, "max_in_flight must be at least 1");
    }
    std::vector<std::string> distinct;
    {
        std::map<std::string, bool> seen;
        for (const auto& u : uris) {
            if (seen.emplace(u, true).second) {
                distinct.push_back(u);
            }
        }
    }
    std::vector<FetchOutcome> results(distinct.size());
    std::atomic<size_t> next{0};
    std::mutex callback_mutex;
    auto worker = [&] {
        for (size_t i = next++; i < distinct.size(); i = next++) {
            try {
                results[i] = fetcher.fetch(distinct[i], deadline);
            } catch (const std::exception& e) {
                results[i] = FetchOutcome::error(e.what(), Timestamp{});
            }
            if (on_result) {
                std::lock_guard lock(callback_mutex);
                on_result(distinct[i], results[i]);
            }
        }
    };
    {
        const size_t workers = std::min(max_in_flight, distinct.size());
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    std::map<std::string, FetchOutcome> out;
    for (size_t i = 0; i < distinct.size(); ++i) {
        out.emplace(distinct[i], std::move(results[i]));
    }
    return out;
}

} // namespace remember::web
