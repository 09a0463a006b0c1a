#pragma once

#include "remember/time.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace remember::web {

using Duration = std::chrono::milliseconds;

inline constexpr Duration kDefaultDeadline = std::chrono::seconds{10};
inline constexpr size_t kDefaultMaxInFlight = 8;
inline constexpr int kMaxRedirects = 5;

enum class FetchKind { Ok, NotFound, Error };

std::string_view fetch_kind_name(FetchKind kind) noexcept;

struct FetchOutcome {
    FetchKind kind = FetchKind::Error;
    std::string content;    // Ok only
    std::string media_type; // Ok only
    Timestamp fetched_at{};
    std::string detail;     // Error only

    static FetchOutcome ok(std::string content, std::string media_type, Timestamp at);
    static FetchOutcome not_found(Timestamp at);
    static FetchOutcome error(std::string detail, Timestamp at);

    bool is_ok() const noexcept { return kind == FetchKind::Ok; }
    bool operator==(const FetchOutcome&) const = default;
};

/// Live-web access. Implementations never throw for per-request failures.
class Fetcher {
public:
    virtual ~Fetcher() = default;
    virtual FetchOutcome fetch(const std::string& uri, Duration deadline) = 0;
};

using FetchCallback = std::function<void(const std::string& uri, const FetchOutcome&)>;

/// Fetches every distinct URI with at most max_in_flight requests
/// outstanding. on_result, when set, runs on a worker thread as each
/// request finishes. Throws Error{InvalidArgument} when max_in_flight is 0.
std::map<std::string, FetchOutcome> fetch_all(Fetcher& fetcher, const std::vector<std::string>& uris,
                                              size_t max_in_flight, Duration deadline,
                                              const FetchCallback& on_result = {});

// --- simulated live web ------------------------------------------------------

struct Serve {
    std::string content;
    std::string media_type;
    Duration latency{0}; // simulated response time

    bool operator==(const Serve&) const = default;
};
struct Gone {
    bool operator==(const Gone&) const = default;
};
struct Redirect {
    std::string target;

    bool operator==(const Redirect&) const = default;
};
using Behavior = std::variant<Serve, Gone, Redirect>;

struct TimelineStep {
    Timestamp effective_from{};
    Behavior behavior;
};

struct ScriptedResource {
    std::string uri;
    std::vector<TimelineStep> timeline; // strictly increasing effective_from
};

/// Scripted web evaluated at an injected clock. Outcomes are a pure
/// function of (script, clock). With a non-zero time_scale each request also
/// sleeps min(latency, deadline) * time_scale of real time so that
/// concurrency can be observed.
class SimulatedWeb final : public Fetcher {
public:
    explicit SimulatedWeb(const Clock& clock, double time_scale = 0.0);

    /// Merges into any existing script for the same URI; throws
    /// Error{InvalidArgument} when the merged timeline is not strictly ordered.
    void add(ScriptedResource resource);

    /// Convenience for one step.
    void script(const std::string& uri, Timestamp from, Behavior behavior);

    /// JSON Lines: {"uri","effective_from","behavior":"serve|gone|redirect",
    /// "media_type","content"|"payload","target","latency_ms"}. payload paths
    /// are relative to the script file.
    static void load_script(SimulatedWeb& web, const std::filesystem::path& path);

    FetchOutcome fetch(const std::string& uri, Duration deadline) override;

    /// Highest number of concurrent fetch() calls observed.
    size_t max_observed_in_flight() const noexcept { return max_in_flight_.load(); }
    size_t total_requests() const noexcept { return requests_.load(); }
    void reset_probe();

private:
    std::optional<Behavior> active(const std::string& uri, Timestamp at) const;

    const Clock& clock_;
    double time_scale_;
    mutable std::mutex mutex_;
    std::map<std::string, std::vector<TimelineStep>> script_;
    std::atomic<size_t> in_flight_{0};
    std::atomic<size_t> max_in_flight_{0};
    std::atomic<size_t> requests_{0};
};

// --- real adapter ---------------------------------------------------------------

/// One GET per hop following <= kMaxRedirects redirects. Honors http_proxy /
/// https_proxy / no_proxy (and upper-case forms).
class HttpFetcher final : public Fetcher {
public:
    explicit HttpFetcher(const Clock& clock, std::string user_agent = "ReMember/1.0");

    FetchOutcome fetch(const std::string& uri, Duration deadline) override;

private:
    const Clock& clock_;
    std::string user_agent_;
};

} // namespace remember::web
