#pragma once

#include <atomic>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace remember {

using Timestamp = std::chrono::sys_seconds;

/// RFC-3339 with a 'Z' suffix, e.g. 2007-10-10T18:30:02Z.
std::string format_rfc3339(Timestamp t);

/// Accepts fractional seconds (truncated) and numeric offsets; returns UTC.
std::optional<Timestamp> parse_rfc3339(std::string_view text);

/// Wayback-style 14-digit form, e.g. 20070106000000.
std::string format_compact(Timestamp t);

/// Years 0000..9999 only.
bool is_representable(Timestamp t) noexcept;

class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

/// Injected simulation clock; never advances on its own.
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start) : seconds_(start.time_since_epoch().count()) {}

    Timestamp now() const override {
        return Timestamp{std::chrono::seconds{seconds_.load()}};
    }
    void set(Timestamp t) { seconds_.store(t.time_since_epoch().count()); }
    void advance(std::chrono::seconds d) { seconds_.fetch_add(d.count()); }

private:
    std::atomic<std::chrono::seconds::rep> seconds_;
};

} // namespace remember
