#include "remember/error.hpp"
#include "remember/webfetch.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>
#include <thread>

namespace remember::web {

namespace {

class InFlightProbe {
public:
    InFlightProbe(std::atomic<size_t>& in_flight, std::atomic<size_t>& max_seen)
        : in_flight_(in_flight) {
        const size_t now = ++in_flight_;
        size_t prev = max_seen.load();
        while (prev < now && !max_seen.compare_exchange_weak(prev, now)) {
        }
    }
    ~InFlightProbe() { --in_flight_; }
    InFlightProbe(const InFlightProbe&) = delete;
    InFlightProbe& operator=(const InFlightProbe&) = delete;

private:
    std::atomic<size_t>& in_flight_;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::InvalidArgument, "cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

SimulatedWeb::SimulatedWeb(const Clock& clock, double time_scale)
    : clock_(clock), time_scale_(time_scale) {}

void SimulatedWeb::add(ScriptedResource resource) {
    std::lock_guard lock(mutex_);
    auto merged = script_[resource.uri];
    for (auto& step : resource.timeline) {
        merged.push_back(std::move(step));
    }
    std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
        return a.effective_from < b.effective_from;
    });
    for (size_t i = 1; i < merged.size(); ++i) {
        if (merged[i].effective_from == merged[i - 1].effective_from) {
            throw Error(Errc::InvalidArgument, "timeline for " + resource.uri +
                                                   " has two steps at " +
                                                   format_rfc3339(merged[i].effective_from));
        }
    }
    script_[resource.uri] = std::move(merged);
}

void SimulatedWeb::script(const std::string& uri, Timestamp from, Behavior behavior) {
    add({uri, {{from, std::move(behavior)}}});
}

void SimulatedWeb::load_script(SimulatedWeb& web, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::InvalidArgument, "cannot read scenario script " + path.string());
    }
    const auto base = path.parent_path();
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const std::string where = path.string() + ":" + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::InvalidArgument, where + ": " + e.what());
        }
        try {
            const auto uri = rec.at("uri").get<std::string>();
            const auto from = parse_rfc3339(rec.at("effective_from").get<std::string>());
            if (!from) {
                throw Error(Errc::InvalidArgument, where + ": bad effective_from");
            }
            const auto kind = rec.at("behavior").get<std::string>();
            Behavior behavior;
            if (kind == "serve") {
                Serve serve;
                serve.media_type = rec.value("media_type", "text/html");
                if (rec.contains("payload")) {
                    serve.content = read_file(base / rec.at("payload").get<std::string>());
                } else {
                    serve.content = rec.value("content", "");
                }
                serve.latency = Duration{rec.value("latency_ms", 0)};
                behavior = std::move(serve);
            } else if (kind == "gone") {
                behavior = Gone{};
            } else if (kind == "redirect") {
                behavior = Redirect{rec.at("target").get<std::string>()};
            } else {
                throw Error(Errc::InvalidArgument, where + ": unknown behavior '" + kind + "'");
            }
            web.script(uri, *from, std::move(behavior));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::InvalidArgument, where + ": " + e.what());
        }
    }
}

void SimulatedWeb::reset_probe() {
    max_in_flight_ = in_flight_.load();
    requests_ = 0;
}

std::optional<Behavior> SimulatedWeb::active(const std::string& uri, Timestamp at) const {
    std::lock_guard lock(mutex_);
    const auto it = script_.find(uri);
    if (it == script_.end()) {
        return std::nullopt;
    }
    const Behavior* found = nullptr;
    for (const auto& step : it->second) {
        if (step.effective_from > at) {
            break;
        }
        found = &step.behavior;
    }
    if (found == nullptr) {
        return std::nullopt;
    }
    return *found;
}

FetchOutcome SimulatedWeb::fetch(const std::string& uri, Duration deadline) {
    ++requests_;
    InFlightProbe probe(in_flight_, max_in_flight_);
    const Timestamp now = clock_.now();
    auto spend = [&](Duration simulated) {
        if (time_scale_ > 0.0 && simulated.count() > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
                static_cast<double>(simulated.count()) * time_scale_));
        }
    };
    std::string current = uri;
    for (int hops = 0;; ++hops) {
        const auto behavior = active(current, now);
        if (!behavior || std::holds_alternative<Gone>(*behavior)) {
            return FetchOutcome::not_found(now);
        }
        if (const auto* redirect = std::get_if<Redirect>(&*behavior)) {
            if (hops >= kMaxRedirects) {
                return FetchOutcome::error("too many redirects", now);
            }
            current = redirect->target;
            continue;
        }
        const auto& serve = std::get<Serve>(*behavior);
        if (serve.latency > deadline) {
            spend(deadline);
            return FetchOutcome::error("timeout", now);
        }
        spend(serve.latency);
        return FetchOutcome::ok(serve.content, serve.media_type, now);
    }
}

} // namespace remember::web
