#pragma once

// HTTP API over the curator, and the wiring that builds a curator from a
// configuration. Endpoint schemas are in docs/api.md.

#include "remember/config.hpp"
#include "remember/curator.hpp"
#include "remember/error.hpp"

#include <functional>
#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace remember::svc {

/// Everything a configured process needs, owned together.
struct Runtime {
    std::unique_ptr<Clock> clock;
    std::unique_ptr<web::Fetcher> fetcher;
    std::unique_ptr<wi::Registry> registry;
    std::unique_ptr<cur::Curator> curator;
    std::filesystem::path wi_state_dir; // simulated member snapshots

    /// Persists simulated member state.
    void save() const;
};

/// Error{ConfigError} when the config does not validate.
Runtime build_runtime(const cfg::ServiceConfig& config);

int http_status_for(Errc code) noexcept;

class ApiServer {
public:
    /// on_mutation runs after every successful state-changing request.
    explicit ApiServer(cur::Curator& curator, std::function<void()> on_mutation = {});
    ~ApiServer();

    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen_after_bind();
    void stop();

    httplib::Server& server() noexcept { return *server_; }

private:
    void routes();

    cur::Curator& curator_;
    std::function<void()> on_mutation_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace remember::svc
