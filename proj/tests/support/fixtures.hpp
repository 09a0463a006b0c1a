#pragma once

// Shared test fixtures: sample ReMs, scripted webs and a wired-up curator.

#include "remember/curator.hpp"
#include "remember/ore.hpp"
#include "remember/time.hpp"
#include "remember/webfetch.hpp"
#include "remember/wi.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fixtures {

using remember::Timestamp;

std::filesystem::path data_dir();
std::string read_file(const std::filesystem::path& p);
std::string arxiv_rem_text();

Timestamp at(const char* rfc3339);

struct TempDir {
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::filesystem::path path;
};

/// n pronounceable non-stopword words, all starting with `initial`; lists
/// with different initials are disjoint.
std::vector<std::string> vocabulary(char initial, size_t n, unsigned seed = 1);
/// `words` tokens drawn from vocab, space separated.
std::string prose(std::mt19937& rng, size_t words, const std::vector<std::string>& vocab);
std::string html_page(const std::string& title, const std::string& body);

struct ScriptStep {
    std::string uri;
    Timestamp from{};
    remember::web::Behavior behavior;
};

void apply(remember::web::SimulatedWeb& web, const std::vector<ScriptStep>& steps);
/// JSON Lines form accepted by SimulatedWeb::load_script.
void write_script(const std::filesystem::path& path, const std::vector<ScriptStep>& steps);

/// Curator over a manual clock, scripted web and three simulated members
/// (archive "archive", cache "cache", search engine "search").
struct Env {
    explicit Env(Timestamp start, double time_scale = 0.0,
                 remember::cur::CuratorOptions options = {});
    ~Env();

    TempDir dir;
    remember::ManualClock clock;
    remember::web::SimulatedWeb web;
    remember::wi::Registry registry;
    std::shared_ptr<remember::wi::SimulatedArchive> archive;
    std::shared_ptr<remember::wi::SimulatedCache> cache;
    std::shared_ptr<remember::wi::SimulatedSearchEngine> search;
    std::unique_ptr<remember::cur::Curator> curator;
};

// --- the bibliography ReM: a splash page and 26 papers, the second missing ------

struct Bibliography {
    Bibliography();

    std::string rem_uri = "http://example.edu/pubs/rem.atom";
    Timestamp created = at("2008-02-01T00:00:00Z");
    Timestamp registered_at = at("2008-03-01T12:00:00Z");
    Timestamp old_capture = at("2007-01-06T00:00:00Z");
    remember::ore::ResourceMapDoc doc;
    std::map<std::string, std::string> pages; // by ar_uri
    std::string missing_entry_id;             // the second entry
    std::string missing_uri;

    std::vector<ScriptStep> steps() const;
};

// --- the six-plus-one AR scenario across three curation sessions ------------------

struct Scenario {
    Scenario();

    std::string rem_uri = "http://example.org/rem/collection.atom";
    std::string agg_uri = "http://example.org/aggregation/collection";
    Timestamp created = at("2008-01-01T00:00:00Z");
    Timestamp ar3_moved = at("2008-01-10T00:00:00Z");
    Timestamp t1 = at("2008-02-01T00:00:00Z");
    Timestamp ar2_deleted = at("2008-03-01T00:00:00Z");
    Timestamp ar4_moved = at("2008-03-05T00:00:00Z");
    Timestamp ar1_edited = at("2008-03-10T00:00:00Z");
    Timestamp ar5_edited = at("2008-03-15T00:00:00Z");
    Timestamp t2 = at("2008-04-01T00:00:00Z");
    Timestamp rem_edited = at("2008-04-15T00:00:00Z");
    Timestamp ar3_hijacked = at("2008-05-01T00:00:00Z");
    Timestamp t3 = at("2008-06-01T00:00:00Z");

    std::string id(int n) const; // entry id of ARn
    std::string uri(int n) const;
    std::string ar3_new_uri = "http://example.org/new-home/ar3.html";
    std::string ar4_new_uri = "http://example.org/moved/ar4.html";

    std::map<int, std::string> titles, bodies;
    std::map<int, std::string> original;  // ARn page content at creation
    std::string ar1_minor, ar5_major, ar3_wrong, ar7_page;

    remember::ore::ResourceMapDoc rem_v1() const; // AR1..AR6
    remember::ore::ResourceMapDoc rem_v2() const; // AR1 removed, AR7 added
    std::vector<ScriptStep> steps() const;
};

/// What a curation surface (direct calls or HTTP) must support to replay the
/// scenario.
class Driver {
public:
    struct SessionView {
        std::string id;
        std::map<std::string, std::string> attention; // entry_id -> reason
        std::map<std::string, std::string> states;    // entry_id -> state
        std::vector<std::string> external;            // change kind names
    };
    struct FinalizeView {
        unsigned long long rev_id = 0;
        bool committed = false;
        std::vector<std::string> change_kinds;
    };

    virtual ~Driver() = default;
    virtual std::string register_rem(const std::string& source) = 0;
    virtual SessionView open(const std::string& rem_key) = 0;
    virtual void decide(const std::string& session, const std::string& entry, const std::string& decision,
                        const std::string& uri = {}) = 0;
    virtual FinalizeView finalize(const std::string& session) = 0;
};

class DirectDriver final : public Driver {
public:
    explicit DirectDriver(remember::cur::Curator& c, std::string actor = "curator")
        : c_(c), actor_(std::move(actor)) {}
    std::string register_rem(const std::string& source) override;
    SessionView open(const std::string& rem_key) override;
    void decide(const std::string& session, const std::string& entry, const std::string& decision,
                const std::string& uri) override;
    FinalizeView finalize(const std::string& session) override;

private:
    remember::cur::Curator& c_;
    std::string actor_;
};

struct ReplayLog {
    std::string rem_key;
    Driver::SessionView s1, s2, s3;
    Driver::FinalizeView f1, f2, f3;
};

/// Registers at t1 and runs the three sessions with the scenario's decisions,
/// moving the clock between them.
ReplayLog replay(const Scenario& sc, remember::ManualClock& clock, Driver& d);

class HttpDriver final : public Driver {
public:
    HttpDriver(const std::string& host, int port, std::string actor = "curator");
    ~HttpDriver() override;
    std::string register_rem(const std::string& source) override;
    SessionView open(const std::string& rem_key) override;
    void decide(const std::string& session, const std::string& entry, const std::string& decision,
                const std::string& uri) override;
    FinalizeView finalize(const std::string& session) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One process-style CLI invocation per call, each with --clock set from the
/// shared manual clock.
class CliDriver final : public Driver {
public:
    CliDriver(std::filesystem::path storage, std::filesystem::path web_script,
              const remember::ManualClock& clock, std::string actor = "curator");
    std::string register_rem(const std::string& source) override;
    SessionView open(const std::string& rem_key) override;
    void decide(const std::string& session, const std::string& entry, const std::string& decision,
                const std::string& uri) override;
    FinalizeView finalize(const std::string& session) override;

    /// Runs one command; returns stdout. Throws std::runtime_error on a
    /// non-zero exit.
    std::string run(const std::vector<std::string>& args) const;

private:
    std::filesystem::path storage_, web_script_;
    const remember::ManualClock& clock_;
    std::string actor_;
};

/// Map form of an expected attention set using scenario AR numbers.
std::map<std::string, std::string> attention(const Scenario& sc,
                                             std::initializer_list<std::pair<int, const char*>> items);

} // namespace fixtures
