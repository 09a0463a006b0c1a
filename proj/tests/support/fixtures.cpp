#include "fixtures.hpp"

#include "remember/cli.hpp"
#include "remember/error.hpp"

#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace fixtures {

namespace fs = std::filesystem;
using namespace remember;
using nlohmann::json;

fs::path data_dir() { return fs::path(TEST_DATA_DIR); }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string arxiv_rem_text() { return read_file(data_dir() / "arxiv_rem.xml"); }

Timestamp at(const char* rfc3339) {
    auto t = parse_rfc3339(rfc3339);
    if (!t) {
        throw std::invalid_argument(rfc3339);
    }
    return *t;
}

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("remember-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
}

std::vector<std::string> vocabulary(char initial, size_t n, unsigned seed) {
    static const char* const syllables[] = {"ba", "ke", "lo", "mi", "nu", "ra", "si", "to", "ve", "zu",
                                            "dor", "fen", "gal", "hix", "jum", "pel", "quo", "tar"};
    std::mt19937 rng(seed * 7919u + static_cast<unsigned char>(initial));
    std::uniform_int_distribution<size_t> pick(0, std::size(syllables) - 1);
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
        std::string w(1, initial);
        for (int i = 0; i < 3; ++i) {
            w += syllables[pick(rng)];
        }
        if (seen.insert(w).second) {
            out.push_back(w);
        }
    }
    return out;
}

std::string prose(std::mt19937& rng, size_t words, const std::vector<std::string>& vocab) {
    std::uniform_int_distribution<size_t> pick(0, vocab.size() - 1);
    std::string out;
    for (size_t i = 0; i < words; ++i) {
        out += (i ? " " : "") + vocab[pick(rng)];
    }
    return out;
}

std::string html_page(const std::string& title, const std::string& body) {
    return "<html><head><title>" + title + "</title></head><body><p>" + body + "</p></body></html>";
}

void apply(web::SimulatedWeb& w, const std::vector<ScriptStep>& steps) {
    for (const auto& s : steps) {
        w.script(s.uri, s.from, s.behavior);
    }
}

void write_script(const fs::path& path, const std::vector<ScriptStep>& steps) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& s : steps) {
        json rec{{"uri", s.uri}, {"effective_from", format_rfc3339(s.from)}};
        if (const auto* serve = std::get_if<web::Serve>(&s.behavior)) {
            rec["behavior"] = "serve";
            rec["media_type"] = serve->media_type;
            rec["content"] = serve->content;
            if (serve->latency.count()) {
                rec["latency_ms"] = serve->latency.count();
            }
        } else if (const auto* r = std::get_if<web::Redirect>(&s.behavior)) {
            rec["behavior"] = "redirect";
            rec["target"] = r->target;
        } else {
            rec["behavior"] = "gone";
        }
        out << rec.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

Env::Env(Timestamp start, double time_scale, cur::CuratorOptions options)
    : clock(start), web(clock, time_scale), registry(clock) {
    archive = std::make_shared<wi::SimulatedArchive>(wi::MemberDescriptor::archive("archive"));
    cache = std::make_shared<wi::SimulatedCache>(wi::MemberDescriptor::cache("cache"));
    search = std::make_shared<wi::SimulatedSearchEngine>(wi::MemberDescriptor::search_engine("search"));
    registry.add(archive);
    registry.add(cache);
    registry.add(search);
    curator = std::make_unique<cur::Curator>(dir.path / "store", clock, web, registry, options);
}

Env::~Env() { curator.reset(); }

namespace {

web::Serve html(std::string content) { return web::Serve{std::move(content), "text/html", {}}; }

web::Serve atom(const ore::ResourceMapDoc& d) {
    return web::Serve{ore::serialize_rem(d), "application/atom+xml", {}};
}

std::string join(const std::vector<std::string>& words, size_t from = 0, size_t to = std::string::npos) {
    std::string out;
    for (size_t i = from; i < std::min(to, words.size()); ++i) {
        out += (out.empty() ? "" : " ") + words[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) {
        out.push_back(w);
    }
    return out;
}

} // namespace

// --- bibliography ---------------------------------------------------------------

Bibliography::Bibliography() {
    static const char* const surnames[] = {"Okafor", "Lindqvist", "Moreau", "Tanaka", "Petrov", "Alvarez",
                                           "Brennan", "Kowalski", "Haddad", "Novak", "Osei", "Varga"};
    const auto vocab = vocabulary('p', 400, 3);
    std::mt19937 rng(2008);

    doc.rem_uri = rem_uri;
    doc.aggregation_uri = "http://example.edu/pubs/aggregation";
    doc.title = "Publications";
    doc.authors = {"A. Okafor"};
    doc.updated = created;

    ore::AREntry splash;
    splash.entry_id = "tag:example.edu,2008:pubs-splash";
    splash.ar_uri = "http://example.edu/pubs/index.html";
    splash.media_type = "text/html";
    splash.title = "Publications splash page";
    splash.updated = created;
    doc.entries.push_back(splash);
    pages[splash.ar_uri] = html_page("publications index", prose(rng, 120, vocab));

    for (int i = 1; i <= 26; ++i) {
        ore::AREntry e;
        char id[64];
        std::snprintf(id, sizeof id, "tag:example.edu,2008:pub-%02d", i);
        e.entry_id = id;
        e.ar_uri = "http://example.edu/pubs/paper" + std::to_string(i) + ".html";
        e.media_type = "text/html";
        std::mt19937 title_rng(static_cast<unsigned>(i));
        e.title = prose(title_rng, 4, vocab);
        e.updated = created;
        e.extra_metadata = {{"author/name", std::string("A. ") + surnames[i % 12]},
                            {"author/name", std::string("B. ") + surnames[(i * 5 + 1) % 12]}};
        doc.entries.push_back(e);
        pages[e.ar_uri] = html_page(e.title, e.title + " " + prose(rng, 200, vocab));
    }
    missing_entry_id = doc.entries[1].entry_id;
    missing_uri = doc.entries[1].ar_uri;
}

std::vector<ScriptStep> Bibliography::steps() const {
    std::vector<ScriptStep> out{{rem_uri, created, atom(doc)}};
    for (const auto& [uri, page] : pages) {
        if (uri == missing_uri) {
            out.push_back({uri, created, web::Gone{}});
        } else {
            out.push_back({uri, created, html(page)});
        }
    }
    return out;
}

// --- scenario -----------------------------------------------------------------------

Scenario::Scenario() {
    const auto vocab = vocabulary('b', 400, 6);
    const auto other = vocabulary('w', 400, 6);
    for (int n = 1; n <= 7; ++n) {
        std::mt19937 rng(static_cast<unsigned>(100 + n));
        const auto title = prose(rng, 3, vocab);
        const auto body = prose(rng, 150, vocab);
        titles[n] = title;
        bodies[n] = body;
        original[n] = html_page(title, body);
    }
    ar7_page = original[7];

    // One word swapped near the middle.
    auto words = split(bodies[1]);
    words[words.size() / 2] = vocabulary('d', 1, 9).front();
    ar1_minor = html_page(titles[1], join(words));

    // First half kept, second half rewritten.
    words = split(bodies[5]);
    std::mt19937 rng5(555);
    ar5_major = html_page(titles[5], join(words, 0, words.size() / 2) + " " + prose(rng5, 75, vocab));

    std::mt19937 rng3(333);
    ar3_wrong = html_page(prose(rng3, 3, other), prose(rng3, 150, other));
}

std::string Scenario::id(int n) const { return "tag:example.org,2008:ar" + std::to_string(n); }
std::string Scenario::uri(int n) const { return "http://example.org/ar" + std::to_string(n) + ".html"; }

ore::ResourceMapDoc Scenario::rem_v1() const {
    ore::ResourceMapDoc d;
    d.rem_uri = rem_uri;
    d.aggregation_uri = agg_uri;
    d.title = "Scenario aggregation";
    d.authors = {"Curator One"};
    d.updated = created;
    for (int n = 1; n <= 6; ++n) {
        ore::AREntry e;
        e.entry_id = id(n);
        e.ar_uri = uri(n);
        e.media_type = "text/html";
        e.title = titles.at(n);
        e.updated = created;
        d.entries.push_back(e);
    }
    return d;
}

ore::ResourceMapDoc Scenario::rem_v2() const {
    auto d = rem_v1();
    d.entries.erase(d.entries.begin());
    ore::AREntry e;
    e.entry_id = id(7);
    e.ar_uri = uri(7);
    e.media_type = "text/html";
    e.title = titles.at(7);
    e.updated = rem_edited;
    d.entries.push_back(e);
    d.updated = rem_edited;
    return d;
}

std::vector<ScriptStep> Scenario::steps() const {
    return {
        {rem_uri, created, atom(rem_v1())},
        {rem_uri, rem_edited, atom(rem_v2())},
        {uri(1), created, html(original.at(1))},
        {uri(1), ar1_edited, html(ar1_minor)},
        {uri(2), created, html(original.at(2))},
        {uri(2), ar2_deleted, web::Gone{}},
        {uri(3), created, html(original.at(3))},
        {uri(3), ar3_moved, web::Gone{}},
        {ar3_new_uri, ar3_moved, html(original.at(3))},
        {ar3_new_uri, ar3_hijacked, html(ar3_wrong)},
        {uri(4), created, html(original.at(4))},
        {uri(4), ar4_moved, web::Gone{}},
        {ar4_new_uri, ar4_moved, html(original.at(4))},
        {uri(5), created, html(original.at(5))},
        {uri(5), ar5_edited, html(ar5_major)},
        {uri(6), created, html(original.at(6))},
        {uri(7), rem_edited, html(ar7_page)},
    };
}

// --- drivers ------------------------------------------------------------------------

namespace {

Driver::SessionView view_of(const cur::CurationSession& s) {
    Driver::SessionView v;
    v.id = s.session_id;
    for (const auto& st : s.statuses) {
        v.states[st.entry_id] = std::string(cur::status_state_name(st.state));
        if (st.needs_decision() && st.reason) {
            v.attention[st.entry_id] = std::string(cur::attention_reason_name(*st.reason));
        }
    }
    for (const auto& c : s.external_changes) {
        v.external.emplace_back(ore::change_kind_name(c.kind));
    }
    return v;
}

Driver::SessionView view_of(const json& s) {
    Driver::SessionView v;
    v.id = s.at("session_id").get<std::string>();
    for (const auto& st : s.at("statuses")) {
        const auto id = st.at("entry_id").get<std::string>();
        const auto state = st.at("state").get<std::string>();
        v.states[id] = state;
        if (state == cur::status_state_name(cur::StatusState::NeedsAttention) && st.at("reason").is_string()) {
            v.attention[id] = st.at("reason").get<std::string>();
        }
    }
    for (const auto& c : s.at("external_changes")) {
        v.external.push_back(c.at("kind").get<std::string>());
    }
    return v;
}

} // namespace

std::string DirectDriver::register_rem(const std::string& source) { return c_.register_rem(source, actor_).rem_key; }

Driver::SessionView DirectDriver::open(const std::string& rem_key) { return view_of(c_.open_session(rem_key, actor_)); }

void DirectDriver::decide(const std::string& session, const std::string& entry, const std::string& decision,
                          const std::string& uri) {
    const auto kind = cur::parse_decision_kind(decision);
    if (!kind) {
        throw std::invalid_argument(decision);
    }
    c_.apply_decision(session, entry, cur::Decision{*kind, uri}, actor_);
}

Driver::FinalizeView DirectDriver::finalize(const std::string& session) {
    const auto r = c_.finalize(session, actor_);
    FinalizeView v{r.rev_id, r.committed, {}};
    for (const auto& c : r.changes) {
        v.change_kinds.emplace_back(ore::change_kind_name(c.kind));
    }
    return v;
}

struct HttpDriver::Impl {
    Impl(const std::string& host, int port) : client(host, port) {}
    httplib::Client client;
    std::string actor;

    json expect(const httplib::Result& res, const std::string& what) {
        if (!res) {
            throw std::runtime_error(what + ": " + httplib::to_string(res.error()));
        }
        if (res->status / 100 != 2) {
            throw std::runtime_error(what + ": HTTP " + std::to_string(res->status) + " " + res->body);
        }
        return json::parse(res->body);
    }
};

HttpDriver::HttpDriver(const std::string& host, int port, std::string actor)
    : impl_(std::make_unique<Impl>(host, port)) {
    impl_->actor = std::move(actor);
    impl_->client.set_read_timeout(30, 0);
}

HttpDriver::~HttpDriver() = default;

std::string HttpDriver::register_rem(const std::string& source) {
    auto j = impl_->expect(impl_->client.Post("/rems?actor=" + impl_->actor, source, "text/plain"), "register");
    return j.at("rem_key").get<std::string>();
}

Driver::SessionView HttpDriver::open(const std::string& rem_key) {
    const json body{{"actor", impl_->actor}};
    return view_of(impl_->expect(
        impl_->client.Post("/rems/" + rem_key + "/sessions?wait=1", body.dump(), "application/json"), "open"));
}

void HttpDriver::decide(const std::string& session, const std::string& entry, const std::string& decision,
                        const std::string& uri) {
    json body{{"entry_id", entry}, {"decision", decision}, {"actor", impl_->actor}};
    if (!uri.empty()) {
        body["uri"] = uri;
    }
    impl_->expect(impl_->client.Post("/sessions/" + session + "/decisions", body.dump(), "application/json"),
                  "decide");
}

Driver::FinalizeView HttpDriver::finalize(const std::string& session) {
    const json body{{"actor", impl_->actor}};
    auto j = impl_->expect(impl_->client.Post("/sessions/" + session + "/finalize", body.dump(), "application/json"),
                           "finalize");
    FinalizeView v{j.at("rev_id").get<unsigned long long>(), j.at("committed").get<bool>(), {}};
    for (const auto& c : j.at("changes")) {
        v.change_kinds.push_back(c.at("kind").get<std::string>());
    }
    return v;
}

CliDriver::CliDriver(fs::path storage, fs::path web_script, const ManualClock& clock, std::string actor)
    : storage_(std::move(storage)), web_script_(std::move(web_script)), clock_(clock), actor_(std::move(actor)) {}

std::string CliDriver::run(const std::vector<std::string>& args) const {
    std::vector<std::string> full{"remember", "--storage", storage_.string(), "--clock",
                                  format_rfc3339(clock_.now()), "--web", web_script_.string(), "--actor", actor_};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) {
        throw std::runtime_error("exit " + std::to_string(code) + ": " + err.str());
    }
    return out.str();
}

namespace {

std::vector<std::vector<std::string>> rows(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream cs(line);
        for (std::string cell; std::getline(cs, cell, '\t');) {
            cells.push_back(cell);
        }
        out.push_back(cells);
    }
    return out;
}

} // namespace

std::string CliDriver::register_rem(const std::string& source) {
    for (const auto& r : rows(run({"register", source}))) {
        if (r.size() == 2 && r[0] == "rem_key") {
            return r[1];
        }
    }
    throw std::runtime_error("register printed no rem_key");
}

Driver::SessionView CliDriver::open(const std::string& rem_key) {
    SessionView v;
    for (const auto& r : rows(run({"check", rem_key}))) {
        if (r.size() == 2 && r[0] == "session") {
            v.id = r[1];
        } else if (r.size() == 3 && r[0] == "external") {
            v.external.push_back(r[1]);
        } else if (r.size() >= 4 && r[0] == "status") {
            v.states[r[1]] = r[2];
            if (r[2] == cur::status_state_name(cur::StatusState::NeedsAttention)) {
                v.attention[r[1]] = r[3];
            }
        }
    }
    return v;
}

void CliDriver::decide(const std::string& session, const std::string& entry, const std::string& decision,
                       const std::string& uri) {
    std::vector<std::string> args{"decide", session, entry, decision};
    if (!uri.empty()) {
        args.push_back(uri);
    }
    run(args);
}

Driver::FinalizeView CliDriver::finalize(const std::string& session) {
    FinalizeView v;
    for (const auto& r : rows(run({"finalize", session}))) {
        if (r.size() == 2 && r[0] == "rev_id") {
            v.rev_id = std::stoull(r[1]);
        } else if (r.size() == 2 && r[0] == "committed") {
            v.committed = r[1] == "true";
        }
    }
    return v;
}

ReplayLog replay(const Scenario& sc, ManualClock& clock, Driver& d) {
    ReplayLog log;
    clock.set(sc.t1);
    log.rem_key = d.register_rem(sc.rem_uri);

    log.s1 = d.open(log.rem_key);
    d.decide(log.s1.id, sc.id(3), "relocate", sc.ar3_new_uri);
    log.f1 = d.finalize(log.s1.id);

    clock.set(sc.t2);
    log.s2 = d.open(log.rem_key);
    d.decide(log.s2.id, sc.id(4), "relocate", sc.ar4_new_uri);
    d.decide(log.s2.id, sc.id(2), "flag-gone");
    d.decide(log.s2.id, sc.id(5), "rearchive");
    d.decide(log.s2.id, sc.id(1), "accept-minor");
    log.f2 = d.finalize(log.s2.id);

    clock.set(sc.t3);
    log.s3 = d.open(log.rem_key);
    d.decide(log.s3.id, sc.id(3), "flag-gone");
    log.f3 = d.finalize(log.s3.id);
    return log;
}

std::map<std::string, std::string> attention(const Scenario& sc,
                                             std::initializer_list<std::pair<int, const char*>> items) {
    std::map<std::string, std::string> out;
    for (const auto& [n, reason] : items) {
        out[sc.id(n)] = reason;
    }
    return out;
}

} // namespace fixtures
