#include "doctest.h"

#include "fixtures.hpp"

#include "remember/error.hpp"
#include "remember/wi.hpp"
#include "remember/wi_http.hpp"

#include "httplib.h"

#include <algorithm>
#include <random>
#include <thread>

using namespace remember;
using namespace remember::wi;
using fixtures::at;
using std::chrono::days;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error");
    return Errc::InvalidArgument;
}

std::vector<WIRecord> sorted(std::vector<WIRecord> v) {
    std::sort(v.begin(), v.end(), [](const WIRecord& a, const WIRecord& b) {
        if (a.captured_at != b.captured_at) return a.captured_at > b.captured_at;
        if (a.member_id != b.member_id) return a.member_id < b.member_id;
        return a.archived_uri < b.archived_uri;
    });
    return v;
}

} // namespace

TEST_CASE("descriptor defaults satisfy kind invariants") {
    CHECK(validate(MemberDescriptor::archive("ia")).empty());
    CHECK(validate(MemberDescriptor::cache("g")).empty());
    CHECK(validate(MemberDescriptor::search_engine("y")).empty());
    CHECK(validate(MemberDescriptor::search_engine("y", true)).empty());
    auto bad = MemberDescriptor::archive("ia");
    bad.capabilities.erase(Capability::Holdings);
    CHECK_FALSE(validate(bad).empty());
    auto bad_cache = MemberDescriptor::cache("c");
    bad_cache.keeps_history = true;
    CHECK_FALSE(validate(bad_cache).empty());
}

TEST_CASE("archived uri is deterministic") {
    CHECK(archived_uri_for("ia", at("2007-01-06T00:00:00Z"), "http://a/b") == "ia/20070106000000/http://a/b");
}

TEST_CASE("archive with no lag shows pushes at once, newest first") {
    ManualClock clock(at("2008-01-01T00:00:00Z"));
    Registry reg(clock);
    auto ia = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia"));
    reg.add(ia);
    CHECK(reg.holdings("ia", "http://a/").empty());
    reg.push("ia", "http://a/", "v1", "text/plain", at("2008-01-01T00:00:00Z"));
    reg.push("ia", "http://a/", "v2", "text/plain", at("2008-01-02T00:00:00Z"));
    clock.set(at("2008-01-03T00:00:00Z"));
    reg.push("ia", "http://a/", "v3", "text/plain", at("2008-01-03T00:00:00Z"));
    const auto h = reg.holdings("ia", "http://a/");
    REQUIRE(h.size() == 3);
    CHECK(h[0].captured_at == at("2008-01-03T00:00:00Z"));
    CHECK(h[2].captured_at == at("2008-01-01T00:00:00Z"));
    // A repeated push of the same capture does not duplicate it.
    reg.push("ia", "http://a/", "v3", "text/plain", at("2008-01-03T00:00:00Z"));
    CHECK(ia->record_count() == 3);
}

TEST_CASE("archive lag of 180 days") {
    ManualClock clock(at("2008-01-01T00:00:00Z"));
    Registry reg(clock);
    reg.add(std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia", days{180})));
    reg.push("ia", "http://a/", "v", "text/plain", clock.now());
    clock.advance(days{1});
    CHECK(reg.holdings("ia", "http://a/").empty());
    CHECK(reg.find_copies("http://a/").empty());
    clock.set(at("2008-01-01T00:00:00Z") + days{181});
    CHECK(reg.holdings("ia", "http://a/").size() == 1);
    CHECK(reg.find_copies("http://a/").size() == 1);
}

TEST_CASE("capability checks") {
    ManualClock clock(at("2008-01-01T00:00:00Z"));
    Registry reg(clock);
    reg.add(std::make_shared<SimulatedCache>(MemberDescriptor::cache("g")));
    reg.add(std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia")));
    CHECK(code_of([&] { reg.push("g", "http://a/", "x", "text/plain", clock.now()); }) == Errc::CapabilityMissing);
    CHECK(code_of([&] { reg.lookup("ia", "http://a/"); }) == Errc::CapabilityMissing);
    CHECK(code_of([&] { reg.search("ia", "x"); }) == Errc::CapabilityMissing);
    CHECK(code_of([&] { reg.holdings("g", "http://a/"); }) == Errc::CapabilityMissing);
    CHECK(code_of([&] { reg.member("nobody"); }) == Errc::UnknownMember);
}

TEST_CASE("cache keeps one version per uri") {
    SimulatedCache g(MemberDescriptor::cache("g"));
    CHECK_FALSE(g.lookup("http://a/"));
    g.crawl("http://a/", "v1", "text/plain", at("2008-01-01T00:00:00Z"));
    g.crawl("http://a/", "v2", "text/plain", at("2008-02-01T00:00:00Z"));
    const auto r = g.lookup("http://a/");
    REQUIRE(r);
    CHECK(r->content == "v2");
    CHECK(g.all_records().size() == 1);
    g.evict("http://a/");
    CHECK_FALSE(g.lookup("http://a/"));

    std::mt19937 rng(3);
    for (int i = 0; i < 500; ++i) {
        g.crawl("http://r/" + std::to_string(rng() % 10), std::to_string(i), "text/plain",
                at("2008-01-01T00:00:00Z") + std::chrono::seconds{i});
    }
    auto all = g.all_records();
    std::set<std::string> uris;
    for (const auto& rec : all) CHECK(uris.insert(rec.original_uri).second);
}

TEST_CASE("search requires every term and matches phrases contiguously") {
    SimulatedSearchEngine s(MemberDescriptor::search_engine("y"));
    const auto t = at("2008-01-01T00:00:00Z");
    s.index("http://a/", "<p>the kinetic term of k-essence kinetic</p>", "text/html", t);
    s.index("http://b/", "<p>term kinetic energy</p>", "text/html", t);
    s.index("http://c/", "<p>unrelated words</p>", "text/html", t);
    CHECK(s.search("\"kinetic term\"") == std::vector<std::string>{"http://a/"});
    CHECK(s.search("kinetic term") == std::vector<std::string>{"http://a/", "http://b/"});
    CHECK(s.search("energy") == std::vector<std::string>{"http://b/"});
    CHECK(s.search("absent").empty());
    CHECK(s.search("").empty());
    CHECK(parse_query("a \"b c\" d") == std::vector<std::vector<std::string>>{{"a"}, {"b", "c"}, {"d"}});
}

TEST_CASE("search agrees with a containment scan") {
    SimulatedSearchEngine s(MemberDescriptor::search_engine("y"));
    std::mt19937 rng(11);
    const auto vocab = fixtures::vocabulary('s', 12);
    std::map<std::string, std::vector<std::string>> docs;
    for (int i = 0; i < 40; ++i) {
        const auto uri = "http://d/" + std::to_string(i);
        const auto text = fixtures::prose(rng, 20, vocab);
        s.index(uri, text, "text/plain", at("2008-01-01T00:00:00Z"));
        std::istringstream in(text);
        for (std::string w; in >> w;) docs[uri].push_back(w);
    }
    for (int q = 0; q < 50; ++q) {
        const auto a = vocab[rng() % vocab.size()], b = vocab[rng() % vocab.size()];
        std::vector<std::pair<size_t, std::string>> expect;
        for (const auto& [uri, words] : docs) {
            const auto ca = static_cast<size_t>(std::count(words.begin(), words.end(), a));
            const auto cb = static_cast<size_t>(std::count(words.begin(), words.end(), b));
            if (ca && cb) expect.push_back({a == b ? ca : ca + cb, uri});
        }
        std::sort(expect.begin(), expect.end(),
                  [](const auto& x, const auto& y) { return x.first != y.first ? x.first > y.first : x.second < y.second; });
        std::vector<std::string> want;
        for (const auto& e : expect) want.push_back(e.second);
        CAPTURE(a);
        CAPTURE(b);
        CHECK(s.search(a == b ? a : a + " " + b) == want);
    }
}

TEST_CASE("find_copies: one cache and one archive with two captures") {
    ManualClock clock(at("2008-03-01T00:00:00Z"));
    Registry reg(clock);
    auto ia = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia"));
    auto g = std::make_shared<SimulatedCache>(MemberDescriptor::cache("g"));
    reg.add(ia);
    reg.add(g);
    ia->push("http://a/", "1", "text/plain", at("2008-01-01T00:00:00Z"));
    ia->push("http://a/", "2", "text/plain", at("2008-02-01T00:00:00Z"));
    g->crawl("http://a/", "3", "text/plain", at("2008-02-15T00:00:00Z"));
    const auto c = reg.find_copies("http://a/");
    REQUIRE(c.size() == 3);
    CHECK(c[0].member_id == "g");
    CHECK(c[1].captured_at == at("2008-02-01T00:00:00Z"));
    CHECK(c[2].captured_at == at("2008-01-01T00:00:00Z"));
    CHECK(reg.find_copies("http://nowhere/").empty());
}

TEST_CASE("find_copies equals the brute-force union and degrades per member") {
    std::mt19937 rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        ManualClock clock(at("2008-06-01T00:00:00Z"));
        Registry reg(clock);
        auto a1 = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("a1"));
        auto a2 = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("a2", days{30}));
        auto c1 = std::make_shared<SimulatedCache>(MemberDescriptor::cache("c1"));
        auto s1 = std::make_shared<SimulatedSearchEngine>(MemberDescriptor::search_engine("s1", true));
        for (auto m : std::vector<std::shared_ptr<Member>>{a1, a2, c1, s1}) reg.add(m);
        const std::vector<std::string> uris{"http://u/0", "http://u/1", "http://u/2"};
        for (int op = 0; op < 40; ++op) {
            const auto& u = uris[rng() % uris.size()];
            const auto t = at("2008-01-01T00:00:00Z") + std::chrono::hours{rng() % 3600};
            switch (rng() % 4) {
            case 0: a1->push(u, "x", "text/plain", t); break;
            case 1: a2->push(u, "y", "text/plain", t); break;
            case 2: c1->crawl(u, "z", "text/plain", t); break;
            default: s1->index(u, "w", "text/plain", t); break;
            }
        }
        const auto now = clock.now();
        auto oracle = [&](std::set<std::string> down, const std::string& u) {
            std::vector<WIRecord> all;
            auto take = [&](const std::vector<WIRecord>& recs, const MemberDescriptor& d) {
                if (down.count(d.member_id)) return;
                for (const auto& r : recs)
                    if (r.original_uri == u && r.captured_at + d.lag <= now) all.push_back(r);
            };
            take(a1->all_records(), a1->descriptor());
            take(a2->all_records(), a2->descriptor());
            take(c1->all_records(), c1->descriptor());
            if (!down.count("s1"))
                if (auto r = s1->lookup(u)) all.push_back(*r);
            return sorted(all);
        };
        for (const auto& u : uris) {
            CHECK(reg.find_copies(u) == oracle({}, u));
            for (auto& m : std::vector<std::shared_ptr<SimulatedMember>>{a1, a2, c1, s1}) {
                m->set_available(false);
                const auto d = reg.find_copies_detailed(u);
                CHECK(d.records == oracle({m->id()}, u));
                CHECK(d.notes.size() == 1);
                m->set_available(true);
            }
        }
    }
}

TEST_CASE("unavailable members raise MemberUnavailable directly") {
    ManualClock clock(at("2008-01-01T00:00:00Z"));
    SimulatedArchive ia(MemberDescriptor::archive("ia"));
    ia.set_available(false);
    CHECK(code_of([&] { ia.push("http://a/", "x", "text/plain", clock.now()); }) == Errc::MemberUnavailable);
    Registry reg(clock);
    auto shared = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia"));
    auto other = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("wc"));
    reg.add(shared);
    reg.add(other);
    shared->set_available(false);
    std::vector<std::string> notes;
    const auto pushed = reg.push_to_archives("http://a/", "x", "text/plain", clock.now(), &notes);
    CHECK(pushed.size() == 1);
    CHECK(pushed[0].member_id == "wc");
    CHECK(notes.size() == 1);
}

TEST_CASE("relocation queries") {
    ore::AREntry e;
    e.title = "Parametrization of K-essence and Its Kinetic Term";
    e.extra_metadata = {{"author/name", "Hui Li"}, {"author/name", "Zong-Kuan Guo"}, {"author/name", "Yuan-Zhong Zhang"}};
    CHECK(build_relocation_queries(e, std::nullopt) ==
          std::vector<std::string>{"\"Parametrization of K-essence and Its Kinetic Term\"",
                                   "Parametrization of K-essence and Its Kinetic Term Hui Li Zong-Kuan Guo Yuan-Zhong Zhang"});
    fp::Fingerprint f;
    f.lexical_signature = {"a", "b", "c"};
    CHECK(build_relocation_queries(ore::AREntry{}, f) == std::vector<std::string>{"a b c"});
    CHECK(build_relocation_queries(ore::AREntry{}, std::nullopt).empty());
    ore::AREntry only_title;
    only_title.title = "x";
    CHECK(build_relocation_queries(only_title, std::nullopt) == std::vector<std::string>{"\"x\"", "x"});
}

TEST_CASE("simulated members persist") {
    fixtures::TempDir dir;
    ManualClock clock(at("2008-01-01T00:00:00Z"));
    {
        Registry reg(clock);
        auto ia = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia"));
        auto g = std::make_shared<SimulatedCache>(MemberDescriptor::cache("g"));
        auto y = std::make_shared<SimulatedSearchEngine>(MemberDescriptor::search_engine("y"));
        reg.add(ia);
        reg.add(g);
        reg.add(y);
        ia->push("http://a/", std::string("bin\0ary", 7), "application/octet-stream", clock.now());
        g->crawl("http://a/", "cached", "text/plain", clock.now());
        y->index("http://a/", "findable words", "text/plain", clock.now());
        reg.save_simulated(dir.path);
    }
    Registry reg(clock);
    auto ia = std::make_shared<SimulatedArchive>(MemberDescriptor::archive("ia"));
    auto g = std::make_shared<SimulatedCache>(MemberDescriptor::cache("g"));
    auto y = std::make_shared<SimulatedSearchEngine>(MemberDescriptor::search_engine("y"));
    reg.add(ia);
    reg.add(g);
    reg.add(y);
    reg.load_simulated(dir.path);
    REQUIRE(ia->all_records().size() == 1);
    CHECK(ia->all_records()[0].content == std::string("bin\0ary", 7));
    CHECK(g->lookup("http://a/")->content == "cached");
    CHECK(y->search("findable") == std::vector<std::string>{"http://a/"});
}

TEST_CASE("http member against a local stub") {
    httplib::Server srv;
    std::string pushed_body, pushed_type;
    srv.Post(R"(/save/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
        pushed_body = req.body;
        pushed_type = req.get_header_value("Content-Type");
        res.status = 201;
        res.set_header("Content-Location", "http://stub/web/20080101000000/" + req.matches[1].str());
    });
    srv.Get("/cdx", [](const httplib::Request& req, httplib::Response& res) {
        CHECK(req.get_param_value("url") == "http://a.example/x?y=1");
        res.set_content("a.example/x 20070106000000 http://a.example/x?y=1 text/html 200\n"
                        "a.example/x 20071231000000 http://a.example/x?y=1 text/html 200\n"
                        "garbage\n",
                        "text/plain");
    });
    srv.Get("/cache", [](const httplib::Request& req, httplib::Response& res) {
        if (req.get_param_value("url") == "http://gone.example/") {
            res.status = 404;
            return;
        }
        res.set_header("Memento-Datetime", "Sun, 06 Jan 2008 12:30:00 GMT");
        res.set_content("cached copy", "text/html");
    });
    srv.Get("/search", [](const httplib::Request& req, httplib::Response& res) {
        CHECK(req.get_param_value("q") == "\"kinetic term\" li");
        res.set_content("http://r1/\r\nhttp://r2/\n", "text/plain");
    });
    srv.Get("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    const int port = srv.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    const auto base = "http://127.0.0.1:" + std::to_string(port);

    HttpTemplates arch{base + "/save/{uri}", base + "/cdx?url={uri}", "http://stub/web/{timestamp}/{raw_uri}", "", ""};
    HttpMember ia(MemberDescriptor::archive("ia", days{180}), arch, std::chrono::seconds{5});
    const auto rec = ia.push("http://a.example/x", "body", "text/html", at("2008-01-01T00:00:00Z"));
    CHECK(pushed_body == "body");
    CHECK(pushed_type == "text/html");
    CHECK(rec.archived_uri.starts_with("http://stub/web/20080101000000/"));
    const auto h = ia.visible_records("http://a.example/x?y=1", at("2008-06-01T00:00:00Z"));
    REQUIRE(h.size() == 1); // the December capture is still inside the lag
    CHECK(h[0].captured_at == at("2007-01-06T00:00:00Z"));
    CHECK(h[0].archived_uri == "http://stub/web/20070106000000/http://a.example/x?y=1");
    CHECK(ia.visible_records("http://a.example/x?y=1", at("2009-01-01T00:00:00Z")).size() == 2);

    HttpTemplates cache{"", "", "", base + "/cache?url={uri}", ""};
    HttpMember g(MemberDescriptor::cache("g"), cache, std::chrono::seconds{5});
    const auto hit = g.lookup("http://a.example/");
    REQUIRE(hit);
    CHECK(hit->content == "cached copy");
    CHECK(hit->captured_at == at("2008-01-06T12:30:00Z"));
    CHECK_FALSE(g.lookup("http://gone.example/"));

    HttpTemplates se{"", "", "", "", base + "/search?q={query}"};
    HttpMember y(MemberDescriptor::search_engine("y"), se, std::chrono::seconds{5});
    CHECK(y.search("\"kinetic term\" li") == std::vector<std::string>{"http://r1/", "http://r2/"});

    HttpTemplates down{"", "", "", base + "/down?u={uri}", ""};
    HttpMember d(MemberDescriptor::cache("d"), down, std::chrono::seconds{5});
    CHECK(code_of([&] { d.lookup("http://a/"); }) == Errc::MemberUnavailable);
    HttpMember dead(MemberDescriptor::cache("dead"), HttpTemplates{"", "", "", "http://127.0.0.1:1/{uri}", ""},
                    std::chrono::seconds{1});
    CHECK(code_of([&] { dead.lookup("http://a/"); }) == Errc::MemberUnavailable);

    // A registry with a dead member still answers from the healthy one.
    ManualClock clock(at("2009-01-01T00:00:00Z"));
    Registry reg(clock);
    reg.add(std::make_shared<HttpMember>(MemberDescriptor::cache("dead"),
                                         HttpTemplates{"", "", "", "http://127.0.0.1:1/{uri}", ""},
                                         std::chrono::seconds{1}));
    reg.add(std::make_shared<HttpMember>(MemberDescriptor::archive("ia", days{180}), arch, std::chrono::seconds{5}));
    const auto copies = reg.find_copies_detailed("http://a.example/x?y=1");
    CHECK(copies.records.size() == 2);
    CHECK(copies.notes.size() == 1);

    CHECK(expand_template("x/{uri}/{timestamp}?q={query}", "http://a/b c", "20080101000000", "a b") ==
          "x/http%3A%2F%2Fa%2Fb%20c/20080101000000?q=a%20b");
    CHECK(expand_template("w/{timestamp}/{raw_uri}", "http://a/b?c=1", "20080101000000", "") ==
          "w/20080101000000/http://a/b?c=1");

    srv.stop();
    t.join();
}
