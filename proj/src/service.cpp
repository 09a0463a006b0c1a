#include "remember/service.hpp"

#include "remember/error.hpp"
#include "remember/json_codec.hpp"

#include "httplib.h"

namespace remember::svc {

using nlohmann::json;

void Runtime::save() const {
    if (registry) {
        registry->save_simulated(wi_state_dir);
    }
}

Runtime build_runtime(const cfg::ServiceConfig& config) {
    if (auto problems = cfg::validate(config); !problems.empty()) {
        throw Error(Errc::ConfigError, problems.front());
    }
    Runtime rt;
    if (config.clock == "wall") {
        rt.clock = std::make_unique<SystemClock>();
    } else {
        rt.clock = std::make_unique<ManualClock>(*parse_rfc3339(config.clock));
    }
    if (config.web_script) {
        auto web = std::make_unique<web::SimulatedWeb>(*rt.clock);
        web::SimulatedWeb::load_script(*web, *config.web_script);
        rt.fetcher = std::move(web);
    } else {
        rt.fetcher = std::make_unique<web::HttpFetcher>(*rt.clock);
    }
    rt.registry = std::make_unique<wi::Registry>(*rt.clock);
    for (const auto& m : config.members) {
        if (m.http) {
            rt.registry->add(std::make_shared<wi::HttpMember>(m.descriptor, m.templates, config.deadline));
            continue;
        }
        switch (m.descriptor.kind) {
        case wi::MemberKind::Archive:
            rt.registry->add(std::make_shared<wi::SimulatedArchive>(m.descriptor));
            break;
        case wi::MemberKind::Cache:
            rt.registry->add(std::make_shared<wi::SimulatedCache>(m.descriptor));
            break;
        case wi::MemberKind::Search:
            rt.registry->add(std::make_shared<wi::SimulatedSearchEngine>(m.descriptor));
            break;
        }
    }
    rt.wi_state_dir = config.storage / "wi";
    rt.registry->load_simulated(rt.wi_state_dir);
    cur::CuratorOptions opts;
    opts.thresholds = config.thresholds;
    opts.max_in_flight = config.max_in_flight;
    opts.deadline = config.deadline;
    rt.curator = std::make_unique<cur::Curator>(config.storage, *rt.clock, *rt.fetcher, *rt.registry, opts);
    return rt;
}

int http_status_for(Errc code) noexcept {
    switch (code) {
    case Errc::UnknownKey:
    case Errc::UnknownRevision:
    case Errc::UnknownSession:
    case Errc::UnknownEntry:
    case Errc::UnknownMember:
        return 404;
    case Errc::AlreadyRegistered:
    case Errc::NotInAttention:
    case Errc::DecisionNotApplicable:
    case Errc::RelocateTargetUnfetchable:
    case Errc::PendingStatuses:
    case Errc::UnresolvedAttention:
    case Errc::SessionClosed:
    case Errc::StaleSession:
    case Errc::TargetIsHead:
        return 409;
    case Errc::StorageFailure:
    case Errc::MemberUnavailable:
        return 503;
    default:
        return 400;
    }
}

namespace {

json summary_json(const store::RevisionSummary& s) {
    auto kinds = json::array();
    for (auto k : s.change_kinds) {
        kinds.push_back(ore::change_kind_name(k));
    }
    return {{"rev_id", s.rev_id},
            {"parent", optional_json(s.parent)},
            {"committed_at", timestamp_json(s.committed_at)},
            {"actor", s.actor},
            {"note", s.note},
            {"change_kinds", kinds}};
}

json revision_json(const store::Revision& r) {
    return {{"rev_id", r.rev_id},
            {"parent", optional_json(r.parent)},
            {"committed_at", timestamp_json(r.committed_at)},
            {"actor", r.actor},
            {"note", r.note},
            {"changes", r.changes},
            {"snapshot", r.snapshot},
            {"atom", r.snapshot_text}};
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

json body_json(const httplib::Request& req) {
    if (req.body.empty()) {
        return json::object();
    }
    auto j = json::parse(req.body);
    if (!j.is_object()) {
        throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    }
    return j;
}

std::string actor_of(const httplib::Request& req, const json& body) {
    if (body.contains("actor") && body.at("actor").is_string()) {
        return body.at("actor").get<std::string>();
    }
    if (req.has_param("actor")) {
        return req.get_param_value("actor");
    }
    return "anonymous";
}

store::RevId parse_rev(const std::string& s) {
    if (s.empty() || s.size() > 18 || s.find_first_not_of("0123456789") != std::string::npos) {
        throw Error(Errc::UnknownRevision, "no revision '" + s + "'");
    }
    return std::stoull(s);
}

} // namespace

ApiServer::ApiServer(cur::Curator& curator, std::function<void()> on_mutation)
    : curator_(curator), on_mutation_(std::move(on_mutation)), server_(std::make_unique<httplib::Server>()) {
    routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) {
        return server_->bind_to_any_port(host);
    }
    return server_->bind_to_port(host, port) ? port : -1;
}

bool ApiServer::listen_after_bind() { return server_->listen_after_bind(); }

void ApiServer::stop() {
    if (server_->is_running()) {
        server_->stop();
    }
}

void ApiServer::routes() {
    auto& srv = *server_;
    auto& cur = curator_;

    // Each handler runs inside this wrapper; domain errors map to statuses.
    auto wrap = [this](bool mutates, auto fn) {
        return [this, mutates, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
                if (mutates && res.status < 300 && on_mutation_) {
                    on_mutation_();
                }
            } catch (const Error& e) {
                send_error(res, http_status_for(e.code()), errc_name(e.code()), e.what());
            } catch (const json::exception& e) {
                send_error(res, 400, "InvalidArgument", std::string("bad JSON: ") + e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "Internal", e.what());
            }
        };
    };

    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    srv.Get("/health", wrap(false, [](const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, {{"status", "ok"}});
            }));

    srv.Post("/rems", wrap(true, [&cur](const httplib::Request& req, httplib::Response& res) {
                 auto reg = cur.register_rem(req.body, actor_of(req, json::object()));
                 send_json(res, 201,
                           {{"rem_key", reg.rem_key},
                            {"rev_id", reg.rev_id},
                            {"unfetched", reg.unfetched},
                            {"notes", reg.notes}});
             }));

    srv.Get(R"(/rems/([^/]+))", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                const auto key = req.matches[1].str();
                const auto st = cur.rem_state(key);
                const auto head = cur.revisions().head(key);
                json fps = json::object();
                for (const auto& [id, f] : st.fingerprints) {
                    json j = f;
                    j.erase("text_snapshot");
                    fps[id] = j;
                }
                send_json(res, 200,
                          {{"rem_key", key},
                           {"rem_uri", st.rem_uri},
                           {"head", revision_json(head)},
                           {"last_session", optional_json(st.last_session)},
                           {"statuses", st.last_statuses},
                           {"fingerprints", fps}});
            }));

    srv.Post(R"(/rems/([^/]+)/sessions)",
             wrap(true, [&cur](const httplib::Request& req, httplib::Response& res) {
                 const auto body = body_json(req);
                 const auto id = cur.begin_session(req.matches[1].str(), actor_of(req, body));
                 const bool wait = req.has_param("wait") && req.get_param_value("wait") != "0";
                 const auto s = wait ? cur.wait_session(id) : cur.session(id);
                 send_json(res, 201, cur::session_summary(s));
             }));

    srv.Get(R"(/sessions/([^/]+))", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, cur::session_summary(cur.session(req.matches[1].str())));
            }));

    srv.Get(R"(/sessions/([^/]+)/attention/([^/]+))",
            wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, cur.attention_aid(req.matches[1].str(), req.matches[2].str()));
            }));

    srv.Post(R"(/sessions/([^/]+)/decisions)",
             wrap(true, [&cur](const httplib::Request& req, httplib::Response& res) {
                 const auto body = body_json(req);
                 const auto entry = body.at("entry_id").get<std::string>();
                 const auto name = body.at("decision").get<std::string>();
                 const auto kind = cur::parse_decision_kind(name);
                 if (!kind) {
                     throw Error(Errc::InvalidArgument, "unknown decision '" + name + "'");
                 }
                 cur::Decision d{*kind, body.value("uri", "")};
                 if (d.kind == cur::DecisionKind::Relocate && d.uri.empty()) {
                     throw Error(Errc::InvalidArgument, "relocate needs a uri");
                 }
                 const auto s = cur.apply_decision(req.matches[1].str(), entry, d, actor_of(req, body));
                 send_json(res, 200, cur::session_summary(s));
             }));

    srv.Post(R"(/sessions/([^/]+)/finalize)",
             wrap(true, [&cur](const httplib::Request& req, httplib::Response& res) {
                 const auto body = body_json(req);
                 const auto r = cur.finalize(req.matches[1].str(), actor_of(req, body));
                 send_json(res, 200, {{"rev_id", r.rev_id}, {"committed", r.committed}, {"changes", r.changes}});
             }));

    srv.Get(R"(/rems/([^/]+)/history)", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                const auto key = req.matches[1].str();
                auto revs = json::array();
                for (const auto& s : cur.revisions().history(key)) {
                    revs.push_back(summary_json(s));
                }
                send_json(res, 200, {{"rem_key", key}, {"revisions", revs}});
            }));

    srv.Get(R"(/rems/([^/]+)/changelog)", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                res.set_content(cur.revisions().export_changelog(req.matches[1].str()), "text/plain");
            }));

    srv.Get(R"(/rems/([^/]+)/revisions/([^/]+))",
            wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                const auto key = req.matches[1].str();
                const auto which = req.matches[2].str();
                const auto rev = which == "head" ? cur.revisions().head(key) : cur.revisions().get(key, parse_rev(which));
                send_json(res, 200, revision_json(rev));
            }));

    srv.Post(R"(/rems/([^/]+)/rollback)", wrap(true, [&cur](const httplib::Request& req, httplib::Response& res) {
                 const auto body = body_json(req);
                 const auto key = req.matches[1].str();
                 const auto& t = body.at("target");
                 const store::RevId target = t.is_string() ? parse_rev(t.get<std::string>()) : t.get<store::RevId>();
                 const auto rev = cur.revisions().rollback(key, target, actor_of(req, body));
                 send_json(res, 201, {{"rev_id", rev}});
             }));

    srv.Get(R"(/rems/([^/]+)/timeline)", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, cur.timeline_export(req.matches[1].str()));
            }));

    srv.Get(R"(/thumbnails/([^/]+))", wrap(false, [&cur](const httplib::Request& req, httplib::Response& res) {
                const auto t = cur.thumbnail(req.matches[1].str());
                if (!t) {
                    send_error(res, 404, "UnknownThumbnail", "no thumbnail '" + req.matches[1].str() + "'");
                    return;
                }
                res.set_content(t->bytes, t->media_type);
            }));
}

} // namespace remember::svc
