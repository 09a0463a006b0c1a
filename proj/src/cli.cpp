#include "remember/cli.hpp"

#include "remember/error.hpp"
#include "remember/json_codec.hpp"
#include "remember/service.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <fstream>
#include <sstream>

namespace remember::cli {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::InvalidArgument, "cannot read " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string or_dash(const std::string& s) { return s.empty() ? "-" : s; }

std::string similarity_text(const std::optional<double>& s) {
    if (!s) {
        return "-";
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.3f", *s);
    return buf;
}

void print_statuses(std::ostream& out, const cur::CurationSession& s) {
    out << "session\t" << s.session_id << '\n';
    out << "base_rev\t" << s.base_rev << '\n';
    if (s.rem_missing) {
        out << "rem-missing\t" << s.rem_missing_detail << '\n';
    }
    for (const auto& c : s.external_changes) {
        out << "external\t" << ore::change_kind_name(c.kind) << '\t' << c.entry_id.value_or("-") << '\n';
    }
    for (const auto& st : s.statuses) {
        out << "status\t" << st.entry_id << '\t' << cur::status_state_name(st.state) << '\t'
            << (st.reason ? std::string(cur::attention_reason_name(*st.reason)) : "-") << '\t'
            << similarity_text(st.similarity) << '\t' << st.ar_uri << '\n';
    }
}

std::atomic<svc::ApiServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) {
        s->stop();
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ReMember curation service and command-line client", "remember"};
    app.require_subcommand(1);

    std::string config_path, storage, clock, web_script, actor = "anonymous";
    app.add_option("--config", config_path, "INI configuration file");
    app.add_option("--storage", storage, "storage directory (overrides config)");
    app.add_option("--clock", clock, "'wall' or an RFC-3339 time for the simulated clock");
    app.add_option("--web", web_script, "simulated-web script (JSON Lines)");
    app.add_option("--actor", actor, "name recorded with changes");

    std::string source, key, session_id, entry, decision, uri, file, listen;
    unsigned long long target = 0;
    bool as_json = false;

    auto* reg = app.add_subcommand("register", "register a ReM by URI or Atom file");
    reg->add_option("source", source, "ReM URI, or path to an Atom file")->required();
    auto* check = app.add_subcommand("check", "open a curation session and print AR statuses");
    check->add_option("rem_key", key)->required();
    auto* aid = app.add_subcommand("aid", "relocation aid for an entry needing attention");
    aid->add_option("session", session_id)->required();
    aid->add_option("entry", entry)->required();
    auto* decide = app.add_subcommand("decide", "apply a decision: relocate URI | flag-gone | rearchive | accept-minor");
    decide->add_option("session", session_id)->required();
    decide->add_option("entry", entry)->required();
    decide->add_option("decision", decision)->required()->check(
        CLI::IsMember({"relocate", "flag-gone", "rearchive", "accept-minor"}));
    decide->add_option("uri", uri, "relocation target");
    auto* fin = app.add_subcommand("finalize", "commit a session");
    fin->add_option("session", session_id)->required();
    auto* hist = app.add_subcommand("history", "list revisions");
    hist->add_option("rem_key", key)->required();
    auto* rb = app.add_subcommand("rollback", "append a copy of an earlier revision");
    rb->add_option("rem_key", key)->required();
    rb->add_option("target", target)->required();
    auto* tl = app.add_subcommand("timeline", "per-entry change events");
    tl->add_option("rem_key", key)->required();
    tl->add_flag("--json", as_json, "print the export document");
    auto* val = app.add_subcommand("validate", "validate an Atom ReM file");
    val->add_option("file", file)->required();
    auto* serve = app.add_subcommand("serve", "run the HTTP API");
    serve->add_option("--listen", listen, "host:port (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (val->parsed()) {
            const auto doc = ore::parse_rem(read_file(file));
            const auto problems = ore::validate(doc);
            if (problems.empty()) {
                out << "valid\n";
                return 0;
            }
            for (const auto& p : problems) {
                out << "invalid\t" << p << '\n';
            }
            return 1;
        }
        if (decide->parsed() && decision == "relocate" && uri.empty()) {
            err << "error: relocate needs a target URI\n";
            return 2;
        }

        cfg::ServiceConfig config = config_path.empty() ? cfg::parse_config("") : cfg::load_config(config_path);
        cfg::apply_env(config);
        if (!storage.empty()) {
            config.storage = storage;
        }
        if (!clock.empty()) {
            config.clock = clock;
        }
        if (!web_script.empty()) {
            config.web_script = web_script;
        }
        if (!listen.empty()) {
            config.listen = listen;
        }
        auto rt = svc::build_runtime(config);
        auto& c = *rt.curator;

        int code = 0;
        if (reg->parsed()) {
            std::string src = source;
            if (std::filesystem::exists(source)) {
                src = read_file(source);
            }
            const auto r = c.register_rem(src, actor);
            out << "rem_key\t" << r.rem_key << '\n' << "rev_id\t" << r.rev_id << '\n';
            for (const auto& id : r.unfetched) {
                out << "unfetched\t" << id << '\n';
            }
            for (const auto& n : r.notes) {
                err << "note: " << n << '\n';
            }
        } else if (check->parsed()) {
            print_statuses(out, c.open_session(key, actor));
        } else if (aid->parsed()) {
            const auto a = c.attention_aid(session_id, entry);
            for (const auto& r : a.wi_copies) {
                out << "copy\t" << format_rfc3339(r.captured_at) << '\t' << r.member_id << '\t' << r.archived_uri
                    << '\n';
            }
            for (const auto& q : a.queries) {
                out << "query\t" << q << '\n';
            }
            for (const auto& u : a.candidates) {
                out << "candidate\t" << u << '\n';
            }
            if (a.fingerprint) {
                std::string sig;
                for (const auto& t : a.fingerprint->lexical_signature) {
                    sig += (sig.empty() ? "" : " ") + t;
                }
                out << "signature\t" << or_dash(sig) << '\n';
            }
            for (const auto& n : a.notes) {
                err << "note: " << n << '\n';
            }
        } else if (decide->parsed()) {
            const cur::Decision d{*cur::parse_decision_kind(decision), uri};
            const auto s = c.apply_decision(session_id, entry, d, actor);
            const auto* st = s.status(entry);
            out << entry << '\t' << cur::status_state_name(st->state) << '\t' << decision << '\n';
        } else if (fin->parsed()) {
            const auto r = c.finalize(session_id, actor);
            out << "rev_id\t" << r.rev_id << '\n' << "committed\t" << (r.committed ? "true" : "false") << '\n';
        } else if (hist->parsed()) {
            out << c.revisions().export_changelog(key);
        } else if (rb->parsed()) {
            out << "rev_id\t" << c.revisions().rollback(key, target, actor) << '\n';
        } else if (tl->parsed()) {
            if (as_json) {
                out << c.timeline_export(key).dump(2) << '\n';
            } else {
                for (const auto& e : c.timeline(key)) {
                    out << e.entry_id << '\t' << format_rfc3339(e.at) << '\t' << cur::event_kind_name(e.kind) << '\t'
                        << e.ar_uri << '\t' << e.label << '\n';
                }
            }
        } else if (serve->parsed()) {
            svc::ApiServer server(c, [&rt] { rt.save(); });
            const auto [host, port] = cfg::split_listen(config.listen);
            const int bound = server.bind(host, port);
            if (bound < 0) {
                err << "error: cannot listen on " << config.listen << '\n';
                return 1;
            }
            out << "listening\t" << host << ':' << bound << std::endl;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen_after_bind();
            g_server = nullptr;
        }
        rt.save();
        return code;
    } catch (const Error& e) {
        err << "error: " << errc_name(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace remember::cli
