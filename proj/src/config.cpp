#include "remember/config.hpp"

#include "remember/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace remember::cfg {

namespace pt = boost::property_tree;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double read_double(const pt::ptree& t, const std::string& key, double fallback) {
    const auto v = t.get_optional<std::string>(key);
    if (!v) {
        return fallback;
    }
    try {
        size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) {
            throw std::invalid_argument("trailing");
        }
        return d;
    } catch (const std::exception&) {
        throw Error(Errc::ConfigError, key + ": not a number: '" + *v + "'");
    }
}

long read_long(const pt::ptree& t, const std::string& key, long fallback) {
    const auto v = t.get_optional<std::string>(key);
    if (!v) {
        return fallback;
    }
    try {
        size_t used = 0;
        const long n = std::stol(*v, &used);
        if (used != v->size()) {
            throw std::invalid_argument("trailing");
        }
        return n;
    } catch (const std::exception&) {
        throw Error(Errc::ConfigError, key + ": not an integer: '" + *v + "'");
    }
}

MemberConfig read_member(const std::string& id, const pt::ptree& t) {
    const auto kind_name = t.get<std::string>("kind", "");
    const auto kind = wi::parse_member_kind(kind_name);
    if (!kind) {
        throw Error(Errc::ConfigError, "member:" + id + ": unknown kind '" + kind_name + "'");
    }
    MemberConfig m;
    const auto lag_days = read_long(t, "lag_days", 0);
    switch (*kind) {
    case wi::MemberKind::Archive:
        m.descriptor = wi::MemberDescriptor::archive(id, std::chrono::days{lag_days});
        break;
    case wi::MemberKind::Cache:
        m.descriptor = wi::MemberDescriptor::cache(id);
        break;
    case wi::MemberKind::Search:
        m.descriptor = wi::MemberDescriptor::search_engine(id, false);
        break;
    }
    if (auto caps = t.get_optional<std::string>("capabilities")) {
        m.descriptor.capabilities.clear();
        std::istringstream in(*caps);
        std::string c;
        while (std::getline(in, c, ',')) {
            c = trim(c);
            const auto cap = wi::parse_capability(c);
            if (!cap) {
                throw Error(Errc::ConfigError, "member:" + id + ": unknown capability '" + c + "'");
            }
            m.descriptor.capabilities.insert(*cap);
        }
    }
    const auto adapter = t.get<std::string>("adapter", "simulated");
    if (adapter != "simulated" && adapter != "http") {
        throw Error(Errc::ConfigError, "member:" + id + ": adapter must be simulated or http");
    }
    m.http = adapter == "http";
    m.templates.push = t.get<std::string>("push", "");
    m.templates.holdings = t.get<std::string>("holdings", "");
    m.templates.replay = t.get<std::string>("replay", "");
    m.templates.lookup = t.get<std::string>("lookup", "");
    m.templates.search = t.get<std::string>("search", "");
    if (auto problems = wi::validate(m.descriptor); !problems.empty()) {
        throw Error(Errc::ConfigError, "member:" + id + ": " + problems.front());
    }
    return m;
}

} // namespace

std::vector<MemberConfig> default_members() {
    return {{wi::MemberDescriptor::archive("archive"), false, {}},
            {wi::MemberDescriptor::cache("cache"), false, {}},
            {wi::MemberDescriptor::search_engine("search"), false, {}}};
}

ServiceConfig parse_config(const std::string& text) {
    // The INI reader only knows ';' comments; drop '#' lines first.
    std::istringstream lines(text);
    std::string line, cleaned;
    while (std::getline(lines, line)) {
        const auto t = trim(line);
        if (!t.empty() && t[0] == '#') {
            continue;
        }
        cleaned += line + '\n';
    }
    pt::ptree tree;
    try {
        std::istringstream in(cleaned);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw Error(Errc::ConfigError, std::string("config: ") + e.what());
    }

    ServiceConfig c;
    bool saw_members = false;
    for (const auto& [name, node] : tree) {
        if (node.empty()) {
            const auto value = node.get_value<std::string>();
            if (name == "listen") {
                c.listen = value;
            } else if (name == "storage") {
                c.storage = value;
            } else if (name == "clock") {
                c.clock = value;
            } else if (name == "web_script") {
                c.web_script = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(value);
            } else {
                throw Error(Errc::ConfigError, "unknown key '" + name + "'");
            }
            continue;
        }
        if (name == "thresholds") {
            c.thresholds.minor = read_double(node, "minor", c.thresholds.minor);
            c.thresholds.wrong_content = read_double(node, "wrong_content", c.thresholds.wrong_content);
        } else if (name == "fetch") {
            const long n = read_long(node, "max_in_flight", static_cast<long>(c.max_in_flight));
            if (n <= 0) {
                throw Error(Errc::ConfigError, "fetch.max_in_flight must be positive");
            }
            c.max_in_flight = static_cast<size_t>(n);
            const double secs = read_double(node, "deadline_seconds", 10.0);
            if (!(secs > 0)) {
                throw Error(Errc::ConfigError, "fetch.deadline_seconds must be positive");
            }
            c.deadline = web::Duration{static_cast<long>(secs * 1000)};
        } else if (name.rfind("member:", 0) == 0) {
            saw_members = true;
            c.members.push_back(read_member(name.substr(7), node));
        } else {
            throw Error(Errc::ConfigError, "unknown section [" + name + "]");
        }
    }
    if (!saw_members) {
        c.members = default_members();
    }
    return c;
}

ServiceConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::ConfigError, "cannot read config " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    auto c = parse_config(ss.str());
    // Relative paths in the file are relative to the file.
    const auto base = path.parent_path();
    if (c.storage.is_relative() && !base.empty()) {
        c.storage = base / c.storage;
    }
    if (c.web_script && c.web_script->is_relative() && !base.empty()) {
        c.web_script = base / *c.web_script;
    }
    return c;
}

void apply_env(ServiceConfig& config) {
    if (const char* v = std::getenv("REMEMBER_LISTEN"); v && *v) {
        config.listen = v;
    }
    if (const char* v = std::getenv("REMEMBER_STORAGE"); v && *v) {
        config.storage = v;
    }
}

std::pair<std::string, int> split_listen(const std::string& listen) {
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) {
        throw Error(Errc::ConfigError, "listen must be host:port, got '" + listen + "'");
    }
    std::string host = listen.substr(0, colon);
    if (host.empty()) {
        host = "127.0.0.1";
    }
    int port = 0;
    try {
        port = std::stoi(listen.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(Errc::ConfigError, "listen port is not a number in '" + listen + "'");
    }
    if (port < 0 || port > 65535) {
        throw Error(Errc::ConfigError, "listen port out of range in '" + listen + "'");
    }
    return {host, port};
}

std::vector<std::string> validate(const ServiceConfig& config) {
    std::vector<std::string> out;
    const auto& t = config.thresholds;
    if (!(t.minor > 0 && t.minor < 1)) {
        out.emplace_back("thresholds.minor must lie in (0,1)");
    }
    if (!(t.wrong_content > 0 && t.wrong_content < 1)) {
        out.emplace_back("thresholds.wrong_content must lie in (0,1)");
    }
    if (!(t.wrong_content < t.minor)) {
        out.emplace_back("thresholds.wrong_content must be below thresholds.minor");
    }
    if (config.max_in_flight == 0) {
        out.emplace_back("fetch.max_in_flight must be positive");
    }
    if (config.clock != "wall" && !parse_rfc3339(config.clock)) {
        out.emplace_back("clock must be 'wall' or an RFC-3339 timestamp");
    }
    try {
        split_listen(config.listen);
    } catch (const Error& e) {
        out.emplace_back(e.what());
    }
    std::error_code ec;
    std::filesystem::create_directories(config.storage, ec);
    const auto probe = config.storage / ".write-probe";
    {
        std::ofstream f(probe);
        if (ec || !f) {
            out.emplace_back("storage directory " + config.storage.string() + " is not writable");
        }
    }
    std::filesystem::remove(probe, ec);
    std::vector<std::string> ids;
    for (const auto& m : config.members) {
        if (std::find(ids.begin(), ids.end(), m.descriptor.member_id) != ids.end()) {
            out.emplace_back("duplicate member '" + m.descriptor.member_id + "'");
        }
        ids.push_back(m.descriptor.member_id);
    }
    return out;
}

} // namespace remember::cfg
