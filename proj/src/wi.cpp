#include "remember/wi.hpp"

#include "remember/error.hpp"
#include "remember/hash.hpp"
#include "remember/json_codec.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <unordered_set>

namespace remember::wi {

namespace {

std::filesystem::path state_file(const std::filesystem::path& dir, const std::string& id) {
    // Member ids may contain characters that are unsafe in file names.
    return dir / ("member-" + sha256_hex(id).substr(0, 16) + ".json");
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << j.dump(1);
    if (!out) {
        throw Error(Errc::StorageFailure, "cannot write " + path.string());
    }
}

std::optional<nlohmann::json> read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::StorageFailure, path.string() + ": " + e.what());
    }
}

void sort_newest_first(std::vector<WIRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const WIRecord& a, const WIRecord& b) {
        if (a.captured_at != b.captured_at) {
            return a.captured_at > b.captured_at;
        }
        if (a.member_id != b.member_id) {
            return a.member_id < b.member_id;
        }
        return a.archived_uri < b.archived_uri;
    });
}

// Occurrences of `seq` as a contiguous run in `toks`.
size_t count_sequence(const std::vector<std::string_view>& toks, const std::vector<std::string>& seq) {
    if (seq.empty() || toks.size() < seq.size()) {
        return 0;
    }
    size_t n = 0;
    for (size_t i = 0; i + seq.size() <= toks.size(); ++i) {
        bool match = true;
        for (size_t k = 0; k < seq.size() && match; ++k) {
            match = toks[i + k] == seq[k];
        }
        n += match ? 1 : 0;
    }
    return n;
}

} // namespace

std::string_view member_kind_name(MemberKind kind) noexcept {
    switch (kind) {
    case MemberKind::Archive: return "archive";
    case MemberKind::Cache: return "cache";
    case MemberKind::Search: return "search";
    }
    return "";
}

std::optional<MemberKind> parse_member_kind(std::string_view name) noexcept {
    for (auto k : {MemberKind::Archive, MemberKind::Cache, MemberKind::Search}) {
        if (member_kind_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::string_view capability_name(Capability cap) noexcept {
    switch (cap) {
    case Capability::Push: return "push";
    case Capability::Lookup: return "lookup";
    case Capability::Holdings: return "holdings";
    case Capability::Search: return "search";
    }
    return "";
}

std::optional<Capability> parse_capability(std::string_view name) noexcept {
    for (auto c : {Capability::Push, Capability::Lookup, Capability::Holdings, Capability::Search}) {
        if (capability_name(c) == name) {
            return c;
        }
    }
    return std::nullopt;
}

MemberDescriptor MemberDescriptor::archive(std::string id, std::chrono::seconds lag) {
    return {std::move(id), MemberKind::Archive, {Capability::Push, Capability::Holdings}, lag, true};
}

MemberDescriptor MemberDescriptor::cache(std::string id) {
    return {std::move(id), MemberKind::Cache, {Capability::Lookup}, std::chrono::seconds{0}, false};
}

MemberDescriptor MemberDescriptor::search_engine(std::string id, bool with_cache) {
    MemberDescriptor d{std::move(id), MemberKind::Search, {Capability::Search}, std::chrono::seconds{0},
                       false};
    if (with_cache) {
        d.capabilities.insert(Capability::Lookup);
    }
    return d;
}

std::vector<std::string> validate(const MemberDescriptor& d) {
    std::vector<std::string> out;
    if (d.member_id.empty()) {
        out.emplace_back("member_id: empty");
    }
    if (d.lag.count() < 0) {
        out.emplace_back("lag: negative");
    }
    switch (d.kind) {
    case MemberKind::Archive:
        if (!d.has(Capability::Push) || !d.has(Capability::Holdings)) {
            out.emplace_back("archive members need push and holdings capabilities");
        }
        if (!d.keeps_history) {
            out.emplace_back("archive members keep history");
        }
        break;
    case MemberKind::Cache:
        if (!d.has(Capability::Lookup)) {
            out.emplace_back("cache members need the lookup capability");
        }
        if (d.keeps_history) {
            out.emplace_back("cache members do not keep history");
        }
        break;
    case MemberKind::Search:
        if (!d.has(Capability::Search)) {
            out.emplace_back("search members need the search capability");
        }
        break;
    }
    return out;
}

std::string archived_uri_for(std::string_view member_id, Timestamp captured_at,
                             std::string_view original_uri) {
    std::string out(member_id);
    out += '/';
    out += format_compact(captured_at);
    out += '/';
    out += original_uri;
    return out;
}

// --- Member -------------------------------------------------------------------

Member::Member(MemberDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    if (auto problems = validate(descriptor_); !problems.empty()) {
        throw Error(Errc::InvalidArgument, "member '" + descriptor_.member_id + "': " + problems.front());
    }
}

void Member::require(Capability c) const {
    if (!descriptor_.has(c)) {
        throw Error(Errc::CapabilityMissing, "member '" + id() + "' lacks the " +
                                                 std::string(capability_name(c)) + " capability");
    }
}

WIRecord Member::push(const std::string&, const std::string&, const std::string&, Timestamp) {
    require(Capability::Push);
    throw Error(Errc::CapabilityMissing, "member '" + id() + "' does not implement push");
}

std::optional<WIRecord> Member::lookup(const std::string&) {
    require(Capability::Lookup);
    throw Error(Errc::CapabilityMissing, "member '" + id() + "' does not implement lookup");
}

std::vector<WIRecord> Member::visible_records(const std::string&, Timestamp) {
    require(Capability::Holdings);
    throw Error(Errc::CapabilityMissing, "member '" + id() + "' does not implement holdings");
}

std::vector<std::string> Member::search(const std::string&) {
    require(Capability::Search);
    throw Error(Errc::CapabilityMissing, "member '" + id() + "' does not implement search");
}

std::vector<Holding> Member::holdings(const std::string& uri, Timestamp now) {
    require(Capability::Holdings);
    std::vector<Holding> out;
    for (const auto& r : visible_records(uri, now)) {
        out.push_back({r.captured_at, r.archived_uri});
    }
    return out;
}

void SimulatedMember::require_available() const {
    if (!available_) {
        throw Error(Errc::MemberUnavailable, "member '" + id() + "' is unavailable");
    }
}

// --- SimulatedArchive ---------------------------------------------------------

SimulatedArchive::SimulatedArchive(MemberDescriptor descriptor) : SimulatedMember(std::move(descriptor)) {
    if (this->descriptor().kind != MemberKind::Archive) {
        throw Error(Errc::InvalidArgument, "SimulatedArchive needs an archive descriptor");
    }
}

WIRecord SimulatedArchive::push(const std::string& original_uri, const std::string& content,
                                const std::string& media_type, Timestamp at) {
    require(Capability::Push);
    require_available();
    std::unique_lock lock(mutex_);
    auto& list = records_[original_uri];
    for (const auto& r : list) {
        if (r.captured_at == at) {
            return r; // one capture per (member, uri, second)
        }
    }
    list.push_back({id(), original_uri, archived_uri_for(id(), at, original_uri), at, content, media_type});
    return list.back();
}

std::vector<WIRecord> SimulatedArchive::visible_records(const std::string& uri, Timestamp now) {
    require(Capability::Holdings);
    require_available();
    std::shared_lock lock(mutex_);
    std::vector<WIRecord> out;
    if (const auto it = records_.find(uri); it != records_.end()) {
        for (const auto& r : it->second) {
            if (r.captured_at + descriptor().lag <= now) {
                out.push_back(r);
            }
        }
    }
    sort_newest_first(out);
    return out;
}

std::vector<WIRecord> SimulatedArchive::all_records() const {
    std::shared_lock lock(mutex_);
    std::vector<WIRecord> out;
    for (const auto& [uri, list] : records_) {
        out.insert(out.end(), list.begin(), list.end());
    }
    return out;
}

size_t SimulatedArchive::record_count() const {
    std::shared_lock lock(mutex_);
    size_t n = 0;
    for (const auto& [uri, list] : records_) {
        n += list.size();
    }
    return n;
}

void SimulatedArchive::save(const std::filesystem::path& dir) const {
    write_json(state_file(dir, id()), nlohmann::json{{"member_id", id()}, {"records", all_records()}});
}

void SimulatedArchive::load(const std::filesystem::path& dir) {
    const auto j = read_json(state_file(dir, id()));
    if (!j) {
        return;
    }
    std::unique_lock lock(mutex_);
    records_.clear();
    for (const auto& r : j->at("records").get<std::vector<WIRecord>>()) {
        records_[r.original_uri].push_back(r);
    }
}

// --- SimulatedCache -----------------------------------------------------------

SimulatedCache::SimulatedCache(MemberDescriptor descriptor) : SimulatedMember(std::move(descriptor)) {}

void SimulatedCache::crawl(const std::string& uri, const std::string& content,
                           const std::string& media_type, Timestamp at) {
    std::unique_lock lock(mutex_);
    records_[uri] = {id(), uri, archived_uri_for(id(), at, uri), at, content, media_type};
}

void SimulatedCache::evict(const std::string& uri) {
    std::unique_lock lock(mutex_);
    records_.erase(uri);
}

std::optional<WIRecord> SimulatedCache::lookup(const std::string& uri) {
    require(Capability::Lookup);
    require_available();
    std::shared_lock lock(mutex_);
    if (const auto it = records_.find(uri); it != records_.end()) {
        return it->second;
    }
    return std::nullopt;
}

std::vector<WIRecord> SimulatedCache::visible_records(const std::string& uri, Timestamp) {
    require(Capability::Holdings);
    auto r = lookup(uri);
    return r ? std::vector<WIRecord>{*r} : std::vector<WIRecord>{};
}

std::vector<WIRecord> SimulatedCache::all_records() const {
    std::shared_lock lock(mutex_);
    std::vector<WIRecord> out;
    for (const auto& [uri, r] : records_) {
        out.push_back(r);
    }
    return out;
}

void SimulatedCache::save(const std::filesystem::path& dir) const {
    write_json(state_file(dir, id()), nlohmann::json{{"member_id", id()}, {"records", all_records()}});
}

void SimulatedCache::load(const std::filesystem::path& dir) {
    const auto j = read_json(state_file(dir, id()));
    if (!j) {
        return;
    }
    std::unique_lock lock(mutex_);
    records_.clear();
    for (const auto& r : j->at("records").get<std::vector<WIRecord>>()) {
        records_[r.original_uri] = r;
    }
}

// --- SimulatedSearchEngine ----------------------------------------------------

std::vector<std::vector<std::string>> parse_query(std::string_view query) {
    std::vector<std::vector<std::string>> out;
    auto add = [&](std::string_view raw) {
        const auto text = fp::extract_text(raw, "text/plain");
        std::vector<std::string> seq;
        for (auto t : fp::tokens(text)) {
            seq.emplace_back(t);
        }
        if (!seq.empty()) {
            out.push_back(std::move(seq));
        }
    };
    size_t i = 0;
    while (i < query.size()) {
        if (query[i] == '"') {
            const auto close = query.find('"', i + 1);
            const auto end = close == std::string_view::npos ? query.size() : close;
            add(query.substr(i + 1, end - i - 1));
            i = end + 1;
            continue;
        }
        const auto end = query.find_first_of(" \t\"", i);
        const auto stop = end == std::string_view::npos ? query.size() : end;
        add(query.substr(i, stop - i));
        i = stop == query.size() ? stop : (query[stop] == '"' ? stop : stop + 1);
    }
    return out;
}

SimulatedSearchEngine::SimulatedSearchEngine(MemberDescriptor descriptor)
    : SimulatedMember(std::move(descriptor)) {}

void SimulatedSearchEngine::index(const std::string& uri, const std::string& content,
                                  const std::string& media_type, Timestamp at) {
    std::unique_lock lock(mutex_);
    docs_[uri] = {{id(), uri, archived_uri_for(id(), at, uri), at, content, media_type},
                  fp::extract_text(content, media_type)};
}

void SimulatedSearchEngine::evict(const std::string& uri) {
    std::unique_lock lock(mutex_);
    docs_.erase(uri);
}

std::vector<std::string> SimulatedSearchEngine::search(const std::string& query) {
    require(Capability::Search);
    require_available();
    const auto terms = parse_query(query);
    if (terms.empty()) {
        return {};
    }
    std::shared_lock lock(mutex_);
    std::vector<std::pair<size_t, std::string>> hits;
    for (const auto& [uri, doc] : docs_) {
        const auto toks = fp::tokens(doc.text);
        size_t score = 0;
        bool all = true;
        for (const auto& seq : terms) {
            const size_t n = count_sequence(toks, seq);
            if (n == 0) {
                all = false;
                break;
            }
            score += n;
        }
        if (all) {
            hits.emplace_back(score, uri);
        }
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> out;
    for (auto& [score, uri] : hits) {
        out.push_back(std::move(uri));
    }
    return out;
}

std::optional<WIRecord> SimulatedSearchEngine::lookup(const std::string& uri) {
    require(Capability::Lookup);
    require_available();
    std::shared_lock lock(mutex_);
    if (const auto it = docs_.find(uri); it != docs_.end()) {
        return it->second.record;
    }
    return std::nullopt;
}

std::vector<WIRecord> SimulatedSearchEngine::visible_records(const std::string& uri, Timestamp) {
    require(Capability::Holdings);
    auto r = lookup(uri);
    return r ? std::vector<WIRecord>{*r} : std::vector<WIRecord>{};
}

void SimulatedSearchEngine::save(const std::filesystem::path& dir) const {
    std::vector<WIRecord> records;
    {
        std::shared_lock lock(mutex_);
        for (const auto& [uri, doc] : docs_) {
            records.push_back(doc.record);
        }
    }
    write_json(state_file(dir, id()), nlohmann::json{{"member_id", id()}, {"records", records}});
}

void SimulatedSearchEngine::load(const std::filesystem::path& dir) {
    const auto j = read_json(state_file(dir, id()));
    if (!j) {
        return;
    }
    {
        std::unique_lock lock(mutex_);
        docs_.clear();
    }
    for (const auto& r : j->at("records").get<std::vector<WIRecord>>()) {
        index(r.original_uri, r.content, r.media_type, r.captured_at);
    }
}

// --- Registry -----------------------------------------------------------------

Registry::Registry(const Clock& clock) : clock_(clock) {}

void Registry::add(std::shared_ptr<Member> member) {
    std::unique_lock lock(mutex_);
    for (const auto& m : members_) {
        if (m->id() == member->id()) {
            throw Error(Errc::InvalidArgument, "duplicate member id '" + member->id() + "'");
        }
    }
    members_.push_back(std::move(member));
}

Member& Registry::member(const std::string& id) const {
    std::shared_lock lock(mutex_);
    for (const auto& m : members_) {
        if (m->id() == id) {
            return *m;
        }
    }
    throw Error(Errc::UnknownMember, "no WI member '" + id + "'");
}

std::vector<std::shared_ptr<Member>> Registry::members() const {
    std::shared_lock lock(mutex_);
    return members_;
}

std::vector<std::string> Registry::ids_with(Capability c) const {
    std::vector<std::string> out;
    for (const auto& m : members()) {
        if (m->descriptor().has(c)) {
            out.push_back(m->id());
        }
    }
    return out;
}

WIRecord Registry::push(const std::string& member_id, const std::string& original_uri,
                        const std::string& content, const std::string& media_type, Timestamp at) {
    return member(member_id).push(original_uri, content, media_type, at);
}

std::optional<WIRecord> Registry::lookup(const std::string& member_id, const std::string& uri) {
    return member(member_id).lookup(uri);
}

std::vector<Holding> Registry::holdings(const std::string& member_id, const std::string& uri) {
    return member(member_id).holdings(uri, clock_.now());
}

std::vector<std::string> Registry::search(const std::string& member_id, const std::string& query) {
    return member(member_id).search(query);
}

CopySearch Registry::find_copies_detailed(const std::string& uri) {
    CopySearch out;
    const Timestamp now = clock_.now();
    for (const auto& m : members()) {
        const auto& d = m->descriptor();
        try {
            if (d.has(Capability::Holdings)) {
                auto recs = m->visible_records(uri, now);
                out.records.insert(out.records.end(), recs.begin(), recs.end());
            } else if (d.has(Capability::Lookup)) {
                if (auto r = m->lookup(uri)) {
                    out.records.push_back(std::move(*r));
                }
            }
        } catch (const Error& e) {
            if (e.code() != Errc::MemberUnavailable) {
                throw;
            }
            out.notes.push_back("skipped " + m->id() + ": " + e.what());
        }
    }
    sort_newest_first(out.records);
    return out;
}

std::vector<WIRecord> Registry::find_copies(const std::string& uri) {
    return find_copies_detailed(uri).records;
}

std::vector<WIRecord> Registry::push_to_archives(const std::string& original_uri,
                                                 const std::string& content,
                                                 const std::string& media_type, Timestamp at,
                                                 std::vector<std::string>* notes) {
    std::vector<WIRecord> out;
    for (const auto& m : members()) {
        const auto& d = m->descriptor();
        if (d.kind != MemberKind::Archive || !d.has(Capability::Push)) {
            continue;
        }
        try {
            out.push_back(m->push(original_uri, content, media_type, at));
        } catch (const Error& e) {
            if (e.code() != Errc::MemberUnavailable) {
                throw;
            }
            if (notes) {
                notes->push_back("push to " + m->id() + " failed: " + e.what());
            }
        }
    }
    return out;
}

void Registry::save_simulated(const std::filesystem::path& dir) const {
    for (const auto& m : members()) {
        if (const auto* sim = dynamic_cast<const SimulatedMember*>(m.get())) {
            sim->save(dir);
        }
    }
}

void Registry::load_simulated(const std::filesystem::path& dir) {
    for (const auto& m : members()) {
        if (auto* sim = dynamic_cast<SimulatedMember*>(m.get())) {
            sim->load(dir);
        }
    }
}

// --- relocation queries --------------------------------------------------------

std::vector<std::string> entry_authors(const ore::AREntry& entry) {
    std::vector<std::string> out;
    for (const auto& [key, value] : entry.extra_metadata) {
        if ((key == "author/name" || key == "author") && !value.empty()) {
            out.push_back(value);
        }
    }
    return out;
}

std::vector<std::string> build_relocation_queries(const ore::AREntry& entry,
                                                  const std::optional<fp::Fingerprint>& fp) {
    std::vector<std::string> candidates;
    if (!entry.title.empty()) {
        candidates.push_back("\"" + entry.title + "\"");
    }
    std::string with_authors = entry.title;
    for (const auto& a : entry_authors(entry)) {
        if (!with_authors.empty()) {
            with_authors += ' ';
        }
        with_authors += a;
    }
    candidates.push_back(with_authors);
    if (fp) {
        std::string sig;
        for (const auto& t : fp->lexical_signature) {
            if (!sig.empty()) {
                sig += ' ';
            }
            sig += t;
        }
        candidates.push_back(sig);
    }
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (auto& q : candidates) {
        if (!q.empty() && seen.insert(q).second) {
            out.push_back(std::move(q));
        }
    }
    return out;
}

} // namespace remember::wi
