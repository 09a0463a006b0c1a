#include "remember/curator.hpp"

#include "remember/error.hpp"
#include "remember/hash.hpp"
#include "remember/json_codec.hpp"
#include "remember/uri.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace remember::cur {

namespace {

constexpr std::string_view kAtomMediaType = "application/atom+xml";

template <typename E, size_t N>
std::optional<E> parse_enum(std::string_view s, const std::array<E, N>& all, std::string_view (*name)(E) noexcept) {
    for (E e : all) {
        if (name(e) == s) {
            return e;
        }
    }
    return std::nullopt;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error(Errc::StorageFailure, "cannot open " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Write-then-rename so readers never see a half-written file.
void write_atomic(const std::filesystem::path& p, const std::string& data) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    const auto tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << data;
        out.flush();
        if (!out) {
            throw Error(Errc::StorageFailure, "cannot write " + tmp);
        }
    }
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
        throw Error(Errc::StorageFailure, "cannot rename " + tmp + ": " + ec.message());
    }
}

nlohmann::json parse_json_file(const std::filesystem::path& p) {
    try {
        return nlohmann::json::parse(slurp(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::StorageFailure, p.string() + ": " + e.what());
    }
}

std::string fmt_similarity(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", s);
    return buf;
}

std::vector<fp::WICopy> to_copies(const std::vector<wi::WIRecord>& records) {
    std::vector<fp::WICopy> out;
    for (const auto& r : records) {
        out.push_back({r.member_id, r.archived_uri, r.captured_at});
    }
    return out;
}

void sort_copies(std::vector<fp::WICopy>& copies) {
    std::stable_sort(copies.begin(), copies.end(), [](const fp::WICopy& a, const fp::WICopy& b) {
        if (a.captured_at != b.captured_at) {
            return a.captured_at > b.captured_at;
        }
        return a.member_id < b.member_id;
    });
}

std::string trim_left(const std::string& s) {
    const auto i = s.find_first_not_of(" \t\r\n");
    return i == std::string::npos ? std::string{} : s.substr(i);
}

// Working document: the curated head with upstream edits (last_live -> live)
// carried over field by field.
ore::ResourceMapDoc merge_upstream(const ore::ResourceMapDoc& head, const ore::ResourceMapDoc& base,
                                   const ore::ResourceMapDoc& live) {
    ore::ResourceMapDoc out = head;
    if (base.title != live.title) {
        out.title = live.title;
    }
    if (base.authors != live.authors) {
        out.authors = live.authors;
    }
    if (base.updated != live.updated) {
        out.updated = live.updated;
    }
    if (base.aggregation_uri != live.aggregation_uri) {
        out.aggregation_uri = live.aggregation_uri;
    }
    out.entries.clear();
    for (const auto& e : live.entries) {
        const auto* was = base.find(e.entry_id);
        const auto* cur = head.find(e.entry_id);
        if (!was || !cur) {
            out.entries.push_back(e);
            continue;
        }
        ore::AREntry merged = *cur;
        if (was->ar_uri != e.ar_uri) {
            merged.ar_uri = e.ar_uri;
            merged.flagged_gone = e.flagged_gone;
        } else if (was->flagged_gone != e.flagged_gone) {
            merged.flagged_gone = e.flagged_gone;
        }
        if (was->title != e.title) {
            merged.title = e.title;
        }
        if (was->media_type != e.media_type) {
            merged.media_type = e.media_type;
        }
        if (was->updated != e.updated) {
            merged.updated = e.updated;
        }
        if (was->extra_metadata != e.extra_metadata) {
            merged.extra_metadata = e.extra_metadata;
        }
        out.entries.push_back(std::move(merged));
    }
    return out;
}

std::string decision_label(const AppliedDecision& d) {
    return d.adopted_archived_copy ? "relocated to archived copy " + d.decision.uri
                                   : "moved from " + d.previous_uri + " to " + d.decision.uri;
}

} // namespace

// --- names -----------------------------------------------------------------------

std::string_view status_state_name(StatusState s) noexcept {
    switch (s) {
    case StatusState::Pending: return "Pending";
    case StatusState::Ok: return "Ok";
    case StatusState::NeedsAttention: return "NeedsAttention";
    case StatusState::FlaggedGone: return "FlaggedGone";
    }
    return "";
}

std::string_view attention_reason_name(AttentionReason r) noexcept {
    switch (r) {
    case AttentionReason::Missing: return "Missing";
    case AttentionReason::WrongContentCandidate: return "WrongContentCandidate";
    case AttentionReason::ChangedMinor: return "ChangedMinor";
    case AttentionReason::ChangedSignificant: return "ChangedSignificant";
    }
    return "";
}

std::string_view decision_kind_name(DecisionKind d) noexcept {
    switch (d) {
    case DecisionKind::Relocate: return "relocate";
    case DecisionKind::FlagGone: return "flag-gone";
    case DecisionKind::Rearchive: return "rearchive";
    case DecisionKind::AcceptMinor: return "accept-minor";
    }
    return "";
}

std::string_view event_kind_name(EventKind e) noexcept {
    switch (e) {
    case EventKind::FirstArchived: return "FirstArchived";
    case EventKind::MinorChange: return "MinorChange";
    case EventKind::SignificantChange: return "SignificantChange";
    case EventKind::Moved: return "Moved";
    case EventKind::Missing: return "Missing";
    case EventKind::FlaggedGone: return "FlaggedGone";
    case EventKind::Rearchived: return "Rearchived";
    }
    return "";
}

std::optional<StatusState> parse_status_state(std::string_view s) noexcept {
    return parse_enum<StatusState, 4>(s, {StatusState::Pending, StatusState::Ok, StatusState::NeedsAttention,
                                          StatusState::FlaggedGone},
                                      status_state_name);
}

std::optional<AttentionReason> parse_attention_reason(std::string_view s) noexcept {
    return parse_enum<AttentionReason, 4>(
        s, {AttentionReason::Missing, AttentionReason::WrongContentCandidate, AttentionReason::ChangedMinor,
            AttentionReason::ChangedSignificant},
        attention_reason_name);
}

std::optional<DecisionKind> parse_decision_kind(std::string_view s) noexcept {
    return parse_enum<DecisionKind, 4>(
        s, {DecisionKind::Relocate, DecisionKind::FlagGone, DecisionKind::Rearchive, DecisionKind::AcceptMinor},
        decision_kind_name);
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
    return parse_enum<EventKind, 7>(s, {EventKind::FirstArchived, EventKind::MinorChange,
                                        EventKind::SignificantChange, EventKind::Moved, EventKind::Missing,
                                        EventKind::FlaggedGone, EventKind::Rearchived},
                                    event_kind_name);
}

const ARStatus* CurationSession::status(std::string_view entry_id) const {
    for (const auto& s : statuses) {
        if (s.entry_id == entry_id) {
            return &s;
        }
    }
    return nullptr;
}

bool CurationSession::resolved() const {
    return std::none_of(statuses.begin(), statuses.end(),
                        [](const ARStatus& s) { return s.state == StatusState::Pending; });
}

// --- JSON ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const ARStatus& s) {
    j = nlohmann::json{{"entry_id", s.entry_id},
                       {"ar_uri", s.ar_uri},
                       {"state", status_state_name(s.state)},
                       {"reason", s.reason ? nlohmann::json(attention_reason_name(*s.reason)) : nullptr},
                       {"similarity", optional_json(s.similarity)},
                       {"fetched_at", s.fetched_at ? timestamp_json(*s.fetched_at) : nullptr},
                       {"detail", s.detail},
                       {"resolution", s.resolution ? nlohmann::json(decision_kind_name(*s.resolution)) : nullptr}};
}

void from_json(const nlohmann::json& j, ARStatus& s) {
    s.entry_id = j.at("entry_id").get<std::string>();
    s.ar_uri = j.at("ar_uri").get<std::string>();
    s.state = parse_status_state(j.at("state").get<std::string>()).value_or(StatusState::Pending);
    s.reason.reset();
    if (auto r = optional_from<std::string>(j, "reason")) {
        s.reason = parse_attention_reason(*r);
    }
    s.similarity = optional_from<double>(j, "similarity");
    s.fetched_at.reset();
    if (j.contains("fetched_at") && !j.at("fetched_at").is_null()) {
        s.fetched_at = timestamp_from_json(j.at("fetched_at"));
    }
    s.detail = j.value("detail", "");
    s.resolution.reset();
    if (auto r = optional_from<std::string>(j, "resolution")) {
        s.resolution = parse_decision_kind(*r);
    }
}

void to_json(nlohmann::json& j, const TimelineEvent& e) {
    j = nlohmann::json{{"entry_id", e.entry_id},
                       {"ar_uri", e.ar_uri},
                       {"at", timestamp_json(e.at)},
                       {"kind", event_kind_name(e.kind)},
                       {"label", e.label}};
}

void from_json(const nlohmann::json& j, TimelineEvent& e) {
    e.entry_id = j.at("entry_id").get<std::string>();
    e.ar_uri = j.at("ar_uri").get<std::string>();
    e.at = timestamp_from_json(j.at("at"));
    const auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) {
        throw Error(Errc::InvalidArgument, "unknown event kind");
    }
    e.kind = *kind;
    e.label = j.value("label", "");
}

namespace {

nlohmann::json decision_json(const AppliedDecision& d) {
    return {{"entry_id", d.entry_id},
            {"decision", decision_kind_name(d.decision.kind)},
            {"uri", d.decision.uri},
            {"actor", d.actor},
            {"previous_uri", d.previous_uri},
            {"adopted_archived_copy", d.adopted_archived_copy}};
}

AppliedDecision decision_from_json(const nlohmann::json& j) {
    AppliedDecision d;
    d.entry_id = j.at("entry_id").get<std::string>();
    d.decision.kind = parse_decision_kind(j.at("decision").get<std::string>()).value_or(DecisionKind::FlagGone);
    d.decision.uri = j.value("uri", "");
    d.actor = j.value("actor", "");
    d.previous_uri = j.value("previous_uri", "");
    d.adopted_archived_copy = j.value("adopted_archived_copy", false);
    return d;
}

} // namespace

nlohmann::json session_summary(const CurationSession& s) {
    auto decisions = nlohmann::json::array();
    for (const auto& d : s.applied_decisions) {
        decisions.push_back(decision_json(d));
    }
    size_t pending = 0, attention = 0;
    for (const auto& st : s.statuses) {
        pending += st.state == StatusState::Pending ? 1 : 0;
        attention += st.state == StatusState::NeedsAttention ? 1 : 0;
    }
    return {{"session_id", s.session_id},
            {"rem_key", s.rem_key},
            {"actor", s.actor},
            {"opened_at", timestamp_json(s.opened_at)},
            {"base_rev", s.base_rev},
            {"rem_missing", s.rem_missing},
            {"rem_missing_detail", s.rem_missing_detail},
            {"statuses", s.statuses},
            {"pending", pending},
            {"needs_attention", attention},
            {"external_changes", s.external_changes},
            {"applied_decisions", decisions},
            {"staged_events", s.staged_events},
            {"notes", s.notes},
            {"closed", s.closed},
            {"finalized_rev", optional_json(s.finalized_rev)}};
}

void to_json(nlohmann::json& j, const CurationSession& s) {
    j = session_summary(s);
    j["live_doc"] = s.live_doc;
    j["upstream_text"] = s.upstream_text;
    auto staged = nlohmann::json::array();
    for (const auto& f : s.staged_fingerprints) {
        staged.push_back({{"entry_id", f.entry_id}, {"fingerprint", f.fingerprint}, {"text", f.text}});
    }
    j["staged_fingerprints"] = staged;
    auto fetched = nlohmann::json::object();
    for (const auto& [id, f] : s.fetched) {
        fetched[id] = {{"uri", f.uri},
                       {"content_base64", base64_encode(f.content)},
                       {"media_type", f.media_type},
                       {"fetched_at", timestamp_json(f.fetched_at)}};
    }
    j["fetched"] = fetched;
}

void from_json(const nlohmann::json& j, CurationSession& s) {
    s.session_id = j.at("session_id").get<std::string>();
    s.rem_key = j.at("rem_key").get<std::string>();
    s.actor = j.value("actor", "");
    s.opened_at = timestamp_from_json(j.at("opened_at"));
    s.base_rev = j.at("base_rev").get<RevId>();
    s.rem_missing = j.value("rem_missing", false);
    s.rem_missing_detail = j.value("rem_missing_detail", "");
    s.live_doc = j.at("live_doc").get<ore::ResourceMapDoc>();
    s.upstream_text = j.value("upstream_text", "");
    s.statuses = j.at("statuses").get<std::vector<ARStatus>>();
    s.external_changes = j.at("external_changes").get<std::vector<ore::ChangeRecord>>();
    s.applied_decisions.clear();
    for (const auto& d : j.at("applied_decisions")) {
        s.applied_decisions.push_back(decision_from_json(d));
    }
    s.staged_events = j.at("staged_events").get<std::vector<TimelineEvent>>();
    s.staged_fingerprints.clear();
    for (const auto& f : j.at("staged_fingerprints")) {
        s.staged_fingerprints.push_back({f.at("entry_id").get<std::string>(),
                                         f.at("fingerprint").get<fp::Fingerprint>(),
                                         f.value("text", "")});
    }
    s.fetched.clear();
    for (const auto& [id, f] : j.at("fetched").items()) {
        s.fetched[id] = {f.at("uri").get<std::string>(), base64_decode(f.at("content_base64").get<std::string>()),
                         f.at("media_type").get<std::string>(), timestamp_from_json(f.at("fetched_at"))};
    }
    s.notes = j.value("notes", std::vector<std::string>{});
    s.closed = j.value("closed", false);
    s.finalized_rev = optional_from<RevId>(j, "finalized_rev");
}

namespace {

nlohmann::json state_json(const RemState& st) {
    nlohmann::json fps = nlohmann::json::object();
    for (const auto& [id, f] : st.fingerprints) {
        fps[id] = f;
    }
    return {{"rem_key", st.rem_key},
            {"rem_uri", st.rem_uri},
            {"last_live", st.last_live},
            {"fingerprints", fps},
            {"events", st.events},
            {"last_session", optional_json(st.last_session)},
            {"last_statuses", st.last_statuses}};
}

RemState state_from_json(const nlohmann::json& j) {
    RemState st;
    st.rem_key = j.at("rem_key").get<std::string>();
    st.rem_uri = j.at("rem_uri").get<std::string>();
    st.last_live = j.at("last_live").get<std::string>();
    for (const auto& [id, f] : j.at("fingerprints").items()) {
        st.fingerprints[id] = f.get<fp::Fingerprint>();
    }
    st.events = j.at("events").get<std::vector<TimelineEvent>>();
    st.last_session = optional_from<std::string>(j, "last_session");
    st.last_statuses = j.value("last_statuses", std::vector<ARStatus>{});
    return st;
}

} // namespace

// --- Curator ----------------------------------------------------------------------

Curator::Curator(std::filesystem::path storage, const Clock& clock, web::Fetcher& fetcher,
                 wi::Registry& registry, CuratorOptions options,
                 std::shared_ptr<const fp::ThumbnailRenderer> renderer)
    : storage_(std::move(storage)),
      clock_(clock),
      fetcher_(fetcher),
      registry_(registry),
      options_(options),
      renderer_(renderer ? std::move(renderer) : std::make_shared<fp::TextPreviewRenderer>()),
      store_(storage_ / "revisions", clock) {
    if (options_.max_in_flight == 0) {
        throw Error(Errc::InvalidArgument, "max_in_flight must be positive");
    }
    std::error_code ec;
    for (const char* sub : {"rems", "sessions", "thumbnails"}) {
        std::filesystem::create_directories(storage_ / sub, ec);
        if (ec) {
            throw Error(Errc::StorageFailure, "cannot create storage: " + ec.message());
        }
    }
}

Curator::~Curator() {
    std::lock_guard lock(sessions_mutex_);
    for (auto& [id, s] : sessions_) {
        if (s->worker.joinable()) {
            s->worker.join();
        }
    }
}

std::mutex& Curator::key_mutex(const std::string& rem_key) {
    std::lock_guard lock(keys_mutex_);
    auto& m = key_mutexes_[rem_key];
    if (!m) {
        m = std::make_unique<std::mutex>();
    }
    return *m;
}

bool Curator::registered(const std::string& rem_key) const {
    try {
        return std::filesystem::exists(storage_ / "rems" / rem_key / "state.json") && store_.exists(rem_key);
    } catch (const Error&) {
        return false;
    }
}

RemState Curator::load_state(const std::string& rem_key) const {
    const auto p = storage_ / "rems" / rem_key / "state.json";
    if (rem_key.empty() || rem_key.find('/') != std::string::npos || !std::filesystem::exists(p)) {
        throw Error(Errc::UnknownKey, "ReM '" + rem_key + "' is not registered");
    }
    try {
        return state_from_json(parse_json_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::StorageFailure, p.string() + ": " + e.what());
    }
}

void Curator::save_state(const RemState& state) const {
    write_atomic(storage_ / "rems" / state.rem_key / "state.json", state_json(state).dump(1));
}

RemState Curator::rem_state(const std::string& rem_key) { return load_state(rem_key); }

void Curator::save_session(const CurationSession& s) const {
    write_atomic(storage_ / "sessions" / (s.session_id + ".json"), nlohmann::json(s).dump());
}

std::string Curator::next_session_id() {
    // Caller holds sessions_mutex_.
    const auto p = storage_ / "sessions" / "counter";
    unsigned long long n = 0;
    if (std::filesystem::exists(p)) {
        n = std::stoull(slurp(p));
    }
    ++n;
    write_atomic(p, std::to_string(n));
    return "s-" + std::to_string(n);
}

fp::DfTable Curator::load_df() const {
    const auto p = storage_ / "df.json";
    if (!std::filesystem::exists(p)) {
        return {};
    }
    const auto j = parse_json_file(p);
    std::map<std::string, size_t, std::less<>> df;
    for (const auto& [term, n] : j.at("df").items()) {
        df.emplace(term, n.get<size_t>());
    }
    return fp::DfTable::from_parts(j.at("documents").get<size_t>(), std::move(df));
}

void Curator::save_df(const fp::DfTable& df) const {
    nlohmann::json terms = nlohmann::json::object();
    for (const auto& [term, n] : df.frequencies()) {
        terms[term] = n;
    }
    write_atomic(storage_ / "df.json", nlohmann::json{{"documents", df.document_count()}, {"df", terms}}.dump());
}

fp::DfTable Curator::df_table() const {
    std::lock_guard lock(df_mutex_);
    return load_df();
}

void Curator::log_access(const std::string& actor, std::string_view op, const std::string& rem_key,
                         const std::string& detail) {
    std::lock_guard lock(log_mutex_);
    std::ofstream out(access_log_path(), std::ios::app);
    out << format_rfc3339(clock_.now()) << '\t' << (actor.empty() ? "anonymous" : actor) << '\t' << op << '\t'
        << rem_key << '\t' << detail << '\n';
}

void Curator::store_thumbnail(fp::Fingerprint& f) const {
    const auto thumb = renderer_->render(f.ar_uri, f.text_snapshot);
    const auto ref = sha256_hex(thumb.media_type + '\n' + thumb.bytes);
    const auto dir = storage_ / "thumbnails";
    if (!std::filesystem::exists(dir / ref)) {
        write_atomic(dir / (ref + ".type"), thumb.media_type);
        write_atomic(dir / ref, thumb.bytes);
    }
    f.thumbnail_ref = ref;
}

std::optional<fp::Thumbnail> Curator::thumbnail(const std::string& ref) const {
    if (ref.size() != 64 || ref.find_first_not_of("0123456789abcdef") != std::string::npos) {
        return std::nullopt;
    }
    const auto p = storage_ / "thumbnails" / ref;
    if (!std::filesystem::exists(p)) {
        return std::nullopt;
    }
    std::string type = "application/octet-stream";
    if (std::filesystem::exists(p.string() + ".type")) {
        type = slurp(p.string() + ".type");
    }
    return fp::Thumbnail{type, slurp(p)};
}

fp::Fingerprint Curator::make_fingerprint(const std::string& ar_uri, const std::string& raw,
                                          const std::string& media_type, Timestamp at,
                                          std::vector<std::string>& notes) {
    fp::Fingerprint f;
    f.ar_uri = ar_uri;
    const auto text = fp::extract_text(raw, media_type);
    f.content_digest = fp::resource_digest(raw, text);
    f.text_snapshot = fp::snapshot_of(text);
    f.captured_at = at;
    f.wi_copies = to_copies(registry_.push_to_archives(ar_uri, raw, media_type, at, &notes));
    sort_copies(f.wi_copies);
    return f;
}

namespace {

std::vector<std::string> signature_or_empty(std::string_view text, const fp::DfTable& df) {
    if (fp::tokens(text).empty() || df.document_count() == 0) {
        return {};
    }
    try {
        return fp::lexical_signature(text, df);
    } catch (const Error& e) {
        if (e.code() == Errc::EmptyText) {
            return {};
        }
        throw;
    }
}

} // namespace

// --- register --------------------------------------------------------------------

Registration Curator::register_rem(const std::string& source, const std::string& actor) {
    const Timestamp now = clock_.now();
    std::string atom = trim_left(source);
    if (atom.empty()) {
        throw Error(Errc::ParseFailure, "empty ReM source");
    }
    if (atom.front() != '<') {
        if (!is_absolute_uri(atom)) {
            throw Error(Errc::ParseFailure, "source is neither an Atom document nor an absolute URI");
        }
        while (!atom.empty() && std::isspace(static_cast<unsigned char>(atom.back()))) {
            atom.pop_back();
        }
        const auto got = fetcher_.fetch(atom, options_.deadline);
        if (!got.is_ok()) {
            throw Error(Errc::ParseFailure, "cannot fetch ReM " + atom + ": " +
                                                std::string(web::fetch_kind_name(got.kind)) +
                                                (got.detail.empty() ? "" : " (" + got.detail + ")"));
        }
        atom = got.content;
    } else {
        atom = source;
    }

    ore::ResourceMapDoc doc;
    try {
        doc = ore::parse_rem(atom);
    } catch (const Error& e) {
        throw Error(Errc::ParseFailure, std::string("cannot parse ReM: ") + e.what());
    }
    if (auto problems = ore::validate(doc); !problems.empty()) {
        throw Error(Errc::ParseFailure, "invalid ReM: " + problems.front());
    }
    const auto key = store::rem_key_for(doc.rem_uri);
    std::lock_guard key_lock(key_mutex(key));
    if (registered(key)) {
        throw Error(Errc::AlreadyRegistered, "ReM " + doc.rem_uri + " is already registered as " + key);
    }

    Registration out;
    out.rem_key = key;
    registry_.push_to_archives(doc.rem_uri, atom, std::string(kAtomMediaType), now, &out.notes);

    std::vector<std::string> uris;
    for (const auto& e : doc.entries) {
        if (!e.flagged_gone) {
            uris.push_back(e.ar_uri);
        }
    }
    const auto results = web::fetch_all(fetcher_, uris, options_.max_in_flight, options_.deadline);

    RemState state;
    state.rem_key = key;
    state.rem_uri = doc.rem_uri;
    state.last_live = ore::serialize_rem(doc);

    struct Fresh {
        const ore::AREntry* entry;
        fp::Fingerprint fp;
        std::string text;
    };
    std::vector<Fresh> fresh;
    for (const auto& e : doc.entries) {
        if (e.flagged_gone) {
            continue;
        }
        const auto& r = results.at(e.ar_uri);
        if (!r.is_ok()) {
            out.unfetched.push_back(e.entry_id);
            state.events.push_back({e.entry_id, e.ar_uri, now, EventKind::Missing,
                                    r.kind == web::FetchKind::NotFound ? "not found at registration"
                                                                       : "unreachable at registration: " + r.detail});
            continue;
        }
        fresh.push_back({&e, make_fingerprint(e.ar_uri, r.content, r.media_type, now, out.notes),
                         fp::extract_text(r.content, r.media_type)});
    }
    {
        std::lock_guard df_lock(df_mutex_);
        auto df = load_df();
        for (const auto& f : fresh) {
            df.add_document(f.text);
        }
        for (auto& f : fresh) {
            f.fp.lexical_signature = signature_or_empty(f.text, df);
            store_thumbnail(f.fp);
            state.events.push_back({f.entry->entry_id, f.entry->ar_uri, now, EventKind::FirstArchived,
                                    "archived for the first time"});
            state.fingerprints[f.entry->entry_id] = std::move(f.fp);
        }
        save_df(df);
    }

    // Order the events so that Missing and FirstArchived follow entry order.
    std::stable_sort(state.events.begin(), state.events.end(), [&](const TimelineEvent& a, const TimelineEvent& b) {
        auto pos = [&](const std::string& id) {
            for (size_t i = 0; i < doc.entries.size(); ++i) {
                if (doc.entries[i].entry_id == id) {
                    return i;
                }
            }
            return doc.entries.size();
        };
        return pos(a.entry_id) < pos(b.entry_id);
    });

    out.rev_id = store_.commit(key, doc, {}, actor.empty() ? "anonymous" : actor, "registered");
    save_state(state);
    log_access(actor, "register", key, doc.rem_uri);
    return out;
}

// --- sessions -------------------------------------------------------------------------

std::shared_ptr<Curator::Slot> Curator::slot(const std::string& session_id) {
    std::lock_guard lock(sessions_mutex_);
    if (auto it = sessions_.find(session_id); it != sessions_.end()) {
        return it->second;
    }
    const bool safe = !session_id.empty() && session_id.find_first_of("/\\") == std::string::npos &&
                      session_id != "." && session_id != ".." && session_id != "counter";
    const auto p = storage_ / "sessions" / (session_id + ".json");
    if (!safe || !std::filesystem::exists(p)) {
        throw Error(Errc::UnknownSession, "no session '" + session_id + "'");
    }
    auto s = std::make_shared<Slot>();
    try {
        s->session = parse_json_file(p).get<CurationSession>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::StorageFailure, p.string() + ": " + e.what());
    }
    sessions_[session_id] = s;
    // Checking was interrupted by a restart: resume it for what is still Pending.
    if (!s->session.closed && !s->session.resolved()) {
        s->done = false;
        Slot* raw = s.get();
        s->worker = std::jthread([this, raw] { run_fetches(*raw); });
    }
    return s;
}

std::string Curator::begin_session(const std::string& rem_key, const std::string& actor) {
    const Timestamp now = clock_.now();
    const auto state = load_state(rem_key);
    const auto head = store_.head(rem_key);

    CurationSession s;
    s.rem_key = rem_key;
    s.actor = actor.empty() ? "anonymous" : actor;
    s.opened_at = now;
    s.base_rev = head.rev_id;

    const auto base = ore::parse_rem(state.last_live);
    std::optional<ore::ResourceMapDoc> live;
    const auto got = fetcher_.fetch(state.rem_uri, options_.deadline);
    if (got.is_ok()) {
        try {
            auto doc = ore::parse_rem(got.content);
            if (auto problems = ore::validate(doc); !problems.empty()) {
                s.rem_missing_detail = "live ReM is invalid: " + problems.front();
            } else if (store::rem_key_for(doc.rem_uri) != rem_key) {
                s.rem_missing_detail = "live ReM now names " + doc.rem_uri;
            } else {
                live = std::move(doc);
                s.upstream_text = got.content;
            }
        } catch (const Error& e) {
            s.rem_missing_detail = std::string("live ReM does not parse: ") + e.what();
        }
    } else {
        s.rem_missing_detail = got.kind == web::FetchKind::NotFound ? "live ReM not found"
                                                                    : "live ReM unreachable: " + got.detail;
    }
    if (live) {
        s.external_changes = ore::diff_rems(base, *live);
        s.live_doc = merge_upstream(head.snapshot, base, *live);
    } else {
        s.rem_missing = true;
        s.live_doc = head.snapshot;
    }
    for (const auto& e : s.live_doc.entries) {
        ARStatus st;
        st.entry_id = e.entry_id;
        st.ar_uri = e.ar_uri;
        st.state = e.flagged_gone ? StatusState::FlaggedGone : StatusState::Pending;
        s.statuses.push_back(std::move(st));
    }

    std::shared_ptr<Slot> sl = std::make_shared<Slot>();
    {
        std::lock_guard lock(sessions_mutex_);
        s.session_id = next_session_id();
        sl->session = std::move(s);
        sl->done = false;
        sessions_[sl->session.session_id] = sl;
    }
    const auto id = sl->session.session_id;
    log_access(actor, "open-session", rem_key, id + (sl->session.rem_missing ? " rem-missing" : ""));
    // The slot outlives the worker: slots are never dropped and the
    // destructor joins every worker.
    Slot* raw = sl.get();
    sl->worker = std::jthread([this, raw] { run_fetches(*raw); });
    return id;
}

void Curator::run_fetches(Slot& slot_ref) {
    Slot* sl = &slot_ref;
    std::vector<std::string> uris;
    std::string rem_key;
    {
        std::lock_guard lock(sl->mutex);
        rem_key = sl->session.rem_key;
        for (const auto& st : sl->session.statuses) {
            if (st.state == StatusState::Pending) {
                uris.push_back(st.ar_uri);
            }
        }
    }
    try {
        const auto state = load_state(rem_key);
        const auto thr = options_.thresholds;
        std::vector<std::string> fresh; // entry ids with no fingerprint that fetched Ok

        auto on_result = [&](const std::string& uri, const web::FetchOutcome& r) {
            std::lock_guard lock(sl->mutex);
            for (auto& st : sl->session.statuses) {
                if (st.ar_uri != uri || st.state != StatusState::Pending) {
                    continue;
                }
                st.fetched_at = r.fetched_at;
                if (!r.is_ok()) {
                    st.state = StatusState::NeedsAttention;
                    st.reason = AttentionReason::Missing;
                    st.detail = r.kind == web::FetchKind::NotFound ? "not found" : r.detail;
                    continue;
                }
                sl->session.fetched[st.entry_id] = {uri, r.content, r.media_type, r.fetched_at};
                const auto it = state.fingerprints.find(st.entry_id);
                if (it == state.fingerprints.end()) {
                    st.state = StatusState::Ok;
                    fresh.push_back(st.entry_id);
                    continue;
                }
                const auto& old = it->second;
                const auto text = fp::extract_text(r.content, r.media_type);
                const auto digest = fp::resource_digest(r.content, text);
                if (digest == old.content_digest) {
                    st.state = StatusState::Ok;
                    st.similarity = 1.0;
                    continue;
                }
                const auto cls = fp::classify_change(old, text, digest, thr);
                st.similarity = cls.similarity;
                if (fp::is_wrong_content(old, text, thr)) {
                    st.state = StatusState::NeedsAttention;
                    st.reason = AttentionReason::WrongContentCandidate;
                } else if (cls.kind == fp::ChangeKind::Minor) {
                    st.state = StatusState::NeedsAttention;
                    st.reason = AttentionReason::ChangedMinor;
                } else if (cls.kind == fp::ChangeKind::Significant) {
                    st.state = StatusState::NeedsAttention;
                    st.reason = AttentionReason::ChangedSignificant;
                } else {
                    st.state = StatusState::Ok;
                }
            }
            sl->resolved_cv.notify_all();
        };
        web::fetch_all(fetcher_, uris, options_.max_in_flight, options_.deadline, on_result);

        if (!fresh.empty()) {
            // New entries get their first fingerprint now, kept even if the
            // session is never finalized.
            std::lock_guard key_lock(key_mutex(rem_key));
            auto st = load_state(rem_key);
            std::vector<std::tuple<std::string, fp::Fingerprint, std::string>> made;
            std::vector<std::string> notes;
            std::map<std::string, FetchedContent> fetched;
            std::map<std::string, std::string> uri_of;
            {
                std::lock_guard lock(sl->mutex);
                for (const auto& id : fresh) {
                    fetched[id] = sl->session.fetched.at(id);
                }
            }
            // Entry order, not completion order.
            std::vector<std::string> ordered;
            {
                std::lock_guard lock(sl->mutex);
                for (const auto& e : sl->session.live_doc.entries) {
                    if (std::find(fresh.begin(), fresh.end(), e.entry_id) != fresh.end()) {
                        ordered.push_back(e.entry_id);
                    }
                }
            }
            for (const auto& id : ordered) {
                const auto& f = fetched.at(id);
                made.emplace_back(id, make_fingerprint(f.uri, f.content, f.media_type, f.fetched_at, notes),
                                  fp::extract_text(f.content, f.media_type));
            }
            {
                std::lock_guard df_lock(df_mutex_);
                auto df = load_df();
                for (const auto& m : made) {
                    df.add_document(std::get<2>(m));
                }
                for (auto& [id, print, text] : made) {
                    print.lexical_signature = signature_or_empty(text, df);
                    store_thumbnail(print);
                    st.events.push_back({id, print.ar_uri, print.captured_at, EventKind::FirstArchived,
                                         "archived for the first time"});
                    st.fingerprints[id] = print;
                }
                save_df(df);
            }
            save_state(st);
            std::lock_guard lock(sl->mutex);
            sl->session.notes.insert(sl->session.notes.end(), notes.begin(), notes.end());
        }
    } catch (const std::exception& e) {
        std::lock_guard lock(sl->mutex);
        sl->session.notes.push_back(std::string("checking failed: ") + e.what());
        for (auto& st : sl->session.statuses) {
            if (st.state == StatusState::Pending) {
                st.state = StatusState::NeedsAttention;
                st.reason = AttentionReason::Missing;
                st.detail = e.what();
            }
        }
    }
    std::lock_guard lock(sl->mutex);
    try {
        save_session(sl->session);
    } catch (const std::exception& e) {
        sl->session.notes.push_back(std::string("session not persisted: ") + e.what());
    }
    sl->done = true;
    sl->resolved_cv.notify_all();
}

CurationSession Curator::wait_session(const std::string& session_id) {
    auto sl = slot(session_id);
    std::unique_lock lock(sl->mutex);
    sl->resolved_cv.wait(lock, [&] { return sl->done; });
    return sl->session;
}

CurationSession Curator::open_session(const std::string& rem_key, const std::string& actor) {
    return wait_session(begin_session(rem_key, actor));
}

CurationSession Curator::session(const std::string& session_id) {
    auto sl = slot(session_id);
    std::lock_guard lock(sl->mutex);
    return sl->session;
}

// --- attention --------------------------------------------------------------------------

wi::RelocationAid Curator::attention_aid(const std::string& session_id, const std::string& entry_id) {
    CurationSession s = session(session_id);
    const auto* st = s.status(entry_id);
    if (!st) {
        throw Error(Errc::UnknownEntry, "session " + session_id + " has no entry '" + entry_id + "'");
    }
    if (!st->needs_decision()) {
        throw Error(Errc::NotInAttention, "entry '" + entry_id + "' is " + std::string(status_state_name(st->state)));
    }
    const auto state = load_state(s.rem_key);
    wi::RelocationAid aid;
    const auto* entry = s.live_doc.find(entry_id);
    aid.metadata = *entry;
    if (auto it = state.fingerprints.find(entry_id); it != state.fingerprints.end()) {
        aid.fingerprint = it->second;
    }
    auto copies = registry_.find_copies_detailed(st->ar_uri);
    if (aid.fingerprint && aid.fingerprint->ar_uri != st->ar_uri) {
        auto more = registry_.find_copies_detailed(aid.fingerprint->ar_uri);
        copies.records.insert(copies.records.end(), more.records.begin(), more.records.end());
        copies.notes.insert(copies.notes.end(), more.notes.begin(), more.notes.end());
    }
    aid.wi_copies = std::move(copies.records);
    aid.notes = std::move(copies.notes);
    aid.queries = wi::build_relocation_queries(*entry, aid.fingerprint);

    std::unordered_set<std::string> seen{st->ar_uri};
    for (const auto& id : registry_.ids_with(wi::Capability::Search)) {
        for (const auto& q : aid.queries) {
            try {
                for (auto& uri : registry_.search(id, q)) {
                    if (seen.insert(uri).second) {
                        aid.candidates.push_back(std::move(uri));
                    }
                }
            } catch (const Error& e) {
                if (e.code() != Errc::MemberUnavailable) {
                    throw;
                }
                aid.notes.push_back("search on " + id + " skipped: " + e.what());
                break;
            }
        }
    }
    for (const auto& r : aid.wi_copies) {
        if (seen.insert(r.archived_uri).second) {
            aid.candidates.push_back(r.archived_uri);
        }
    }
    return aid;
}

CurationSession Curator::apply_decision(const std::string& session_id, const std::string& entry_id,
                                        const Decision& decision, const std::string& actor) {
    auto sl = slot(session_id);
    std::unique_lock lock(sl->mutex);
    auto& s = sl->session;
    if (s.closed) {
        throw Error(Errc::SessionClosed, "session " + session_id + " is closed");
    }
    auto it = std::find_if(s.statuses.begin(), s.statuses.end(),
                           [&](const ARStatus& st) { return st.entry_id == entry_id; });
    if (it == s.statuses.end()) {
        throw Error(Errc::UnknownEntry, "session " + session_id + " has no entry '" + entry_id + "'");
    }
    ARStatus& st = *it;
    if (st.state == StatusState::Pending) {
        throw Error(Errc::PendingStatuses, "entry '" + entry_id + "' is still being checked");
    }
    if (!st.needs_decision()) {
        throw Error(Errc::NotInAttention, "entry '" + entry_id + "' is " + std::string(status_state_name(st.state)));
    }
    const auto reason = st.reason.value_or(AttentionReason::Missing);
    const bool changed = reason == AttentionReason::ChangedMinor || reason == AttentionReason::ChangedSignificant;
    if ((decision.kind == DecisionKind::Rearchive || decision.kind == DecisionKind::AcceptMinor) && !changed) {
        throw Error(Errc::DecisionNotApplicable, std::string(decision_kind_name(decision.kind)) +
                                                     " does not apply to " +
                                                     std::string(attention_reason_name(reason)));
    }
    ore::AREntry* entry = s.live_doc.find(entry_id);
    const Timestamp now = clock_.now();
    const std::string who = actor.empty() ? "anonymous" : actor;
    const auto state = load_state(s.rem_key);
    std::optional<fp::Fingerprint> old;
    if (auto f = state.fingerprints.find(entry_id); f != state.fingerprints.end()) {
        old = f->second;
    }
    AppliedDecision applied{entry_id, decision, who, entry->ar_uri, false};

    switch (decision.kind) {
    case DecisionKind::Relocate: {
        const auto& target = decision.uri;
        if (!is_absolute_uri(target)) {
            throw Error(Errc::InvalidArgument, "relocate target '" + target + "' is not an absolute URI");
        }
        if (target == entry->ar_uri) {
            throw Error(Errc::DecisionNotApplicable, "relocate target equals the current URI");
        }
        std::string content, media_type;
        std::vector<fp::WICopy> copies = old ? old->wi_copies : std::vector<fp::WICopy>{};
        const auto got = fetcher_.fetch(target, options_.deadline);
        if (got.is_ok()) {
            content = got.content;
            media_type = got.media_type;
            auto pushed = to_copies(registry_.push_to_archives(target, content, media_type, now, &s.notes));
            copies.insert(copies.begin(), pushed.begin(), pushed.end());
        } else {
            std::optional<wi::WIRecord> adopted;
            auto look = registry_.find_copies(entry->ar_uri);
            if (old && old->ar_uri != entry->ar_uri) {
                auto more = registry_.find_copies(old->ar_uri);
                look.insert(look.end(), more.begin(), more.end());
            }
            for (auto& r : look) {
                if (r.archived_uri == target) {
                    adopted = std::move(r);
                    break;
                }
            }
            if (!adopted) {
                throw Error(Errc::RelocateTargetUnfetchable,
                            "relocate target " + target + " does not fetch: " +
                                std::string(web::fetch_kind_name(got.kind)) +
                                (got.detail.empty() ? "" : " (" + got.detail + ")"));
            }
            applied.adopted_archived_copy = true;
            content = adopted->content;
            media_type = adopted->media_type;
            if (copies.empty()) {
                copies.push_back({adopted->member_id, adopted->archived_uri, adopted->captured_at});
            }
        }
        sort_copies(copies);
        fp::Fingerprint nf;
        nf.ar_uri = target;
        const auto text = fp::extract_text(content, media_type);
        nf.content_digest = fp::resource_digest(content, text);
        nf.text_snapshot = fp::snapshot_of(text);
        nf.captured_at = now;
        nf.wi_copies = std::move(copies);
        s.staged_fingerprints.push_back({entry_id, std::move(nf), text});
        entry->ar_uri = target;
        entry->flagged_gone = false;
        s.staged_events.push_back({entry_id, target, now, EventKind::Moved, decision_label(applied)});
        if (!old && !applied.adopted_archived_copy) {
            s.staged_events.push_back({entry_id, target, now, EventKind::FirstArchived, "archived for the first time"});
        }
        st.state = StatusState::Ok;
        st.ar_uri = target;
        break;
    }
    case DecisionKind::FlagGone:
        entry->flagged_gone = true;
        s.staged_events.push_back({entry_id, entry->ar_uri, now, EventKind::FlaggedGone,
                                   "flagged as no longer accessible"});
        st.state = StatusState::FlaggedGone;
        break;
    case DecisionKind::Rearchive: {
        const auto& f = s.fetched.at(entry_id);
        auto pushed = to_copies(registry_.push_to_archives(f.uri, f.content, f.media_type, now, &s.notes));
        fp::Fingerprint nf;
        nf.ar_uri = entry->ar_uri;
        const auto text = fp::extract_text(f.content, f.media_type);
        nf.content_digest = fp::resource_digest(f.content, text);
        nf.text_snapshot = fp::snapshot_of(text);
        nf.captured_at = now;
        nf.wi_copies = pushed;
        if (old) {
            nf.wi_copies.insert(nf.wi_copies.end(), old->wi_copies.begin(), old->wi_copies.end());
        }
        sort_copies(nf.wi_copies);
        s.staged_fingerprints.push_back({entry_id, std::move(nf), text});
        const auto sim = fmt_similarity(st.similarity.value_or(0.0));
        if (reason == AttentionReason::ChangedSignificant) {
            s.staged_events.push_back({entry_id, entry->ar_uri, now, EventKind::SignificantChange,
                                       "significant change (similarity " + sim + ")"});
        } else {
            s.staged_events.push_back(
                {entry_id, entry->ar_uri, now, EventKind::MinorChange, "minor change (similarity " + sim + ")"});
        }
        s.staged_events.push_back({entry_id, entry->ar_uri, now, EventKind::Rearchived,
                                   "re-archived to " + std::to_string(pushed.size()) + " member(s)"});
        st.state = StatusState::Ok;
        break;
    }
    case DecisionKind::AcceptMinor:
        s.staged_events.push_back({entry_id, entry->ar_uri, now, EventKind::MinorChange,
                                   "minor change accepted (similarity " +
                                       fmt_similarity(st.similarity.value_or(0.0)) + ")"});
        st.state = StatusState::Ok;
        break;
    }
    st.resolution = decision.kind;
    s.applied_decisions.push_back(std::move(applied));
    save_session(s);
    log_access(who, "decide", s.rem_key,
               session_id + " " + entry_id + " " + std::string(decision_kind_name(decision.kind)));
    return s;
}

FinalizeResult Curator::finalize(const std::string& session_id, const std::string& actor) {
    auto sl = slot(session_id);
    std::unique_lock lock(sl->mutex);
    auto& s = sl->session;
    if (s.closed) {
        throw Error(Errc::SessionClosed, "session " + session_id + " is already finalized");
    }
    if (!sl->done || !s.resolved()) {
        throw Error(Errc::PendingStatuses, "session " + session_id + " is still checking");
    }
    for (const auto& st : s.statuses) {
        if (st.needs_decision()) {
            throw Error(Errc::UnresolvedAttention, "entry '" + st.entry_id + "' needs a decision");
        }
    }
    const std::string who = actor.empty() ? "anonymous" : actor;
    std::lock_guard key_lock(key_mutex(s.rem_key));
    const auto head_id = store_.head_id(s.rem_key);
    if (head_id != s.base_rev) {
        throw Error(Errc::StaleSession, "revision " + std::to_string(head_id) + " was committed after session " +
                                            session_id + " opened at revision " + std::to_string(s.base_rev));
    }
    auto state = load_state(s.rem_key);

    FinalizeResult out;
    out.changes = s.external_changes;
    for (const auto& e : s.live_doc.entries) {
        for (const auto& d : s.applied_decisions) {
            if (d.entry_id != e.entry_id) {
                continue;
            }
            switch (d.decision.kind) {
            case DecisionKind::Relocate:
                out.changes.push_back({ore::ChangeKind::ARMoved, e.entry_id, d.previous_uri, d.decision.uri});
                break;
            case DecisionKind::FlagGone:
                out.changes.push_back({ore::ChangeKind::ARFlaggedGone, e.entry_id, e.ar_uri, std::nullopt});
                break;
            case DecisionKind::Rearchive: {
                std::optional<std::string> before, after;
                if (auto f = state.fingerprints.find(e.entry_id); f != state.fingerprints.end()) {
                    before = f->second.content_digest;
                }
                for (const auto& sf : s.staged_fingerprints) {
                    if (sf.entry_id == e.entry_id) {
                        after = sf.fingerprint.content_digest;
                    }
                }
                out.changes.push_back({ore::ChangeKind::ARRearchived, e.entry_id, before, after});
                break;
            }
            case DecisionKind::AcceptMinor:
                break;
            }
        }
    }

    if (!s.staged_fingerprints.empty()) {
        std::lock_guard df_lock(df_mutex_);
        auto df = load_df();
        for (const auto& sf : s.staged_fingerprints) {
            df.add_document(sf.text);
        }
        for (const auto& sf : s.staged_fingerprints) {
            auto f = sf.fingerprint;
            f.lexical_signature = signature_or_empty(sf.text, df);
            store_thumbnail(f);
            state.fingerprints[sf.entry_id] = std::move(f);
        }
        save_df(df);
    }
    state.events.insert(state.events.end(), s.staged_events.begin(), s.staged_events.end());

    out.rev_id = head_id;
    if (!out.changes.empty()) {
        out.rev_id = store_.commit(s.rem_key, s.live_doc, out.changes, who, "session " + session_id);
        out.committed = true;
        const auto text = store_.get(s.rem_key, out.rev_id).snapshot_text;
        registry_.push_to_archives(s.live_doc.rem_uri, text, std::string(kAtomMediaType), clock_.now(), &s.notes);
    }
    if (!s.rem_missing && !s.upstream_text.empty()) {
        state.last_live = ore::serialize_rem(ore::parse_rem(s.upstream_text));
    }
    state.last_session = session_id;
    state.last_statuses = s.statuses;
    save_state(state);

    s.closed = true;
    s.finalized_rev = out.rev_id;
    save_session(s);
    log_access(who, "finalize", s.rem_key,
               session_id + (out.committed ? " rev " + std::to_string(out.rev_id) : " no changes"));
    return out;
}

// --- timeline -------------------------------------------------------------------------

std::vector<TimelineEvent> Curator::timeline(const std::string& rem_key) {
    const auto state = load_state(rem_key);
    const auto head = store_.head(rem_key);
    std::map<std::string, size_t> rank;
    for (const auto& e : head.snapshot.entries) {
        rank.emplace(e.entry_id, rank.size());
    }
    auto group = [&](const std::string& id) -> std::pair<size_t, std::string> {
        if (auto it = rank.find(id); it != rank.end()) {
            return {it->second, {}};
        }
        return {rank.size(), id};
    };
    auto events = state.events;
    std::stable_sort(events.begin(), events.end(), [&](const TimelineEvent& a, const TimelineEvent& b) {
        const auto ga = group(a.entry_id), gb = group(b.entry_id);
        if (ga != gb) {
            return ga < gb;
        }
        return a.at < b.at;
    });
    return events;
}

nlohmann::json Curator::timeline_export(const std::string& rem_key) {
    return {{"rem_key", rem_key}, {"events", timeline(rem_key)}};
}

} // namespace remember::cur
