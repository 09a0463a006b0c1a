#pragma once

// Curation lifecycle: registration, sessions, decisions, finalization and the
// per-entry timeline.

#include "remember/fingerprint.hpp"
#include "remember/ore.hpp"
#include "remember/revision_store.hpp"
#include "remember/time.hpp"
#include "remember/webfetch.hpp"
#include "remember/wi.hpp"

#include "json.hpp"

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace remember::cur {

using store::RevId;

enum class StatusState { Pending, Ok, NeedsAttention, FlaggedGone };
enum class AttentionReason { Missing, WrongContentCandidate, ChangedMinor, ChangedSignificant };
enum class DecisionKind { Relocate, FlagGone, Rearchive, AcceptMinor };
enum class EventKind { FirstArchived, MinorChange, SignificantChange, Moved, Missing, FlaggedGone, Rearchived };

std::string_view status_state_name(StatusState s) noexcept;
std::string_view attention_reason_name(AttentionReason r) noexcept;
std::string_view decision_kind_name(DecisionKind d) noexcept;
std::string_view event_kind_name(EventKind e) noexcept;
std::optional<StatusState> parse_status_state(std::string_view s) noexcept;
std::optional<AttentionReason> parse_attention_reason(std::string_view s) noexcept;
/// Accepts "relocate", "flag-gone", "rearchive", "accept-minor".
std::optional<DecisionKind> parse_decision_kind(std::string_view s) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

struct ARStatus {
    std::string entry_id;
    std::string ar_uri;
    StatusState state = StatusState::Pending;
    std::optional<AttentionReason> reason; // set with NeedsAttention and kept after a decision
    std::optional<double> similarity;
    std::optional<Timestamp> fetched_at;
    std::string detail;                    // fetch error text, if any
    std::optional<DecisionKind> resolution;

    bool needs_decision() const noexcept { return state == StatusState::NeedsAttention; }
};

struct Decision {
    DecisionKind kind = DecisionKind::FlagGone;
    std::string uri; // Relocate target

    static Decision relocate(std::string uri) { return {DecisionKind::Relocate, std::move(uri)}; }
    static Decision flag_gone() { return {DecisionKind::FlagGone, {}}; }
    static Decision rearchive() { return {DecisionKind::Rearchive, {}}; }
    static Decision accept_minor() { return {DecisionKind::AcceptMinor, {}}; }
};

struct AppliedDecision {
    std::string entry_id;
    Decision decision;
    std::string actor;
    std::string previous_uri;
    bool adopted_archived_copy = false;
};

struct TimelineEvent {
    std::string entry_id;
    std::string ar_uri;
    Timestamp at{};
    EventKind kind = EventKind::FirstArchived;
    std::string label;

    bool operator==(const TimelineEvent&) const = default;
};

/// Content fetched during a session, kept for decisions that archive it.
struct FetchedContent {
    std::string uri;
    std::string content;
    std::string media_type;
    Timestamp fetched_at{};
};

/// Fingerprint replacement applied at finalize. The signature is computed
/// then, against the document-frequency table of that moment.
struct StagedFingerprint {
    std::string entry_id;
    fp::Fingerprint fingerprint; // lexical_signature and thumbnail_ref filled at finalize
    std::string text;            // full normalized text, for the signature
};

struct CurationSession {
    std::string session_id;
    std::string rem_key;
    std::string actor;
    Timestamp opened_at{};
    RevId base_rev = 0;
    bool rem_missing = false; // the live ReM could not be fetched or parsed
    std::string rem_missing_detail;
    ore::ResourceMapDoc live_doc; // working copy: head merged with upstream edits
    std::string upstream_text;    // the live ReM as fetched; empty when rem_missing
    std::vector<ARStatus> statuses;
    std::vector<ore::ChangeRecord> external_changes;
    std::vector<AppliedDecision> applied_decisions;
    std::vector<TimelineEvent> staged_events;
    std::vector<StagedFingerprint> staged_fingerprints;
    std::map<std::string, FetchedContent> fetched; // by entry_id
    std::vector<std::string> notes;
    bool closed = false;
    std::optional<RevId> finalized_rev;

    const ARStatus* status(std::string_view entry_id) const;
    bool resolved() const; // no Pending statuses
};

struct Registration {
    std::string rem_key;
    RevId rev_id = 0;
    std::vector<std::string> unfetched; // entry ids needing attention at the first session
    std::vector<std::string> notes;
};

struct FinalizeResult {
    RevId rev_id = 0; // new head, or the unchanged head when nothing was committed
    bool committed = false;
    std::vector<ore::ChangeRecord> changes;
};

struct RemState {
    std::string rem_key;
    std::string rem_uri;
    std::string last_live; // Atom text of the upstream ReM at the last commit
    std::map<std::string, fp::Fingerprint> fingerprints; // by entry_id
    std::vector<TimelineEvent> events; // append order
    std::optional<std::string> last_session;
    std::vector<ARStatus> last_statuses;
};

struct CuratorOptions {
    fp::Thresholds thresholds;
    size_t max_in_flight = web::kDefaultMaxInFlight;
    web::Duration deadline = web::kDefaultDeadline;
};

class Curator {
public:
    Curator(std::filesystem::path storage, const Clock& clock, web::Fetcher& fetcher, wi::Registry& registry,
            CuratorOptions options = {},
            std::shared_ptr<const fp::ThumbnailRenderer> renderer = nullptr);
    ~Curator();

    Curator(const Curator&) = delete;
    Curator& operator=(const Curator&) = delete;

    /// source is either an absolute ReM URI or an Atom document (first
    /// non-space character '<'). Error{ParseFailure | AlreadyRegistered |
    /// StorageFailure}.
    Registration register_rem(const std::string& source, const std::string& actor);

    /// Opens a session and returns once every AR status is resolved.
    CurationSession open_session(const std::string& rem_key, const std::string& actor);

    /// Opens a session whose AR fetches continue in the background; poll
    /// session() or call wait_session(). Returns the session id.
    std::string begin_session(const std::string& rem_key, const std::string& actor);
    CurationSession wait_session(const std::string& session_id);

    /// Snapshot of the session. Error{UnknownSession}.
    CurationSession session(const std::string& session_id);

    /// Error{NotInAttention | UnknownEntry | UnknownSession}.
    wi::RelocationAid attention_aid(const std::string& session_id, const std::string& entry_id);

    /// Error{NotInAttention | DecisionNotApplicable | RelocateTargetUnfetchable
    /// | SessionClosed | PendingStatuses}.
    CurationSession apply_decision(const std::string& session_id, const std::string& entry_id,
                                   const Decision& decision, const std::string& actor);

    /// Error{PendingStatuses | UnresolvedAttention | SessionClosed | StaleSession}.
    FinalizeResult finalize(const std::string& session_id, const std::string& actor);

    /// Grouped by entry (head order, then departed entries by id), time-ascending.
    std::vector<TimelineEvent> timeline(const std::string& rem_key);
    nlohmann::json timeline_export(const std::string& rem_key);

    /// Error{UnknownKey}.
    RemState rem_state(const std::string& rem_key);
    bool registered(const std::string& rem_key) const;

    std::optional<fp::Thumbnail> thumbnail(const std::string& ref) const;
    fp::DfTable df_table() const;

    store::RevisionStore& revisions() noexcept { return store_; }
    const std::filesystem::path& storage() const noexcept { return storage_; }

    /// Line-oriented access log.
    std::filesystem::path access_log_path() const { return storage_ / "access.log"; }

private:
    struct Slot {
        std::mutex mutex;
        std::condition_variable resolved_cv;
        CurationSession session;
        bool done = true; // background checking finished
        std::jthread worker;
    };

    std::shared_ptr<Slot> slot(const std::string& session_id);
    std::mutex& key_mutex(const std::string& rem_key);

    RemState load_state(const std::string& rem_key) const;
    void save_state(const RemState& state) const;
    void save_session(const CurationSession& s) const;
    std::string next_session_id();
    void run_fetches(Slot& slot);
    void log_access(const std::string& actor, std::string_view op, const std::string& rem_key,
                    const std::string& detail);

    fp::Fingerprint make_fingerprint(const std::string& ar_uri, const std::string& raw,
                                     const std::string& media_type, Timestamp at,
                                     std::vector<std::string>& notes);
    void store_thumbnail(fp::Fingerprint& f) const;
    fp::DfTable load_df() const;
    void save_df(const fp::DfTable& df) const;

    std::filesystem::path storage_;
    const Clock& clock_;
    web::Fetcher& fetcher_;
    wi::Registry& registry_;
    CuratorOptions options_;
    std::shared_ptr<const fp::ThumbnailRenderer> renderer_;
    store::RevisionStore store_;

    mutable std::mutex df_mutex_;
    std::mutex keys_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::mutex log_mutex_;
};

void to_json(nlohmann::json& j, const ARStatus& s);
void from_json(const nlohmann::json& j, ARStatus& s);
void to_json(nlohmann::json& j, const TimelineEvent& e);
void from_json(const nlohmann::json& j, TimelineEvent& e);
void to_json(nlohmann::json& j, const CurationSession& s);
void from_json(const nlohmann::json& j, CurationSession& s);

/// Public view of a session for the API: statuses and bookkeeping, without
/// fetched content or staged fingerprints.
nlohmann::json session_summary(const CurationSession& s);

} // namespace remember::cur
