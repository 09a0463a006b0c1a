#pragma once

// Append-only revision history ("wiki") per ReM key. One log file per key;
// see docs/formats.md for the byte layout.

#include "remember/ore.hpp"
#include "remember/time.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace remember::store {

using RevId = std::uint64_t;

inline constexpr std::string_view kLogMagic = "RMBLOG01";

struct Revision {
    RevId rev_id = 0;
    std::optional<RevId> parent;
    Timestamp committed_at{};
    std::string actor;
    std::string note;
    std::vector<ore::ChangeRecord> changes;
    std::string snapshot_text; // serialized Atom, exactly as stored
    ore::ResourceMapDoc snapshot;
};

struct RevisionSummary {
    RevId rev_id = 0;
    std::optional<RevId> parent;
    Timestamp committed_at{};
    std::string actor;
    std::string note;
    std::vector<ore::ChangeKind> change_kinds;
};

/// rem_key for a ReM URI: first 32 hex digits of SHA-256 of the normalized URI.
std::string rem_key_for(std::string_view rem_uri);

class RevisionStore {
public:
    RevisionStore(std::filesystem::path dir, const Clock& clock);

    /// Error{ValidationFailure} for an invalid doc, Error{StorageFailure} on I/O.
    RevId commit(const std::string& rem_key, const ore::ResourceMapDoc& doc,
                 const std::vector<ore::ChangeRecord>& changes, const std::string& actor,
                 const std::string& note);

    /// Oldest first. Error{UnknownKey}.
    std::vector<RevisionSummary> history(const std::string& rem_key) const;

    /// Error{UnknownKey | UnknownRevision}.
    Revision get(const std::string& rem_key, RevId rev) const;
    Revision head(const std::string& rem_key) const;
    RevId head_id(const std::string& rem_key) const;

    /// Appends a copy of the target's snapshot. Error{UnknownRevision |
    /// TargetIsHead}.
    RevId rollback(const std::string& rem_key, RevId target, const std::string& actor);

    bool exists(const std::string& rem_key) const;
    std::vector<std::string> keys() const;

    /// One line per revision: "<rev>\t<committed_at>\t<actor>\t<kinds>\t<note>".
    std::string export_changelog(const std::string& rem_key) const;

    std::filesystem::path log_path(const std::string& rem_key) const;

private:
    std::vector<Revision> read_all(const std::string& rem_key) const;
    std::mutex& key_mutex(const std::string& rem_key);
    RevId append(const std::string& rem_key, const std::string& snapshot_text,
                 const std::vector<ore::ChangeRecord>& changes, const std::string& actor,
                 const std::string& note, std::optional<RevId> expected_parent);

    std::filesystem::path dir_;
    const Clock& clock_;
    std::mutex keys_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
};

} // namespace remember::store
