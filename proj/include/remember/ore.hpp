#pragma once

// OAI-ORE Resource Map model and its Atom serialization (ORE 0.9 shape).

#include "remember/time.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace remember::ore {

inline constexpr std::string_view kAtomNs = "http://www.w3.org/2005/Atom";
inline constexpr std::string_view kOreTermsNs = "http://www.openarchives.org/ore/terms/";
inline constexpr std::string_view kCurationNs = "urn:x-remember:curation";

using MetadataPairs = std::vector<std::pair<std::string, std::string>>;

struct AREntry {
    std::string entry_id;
    std::string ar_uri;
    std::string media_type;
    std::string title;
    Timestamp updated{};
    /// Unknown entry children flattened in document order. Keys are slash
    /// separated element paths ("author/name"); attributes append "@name".
    /// Elements outside the Atom namespace use Clark notation "{ns}local".
    MetadataPairs extra_metadata;
    bool flagged_gone = false;

    bool operator==(const AREntry&) const = default;
};

struct ResourceMapDoc {
    std::string rem_uri;
    std::string aggregation_uri;
    std::string title;
    std::vector<std::string> authors;
    Timestamp updated{};
    std::vector<AREntry> entries;

    bool operator==(const ResourceMapDoc&) const = default;

    const AREntry* find(std::string_view entry_id) const;
    AREntry* find(std::string_view entry_id);
};

enum class ChangeKind {
    ARAdded,
    ARRemoved,
    ARMoved,
    ARFlaggedGone,
    ARRearchived,
    MetadataEdited,
    ReMMetadataEdited,
    Rollback,
};

std::string_view change_kind_name(ChangeKind kind) noexcept;
std::optional<ChangeKind> parse_change_kind(std::string_view name) noexcept;

/// One wiki change. Value conventions:
///   ARAdded           new_value = the added entry as compact JSON
///   ARRemoved         old_value = removed ar_uri
///   ARMoved           old_value/new_value = URIs (must differ)
///   ARFlaggedGone     old_value = ar_uri at flag time
///   MetadataEdited    old_value/new_value = JSON objects of the changed fields
///   ReMMetadataEdited same, for feed-level title/authors/updated
///   Rollback          new_value = target revision number
struct ChangeRecord {
    ChangeKind kind{};
    std::optional<std::string> entry_id;
    std::optional<std::string> old_value;
    std::optional<std::string> new_value;

    bool operator==(const ChangeRecord&) const = default;
};

/// Throws Error{MalformedXml | MissingSelfLink | MissingFeedId |
/// EntryWithoutAlternateLink | InvalidRem}.
ResourceMapDoc parse_rem(std::string_view atom_text);

/// Throws Error{InvariantViolation} when validate(doc) is non-empty.
std::string serialize_rem(const ResourceMapDoc& doc);

std::vector<std::string> validate(const ResourceMapDoc& doc);

/// Ordered: removals, additions, moves, flags, entry metadata edits, feed edits.
std::vector<ChangeRecord> diff_rems(const ResourceMapDoc& old_doc, const ResourceMapDoc& new_doc);

/// Collapses whitespace runs to one space and trims.
std::string collapse_whitespace(std::string_view text);

} // namespace remember::ore
