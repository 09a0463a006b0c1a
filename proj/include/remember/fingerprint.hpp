#pragma once

// Per-resource identity aids: text extraction, lexical signatures, digests,
// near-duplicate similarity and change classification.

#include "remember/time.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace remember::fp {

inline constexpr size_t kSignatureTerms = 5;
inline constexpr size_t kSnapshotChars = 10'000;
inline constexpr size_t kPreviewChars = 500;

struct Thresholds {
    double minor = 0.80;         // similarity >= minor -> Minor, else Significant
    double wrong_content = 0.20; // similarity < wrong_content is a wrong-content candidate
    size_t shingle_size = 4;
};

/// Normalized text: lowercase tokens joined by single spaces. HTML is
/// stripped of tags/script/style and entity-decoded; text/* passes through;
/// other media types yield "". Invalid UTF-8 bytes act as separators.
std::string extract_text(std::string_view content, std::string_view media_type);

/// Splits normalized text on spaces.
std::vector<std::string_view> tokens(std::string_view normalized);

/// First kSnapshotChars code points of normalized text.
std::string snapshot_of(std::string_view normalized);

const std::vector<std::string>& stopwords();
bool is_stopword(std::string_view term);

class DfTable {
public:
    size_t document_count() const noexcept { return documents_; }
    size_t frequency(std::string_view term) const;
    const std::map<std::string, size_t, std::less<>>& frequencies() const noexcept { return df_; }

    /// Counts each distinct token of the document once.
    void add_document(std::string_view normalized);

    static DfTable from_parts(size_t documents, std::map<std::string, size_t, std::less<>> df);

private:
    size_t documents_ = 0;
    std::map<std::string, size_t, std::less<>> df_;
};

/// Top-5 terms by tf * ln((N + 1) / (df + 1)), ties lexicographic ascending,
/// stopwords excluded. Throws Error{EmptyText} for text without tokens and
/// Error{InvalidArgument} when df has no documents.
std::vector<std::string> lexical_signature(std::string_view normalized, const DfTable& df);

/// Lowercase hex SHA-256 of the UTF-8 bytes.
std::string content_digest(std::string_view normalized);

/// Digest stored in a fingerprint: of the text when there is any, otherwise
/// of the raw bytes so that non-text resources still detect change.
std::string resource_digest(std::string_view raw_content, std::string_view normalized);

/// Jaccard over k-token shingles; token-set Jaccard when either side has
/// fewer than k tokens. Both empty -> 1, exactly one empty -> 0.
double similarity(std::string_view a, std::string_view b, size_t shingle_size = 4);

struct WICopy {
    std::string member_id;
    std::string archived_uri;
    Timestamp captured_at{};

    bool operator==(const WICopy&) const = default;
};

struct Fingerprint {
    std::string ar_uri;
    std::vector<std::string> lexical_signature;
    std::string content_digest;
    std::string text_snapshot;
    std::optional<std::string> thumbnail_ref;
    Timestamp captured_at{};
    std::vector<WICopy> wi_copies; // newest first

    bool operator==(const Fingerprint&) const = default;
};

enum class ChangeKind { Unchanged = 0, Minor = 1, Significant = 2 };

std::string_view change_kind_name(ChangeKind kind) noexcept;

struct ChangeClass {
    ChangeKind kind = ChangeKind::Unchanged;
    double similarity = 1.0;
};

/// Similarity is measured between old.text_snapshot and the snapshot of
/// new_text so both sides are truncated alike.
ChangeClass classify_change(const Fingerprint& old, std::string_view new_text,
                            const Thresholds& thresholds = {});

/// As above but with the digest precomputed by resource_digest().
ChangeClass classify_change(const Fingerprint& old, std::string_view new_text,
                            std::string_view new_digest, const Thresholds& thresholds = {});

/// Candidate only; a curator confirms.
bool is_wrong_content(const Fingerprint& old, std::string_view new_text,
                      const Thresholds& thresholds = {});

struct Thumbnail {
    std::string media_type;
    std::string bytes;
};

/// Produces the preview artifact that thumbnail_ref points at.
class ThumbnailRenderer {
public:
    virtual ~ThumbnailRenderer() = default;
    virtual Thumbnail render(std::string_view ar_uri, std::string_view text_snapshot) const = 0;
};

/// Preview card: the first kPreviewChars code points of the snapshot.
class TextPreviewRenderer final : public ThumbnailRenderer {
public:
    Thumbnail render(std::string_view ar_uri, std::string_view text_snapshot) const override;
};

} // namespace remember::fp
