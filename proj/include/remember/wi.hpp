#pragma once

// Web Infrastructure members (archives, caches, search engines), their
// simulated stand-ins, and the registry used for copy lookup.

#include "remember/fingerprint.hpp"
#include "remember/ore.hpp"
#include "remember/time.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace remember::wi {

enum class MemberKind { Archive, Cache, Search };
enum class Capability { Push, Lookup, Holdings, Search };

std::string_view member_kind_name(MemberKind kind) noexcept;
std::optional<MemberKind> parse_member_kind(std::string_view name) noexcept;
std::string_view capability_name(Capability cap) noexcept;
std::optional<Capability> parse_capability(std::string_view name) noexcept;

struct MemberDescriptor {
    std::string member_id;
    MemberKind kind = MemberKind::Archive;
    std::set<Capability> capabilities;
    std::chrono::seconds lag{0}; // archive visibility delay
    bool keeps_history = true;

    bool has(Capability c) const { return capabilities.count(c) != 0; }

    /// Kind-implied defaults: Archive {Push, Holdings} + history; Cache
    /// {Lookup} without history; Search {Search}.
    static MemberDescriptor archive(std::string id, std::chrono::seconds lag = {});
    static MemberDescriptor cache(std::string id);
    static MemberDescriptor search_engine(std::string id, bool with_cache = false);
};

/// Empty when the descriptor satisfies its kind invariants.
std::vector<std::string> validate(const MemberDescriptor& d);

struct WIRecord {
    std::string member_id;
    std::string original_uri;
    std::string archived_uri;
    Timestamp captured_at{};
    std::string content;
    std::string media_type;

    bool operator==(const WIRecord&) const = default;
};

struct Holding {
    Timestamp captured_at{};
    std::string archived_uri;

    bool operator==(const Holding&) const = default;
};

/// member_id + "/" + compact(captured_at) + "/" + original_uri
std::string archived_uri_for(std::string_view member_id, Timestamp captured_at,
                             std::string_view original_uri);

/// One WI member. Operations the descriptor lacks throw
/// Error{CapabilityMissing}; unreachable members throw Error{MemberUnavailable}.
class Member {
public:
    explicit Member(MemberDescriptor descriptor);
    virtual ~Member() = default;

    const MemberDescriptor& descriptor() const noexcept { return descriptor_; }
    const std::string& id() const noexcept { return descriptor_.member_id; }

    virtual WIRecord push(const std::string& original_uri, const std::string& content,
                          const std::string& media_type, Timestamp at);
    virtual std::optional<WIRecord> lookup(const std::string& uri);
    /// Newest first; only records visible at `now` (captured_at + lag <= now).
    virtual std::vector<WIRecord> visible_records(const std::string& uri, Timestamp now);
    virtual std::vector<std::string> search(const std::string& query);

    std::vector<Holding> holdings(const std::string& uri, Timestamp now);

protected:
    void require(Capability c) const;

private:
    MemberDescriptor descriptor_;
};

/// Fault-injection switch shared by the simulated members.
class SimulatedMember : public Member {
public:
    using Member::Member;

    void set_available(bool available) { available_ = available; }
    bool available() const noexcept { return available_; }

    virtual void save(const std::filesystem::path& dir) const = 0;
    virtual void load(const std::filesystem::path& dir) = 0;

protected:
    void require_available() const;

private:
    std::atomic<bool> available_{true};
};

/// Append-only store with visibility lag.
class SimulatedArchive final : public SimulatedMember {
public:
    explicit SimulatedArchive(MemberDescriptor descriptor);

    WIRecord push(const std::string& original_uri, const std::string& content,
                  const std::string& media_type, Timestamp at) override;
    std::vector<WIRecord> visible_records(const std::string& uri, Timestamp now) override;

    /// Everything stored, ignoring lag and availability (test oracle access).
    std::vector<WIRecord> all_records() const;
    size_t record_count() const;

    void save(const std::filesystem::path& dir) const override;
    void load(const std::filesystem::path& dir) override;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::vector<WIRecord>> records_; // by original URI, append order
};

/// Keeps only the latest crawl of each URI.
class SimulatedCache final : public SimulatedMember {
public:
    explicit SimulatedCache(MemberDescriptor descriptor);

    /// The cache's own crawler; replaces any earlier copy.
    void crawl(const std::string& uri, const std::string& content, const std::string& media_type,
               Timestamp at);
    void evict(const std::string& uri);

    std::optional<WIRecord> lookup(const std::string& uri) override;
    std::vector<WIRecord> visible_records(const std::string& uri, Timestamp now) override;

    std::vector<WIRecord> all_records() const;

    void save(const std::filesystem::path& dir) const override;
    void load(const std::filesystem::path& dir) override;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, WIRecord> records_;
};

/// Full-text index. Results contain every query term (quoted phrases
/// contiguously), ranked by summed term frequency then URI ascending. With the
/// Lookup capability it also serves its latest copy like a cache.
class SimulatedSearchEngine final : public SimulatedMember {
public:
    explicit SimulatedSearchEngine(MemberDescriptor descriptor);

    void index(const std::string& uri, const std::string& content, const std::string& media_type,
               Timestamp at);
    void evict(const std::string& uri);

    std::vector<std::string> search(const std::string& query) override;
    std::optional<WIRecord> lookup(const std::string& uri) override;
    std::vector<WIRecord> visible_records(const std::string& uri, Timestamp now) override;

    void save(const std::filesystem::path& dir) const override;
    void load(const std::filesystem::path& dir) override;

private:
    struct Doc {
        WIRecord record;
        std::string text;
    };
    mutable std::shared_mutex mutex_;
    std::map<std::string, Doc> docs_;
};

/// Parsed search query: each element is a token sequence that must occur
/// contiguously (bare words are one-token sequences).
std::vector<std::vector<std::string>> parse_query(std::string_view query);

struct CopySearch {
    std::vector<WIRecord> records; // newest first
    std::vector<std::string> notes; // one per skipped member
};

class Registry {
public:
    explicit Registry(const Clock& clock);

    void add(std::shared_ptr<Member> member);
    Member& member(const std::string& id) const; // Error{UnknownMember}
    std::vector<std::shared_ptr<Member>> members() const;
    std::vector<std::string> ids_with(Capability c) const;

    WIRecord push(const std::string& member_id, const std::string& original_uri,
                  const std::string& content, const std::string& media_type, Timestamp at);
    std::optional<WIRecord> lookup(const std::string& member_id, const std::string& uri);
    std::vector<Holding> holdings(const std::string& member_id, const std::string& uri);
    std::vector<std::string> search(const std::string& member_id, const std::string& query);

    /// Union over members: latest copy from Lookup members, visible records
    /// from Holdings members. Unavailable members are skipped with a note.
    CopySearch find_copies_detailed(const std::string& uri);
    std::vector<WIRecord> find_copies(const std::string& uri);

    /// Pushes to every Push-capable Archive member; failures become notes.
    std::vector<WIRecord> push_to_archives(const std::string& original_uri,
                                           const std::string& content,
                                           const std::string& media_type, Timestamp at,
                                           std::vector<std::string>* notes = nullptr);

    void save_simulated(const std::filesystem::path& dir) const;
    void load_simulated(const std::filesystem::path& dir);

private:
    const Clock& clock_;
    mutable std::shared_mutex mutex_;
    std::vector<std::shared_ptr<Member>> members_;
};

/// Ordered, deduplicated: "\"title\"", title + authors, signature terms.
/// Entry authors come from extra_metadata "author/name" (or "author").
std::vector<std::string> build_relocation_queries(const ore::AREntry& entry,
                                                  const std::optional<fp::Fingerprint>& fp);

/// Author names recorded in an entry's extra metadata.
std::vector<std::string> entry_authors(const ore::AREntry& entry);

struct RelocationAid {
    std::vector<WIRecord> wi_copies; // newest first
    std::vector<std::string> queries;
    std::optional<fp::Fingerprint> fingerprint;
    ore::AREntry metadata;
    /// Live-web candidates from Search members first, archived copy URIs after.
    std::vector<std::string> candidates;
    std::vector<std::string> notes;
};

} // namespace remember::wi
