#include "remember/revision_store.hpp"

#include "remember/error.hpp"
#include "remember/hash.hpp"
#include "remember/json_codec.hpp"
#include "remember/uri.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

namespace remember::store {

namespace {

constexpr size_t kDigestBytes = 32;

struct ParsedLog {
    std::vector<Revision> revisions;
    size_t valid_length = 0;
    bool torn = false;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(Errc::StorageFailure, "cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint32_t read_u32(const std::string& s, size_t at) {
    std::uint32_t v = 0;
    for (size_t i = 0; i < 4; ++i) {
        v = (v << 8) | static_cast<unsigned char>(s[at + i]);
    }
    return v;
}

Revision decode_payload(const std::string& payload, const std::string& where) {
    try {
        const auto j = nlohmann::json::parse(payload);
        Revision r;
        r.rev_id = j.at("rev").get<RevId>();
        r.parent = optional_from<RevId>(j, "parent");
        r.committed_at = timestamp_from_json(j.at("committed_at"));
        r.actor = j.at("actor").get<std::string>();
        r.note = j.at("note").get<std::string>();
        r.changes = j.at("changes").get<std::vector<ore::ChangeRecord>>();
        r.snapshot_text = j.at("snapshot").get<std::string>();
        return r;
    } catch (const Error& e) {
        throw Error(Errc::StorageFailure, where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::StorageFailure, where + ": " + e.what());
    }
}

// Snapshots are parsed only for the revisions handed out.
Revision with_snapshot(Revision r, const std::string& where) {
    try {
        r.snapshot = ore::parse_rem(r.snapshot_text);
    } catch (const Error& e) {
        throw Error(Errc::StorageFailure, where + ": revision " + std::to_string(r.rev_id) + ": " + e.what());
    }
    return r;
}

// A record that is cut short or fails its digest at the very end of the file
// is a torn write. Damage anywhere else is corruption.
ParsedLog parse_log(const std::string& bytes, const std::string& where) {
    ParsedLog out;
    if (bytes.size() < kLogMagic.size()) {
        out.torn = !bytes.empty();
        return out;
    }
    if (bytes.compare(0, kLogMagic.size(), kLogMagic) != 0) {
        throw Error(Errc::StorageFailure, where + ": bad magic");
    }
    size_t pos = kLogMagic.size();
    out.valid_length = pos;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 4) {
            out.torn = true;
            break;
        }
        const size_t len = read_u32(bytes, pos);
        const size_t end = pos + 4 + len + kDigestBytes;
        if (end > bytes.size()) {
            out.torn = true;
            break;
        }
        const std::string payload = bytes.substr(pos + 4, len);
        if (sha256_raw(payload) != bytes.substr(pos + 4 + len, kDigestBytes)) {
            if (end == bytes.size()) {
                out.torn = true;
                break;
            }
            throw Error(Errc::StorageFailure,
                        where + ": digest mismatch in record " + std::to_string(out.revisions.size() + 1));
        }
        auto rev = decode_payload(payload, where);
        if (rev.rev_id != out.revisions.size() + 1) {
            throw Error(Errc::StorageFailure, where + ": revision numbering broken at " +
                                                  std::to_string(rev.rev_id));
        }
        out.revisions.push_back(std::move(rev));
        pos = end;
        out.valid_length = pos;
    }
    return out;
}

void check_key(const std::string& key) {
    if (key.empty()) {
        throw Error(Errc::InvalidArgument, "rem_key is empty");
    }
    for (unsigned char c : key) {
        if (!std::isalnum(c) && c != '-' && c != '_' && c != '.') {
            throw Error(Errc::InvalidArgument, "rem_key '" + key + "' is not filename safe");
        }
    }
    if (key == "." || key == "..") {
        throw Error(Errc::InvalidArgument, "rem_key '" + key + "' is not filename safe");
    }
}

[[noreturn]] void io_fail(const std::string& what, const std::filesystem::path& p) {
    throw Error(Errc::StorageFailure, what + " " + p.string() + ": " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const std::filesystem::path& p) {
    size_t done = 0;
    while (done < data.size()) {
        const auto n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            io_fail("write", p);
        }
        done += static_cast<size_t>(n);
    }
}

void fsync_dir(const std::filesystem::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

} // namespace

std::string rem_key_for(std::string_view rem_uri) {
    return sha256_hex(normalize_uri(rem_uri)).substr(0, 32);
}

RevisionStore::RevisionStore(std::filesystem::path dir, const Clock& clock)
    : dir_(std::move(dir)), clock_(clock) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) {
        throw Error(Errc::StorageFailure, "cannot create " + dir_.string() + ": " + ec.message());
    }
}

std::filesystem::path RevisionStore::log_path(const std::string& rem_key) const {
    check_key(rem_key);
    return dir_ / (rem_key + ".log");
}

bool RevisionStore::exists(const std::string& rem_key) const {
    const auto p = log_path(rem_key);
    if (!std::filesystem::exists(p)) {
        return false;
    }
    return !read_all(rem_key).empty();
}

std::vector<std::string> RevisionStore::keys() const {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
        if (e.path().extension() == ".log") {
            out.push_back(e.path().stem().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Revision> RevisionStore::read_all(const std::string& rem_key) const {
    const auto p = log_path(rem_key);
    if (!std::filesystem::exists(p)) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    return parse_log(read_file(p), p.string()).revisions;
}

std::mutex& RevisionStore::key_mutex(const std::string& rem_key) {
    std::lock_guard lock(keys_mutex_);
    auto& m = key_mutexes_[rem_key];
    if (!m) {
        m = std::make_unique<std::mutex>();
    }
    return *m;
}

RevId RevisionStore::append(const std::string& rem_key, const std::string& snapshot_text,
                            const std::vector<ore::ChangeRecord>& changes, const std::string& actor,
                            const std::string& note, std::optional<RevId> expected_parent) {
    const auto p = log_path(rem_key);
    ParsedLog log;
    const bool fresh = !std::filesystem::exists(p);
    if (!fresh) {
        log = parse_log(read_file(p), p.string());
    }
    const RevId parent_count = log.revisions.size();
    if (expected_parent && *expected_parent != parent_count) {
        throw Error(Errc::StorageFailure, "concurrent modification of '" + rem_key + "'");
    }
    const RevId rev = parent_count + 1;

    nlohmann::json j{{"rev", rev},
                     {"parent", parent_count == 0 ? nlohmann::json(nullptr) : nlohmann::json(parent_count)},
                     {"committed_at", timestamp_json(clock_.now())},
                     {"actor", actor},
                     {"note", note},
                     {"changes", changes},
                     {"snapshot", snapshot_text}};
    const std::string payload = j.dump();
    if (payload.size() > 0xffffffffu) {
        throw Error(Errc::StorageFailure, "revision too large");
    }
    std::string record;
    const auto len = static_cast<std::uint32_t>(payload.size());
    for (int shift = 24; shift >= 0; shift -= 8) {
        record += static_cast<char>((len >> shift) & 0xff);
    }
    record += payload;
    record += sha256_raw(payload);

    const int fd = ::open(p.c_str(), O_WRONLY | O_CREAT, 0644);
    if (fd < 0) {
        io_fail("open", p);
    }
    struct Closer {
        int fd;
        ~Closer() { ::close(fd); }
    } closer{fd};
    const size_t keep = fresh || log.valid_length == 0 ? 0 : log.valid_length;
    if (::ftruncate(fd, static_cast<off_t>(keep)) != 0) {
        io_fail("truncate", p);
    }
    if (::lseek(fd, static_cast<off_t>(keep), SEEK_SET) < 0) {
        io_fail("seek", p);
    }
    write_all(fd, keep == 0 ? std::string(kLogMagic) + record : record, p);
    if (::fsync(fd) != 0) {
        io_fail("fsync", p);
    }
    if (fresh) {
        fsync_dir(dir_);
    }
    return rev;
}

RevId RevisionStore::commit(const std::string& rem_key, const ore::ResourceMapDoc& doc,
                            const std::vector<ore::ChangeRecord>& changes, const std::string& actor,
                            const std::string& note) {
    check_key(rem_key);
    if (auto problems = ore::validate(doc); !problems.empty()) {
        throw Error(Errc::ValidationFailure, "invalid ReM: " + problems.front());
    }
    const std::string text = ore::serialize_rem(doc);
    std::lock_guard lock(key_mutex(rem_key));
    return append(rem_key, text, changes, actor, note, std::nullopt);
}

std::vector<RevisionSummary> RevisionStore::history(const std::string& rem_key) const {
    std::vector<RevisionSummary> out;
    for (const auto& r : read_all(rem_key)) {
        RevisionSummary s{r.rev_id, r.parent, r.committed_at, r.actor, r.note, {}};
        for (const auto& c : r.changes) {
            s.change_kinds.push_back(c.kind);
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    return out;
}

Revision RevisionStore::get(const std::string& rem_key, RevId rev) const {
    auto all = read_all(rem_key);
    if (all.empty()) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    if (rev == 0 || rev > all.size()) {
        throw Error(Errc::UnknownRevision,
                    "revision " + std::to_string(rev) + " of '" + rem_key + "' does not exist");
    }
    return with_snapshot(std::move(all[rev - 1]), log_path(rem_key).string());
}

Revision RevisionStore::head(const std::string& rem_key) const {
    auto all = read_all(rem_key);
    if (all.empty()) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    return with_snapshot(std::move(all.back()), log_path(rem_key).string());
}

RevId RevisionStore::head_id(const std::string& rem_key) const {
    const auto all = read_all(rem_key);
    if (all.empty()) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    return all.back().rev_id;
}

RevId RevisionStore::rollback(const std::string& rem_key, RevId target, const std::string& actor) {
    check_key(rem_key);
    std::lock_guard lock(key_mutex(rem_key));
    const auto all = read_all(rem_key);
    if (all.empty()) {
        throw Error(Errc::UnknownKey, "no revisions for '" + rem_key + "'");
    }
    if (target == 0 || target > all.size()) {
        throw Error(Errc::UnknownRevision,
                    "revision " + std::to_string(target) + " of '" + rem_key + "' does not exist");
    }
    if (target == all.size()) {
        throw Error(Errc::TargetIsHead, "revision " + std::to_string(target) + " is already head");
    }
    const std::vector<ore::ChangeRecord> changes{
        {ore::ChangeKind::Rollback, std::nullopt, std::nullopt, std::to_string(target)}};
    return append(rem_key, all[target - 1].snapshot_text, changes, actor,
                  "rollback to revision " + std::to_string(target), all.size());
}

std::string RevisionStore::export_changelog(const std::string& rem_key) const {
    std::string out;
    for (const auto& s : history(rem_key)) {
        std::string kinds;
        for (auto k : s.change_kinds) {
            if (!kinds.empty()) {
                kinds += ',';
            }
            kinds += ore::change_kind_name(k);
        }
        if (kinds.empty()) {
            kinds = "-";
        }
        out += std::to_string(s.rev_id) + '\t' + format_rfc3339(s.committed_at) + '\t' + s.actor + '\t' +
               kinds + '\t' + s.note + '\n';
    }
    return out;
}

} // namespace remember::store
