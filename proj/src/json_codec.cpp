#include "remember/json_codec.hpp"

#include "remember/error.hpp"
#include "remember/hash.hpp"

namespace remember {

nlohmann::json timestamp_json(Timestamp t) { return format_rfc3339(t); }

Timestamp timestamp_from_json(const nlohmann::json& j) {
    if (!j.is_string()) {
        throw Error(Errc::InvalidArgument, "timestamp must be a string");
    }
    auto t = parse_rfc3339(j.get<std::string>());
    if (!t) {
        throw Error(Errc::InvalidArgument, "bad timestamp '" + j.get<std::string>() + "'");
    }
    return *t;
}

} // namespace remember

namespace remember::ore {

void to_json(nlohmann::json& j, const AREntry& e) {
    j = nlohmann::json{{"entry_id", e.entry_id},
                       {"ar_uri", e.ar_uri},
                       {"media_type", e.media_type},
                       {"title", e.title},
                       {"updated", timestamp_json(e.updated)},
                       {"extra_metadata", e.extra_metadata},
                       {"flagged_gone", e.flagged_gone}};
}

void from_json(const nlohmann::json& j, AREntry& e) {
    e.entry_id = j.at("entry_id").get<std::string>();
    e.ar_uri = j.at("ar_uri").get<std::string>();
    e.media_type = j.value("media_type", "");
    e.title = j.value("title", "");
    e.updated = timestamp_from_json(j.at("updated"));
    e.extra_metadata = j.value("extra_metadata", MetadataPairs{});
    e.flagged_gone = j.value("flagged_gone", false);
}

void to_json(nlohmann::json& j, const ResourceMapDoc& d) {
    j = nlohmann::json{{"rem_uri", d.rem_uri},
                       {"aggregation_uri", d.aggregation_uri},
                       {"title", d.title},
                       {"authors", d.authors},
                       {"updated", timestamp_json(d.updated)},
                       {"entries", d.entries}};
}

void from_json(const nlohmann::json& j, ResourceMapDoc& d) {
    d.rem_uri = j.at("rem_uri").get<std::string>();
    d.aggregation_uri = j.at("aggregation_uri").get<std::string>();
    d.title = j.value("title", "");
    d.authors = j.value("authors", std::vector<std::string>{});
    d.updated = timestamp_from_json(j.at("updated"));
    d.entries = j.value("entries", std::vector<AREntry>{});
}

void to_json(nlohmann::json& j, const ChangeRecord& c) {
    j = nlohmann::json{{"kind", change_kind_name(c.kind)},
                       {"entry_id", optional_json(c.entry_id)},
                       {"old_value", optional_json(c.old_value)},
                       {"new_value", optional_json(c.new_value)}};
}

void from_json(const nlohmann::json& j, ChangeRecord& c) {
    const auto name = j.at("kind").get<std::string>();
    const auto kind = parse_change_kind(name);
    if (!kind) {
        throw Error(Errc::InvalidArgument, "unknown change kind '" + name + "'");
    }
    c.kind = *kind;
    c.entry_id = optional_from<std::string>(j, "entry_id");
    c.old_value = optional_from<std::string>(j, "old_value");
    c.new_value = optional_from<std::string>(j, "new_value");
}

} // namespace remember::ore

namespace remember::fp {

void to_json(nlohmann::json& j, const WICopy& c) {
    j = nlohmann::json{{"member_id", c.member_id},
                       {"archived_uri", c.archived_uri},
                       {"captured_at", timestamp_json(c.captured_at)}};
}

void from_json(const nlohmann::json& j, WICopy& c) {
    c.member_id = j.at("member_id").get<std::string>();
    c.archived_uri = j.at("archived_uri").get<std::string>();
    c.captured_at = timestamp_from_json(j.at("captured_at"));
}

void to_json(nlohmann::json& j, const Fingerprint& f) {
    j = nlohmann::json{{"ar_uri", f.ar_uri},
                       {"lexical_signature", f.lexical_signature},
                       {"content_digest", f.content_digest},
                       {"text_snapshot", f.text_snapshot},
                       {"thumbnail_ref", optional_json(f.thumbnail_ref)},
                       {"captured_at", timestamp_json(f.captured_at)},
                       {"wi_copies", f.wi_copies}};
}

void from_json(const nlohmann::json& j, Fingerprint& f) {
    f.ar_uri = j.at("ar_uri").get<std::string>();
    f.lexical_signature = j.at("lexical_signature").get<std::vector<std::string>>();
    f.content_digest = j.at("content_digest").get<std::string>();
    f.text_snapshot = j.at("text_snapshot").get<std::string>();
    f.thumbnail_ref = optional_from<std::string>(j, "thumbnail_ref");
    f.captured_at = timestamp_from_json(j.at("captured_at"));
    f.wi_copies = j.value("wi_copies", std::vector<WICopy>{});
}

} // namespace remember::fp

namespace remember::wi {

void to_json(nlohmann::json& j, const WIRecord& r) {
    j = nlohmann::json{{"member_id", r.member_id},
                       {"original_uri", r.original_uri},
                       {"archived_uri", r.archived_uri},
                       {"captured_at", timestamp_json(r.captured_at)},
                       {"media_type", r.media_type},
                       {"content_base64", base64_encode(r.content)}};
}

void from_json(const nlohmann::json& j, WIRecord& r) {
    r.member_id = j.at("member_id").get<std::string>();
    r.original_uri = j.at("original_uri").get<std::string>();
    r.archived_uri = j.at("archived_uri").get<std::string>();
    r.captured_at = timestamp_from_json(j.at("captured_at"));
    r.media_type = j.value("media_type", "");
    r.content = base64_decode(j.value("content_base64", ""));
}

void to_json(nlohmann::json& j, const RelocationAid& a) {
    auto copies = nlohmann::json::array();
    for (const auto& r : a.wi_copies) {
        // The aid lists copies; content stays behind the archived URI.
        copies.push_back({{"member_id", r.member_id},
                          {"original_uri", r.original_uri},
                          {"archived_uri", r.archived_uri},
                          {"captured_at", timestamp_json(r.captured_at)},
                          {"media_type", r.media_type}});
    }
    nlohmann::json print = nullptr;
    if (a.fingerprint) {
        print = *a.fingerprint;
        const auto& snap = a.fingerprint->text_snapshot;
        print["preview"] = fp::TextPreviewRenderer{}.render(a.fingerprint->ar_uri, snap).bytes;
        print.erase("text_snapshot");
    }
    j = nlohmann::json{{"wi_copies", copies},
                       {"queries", a.queries},
                       {"fingerprint", print},
                       {"metadata", a.metadata},
                       {"candidates", a.candidates},
                       {"notes", a.notes}};
}

} // namespace remember::wi
