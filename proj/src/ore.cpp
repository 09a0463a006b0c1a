#include "remember/ore.hpp"

#include "remember/error.hpp"
#include "remember/json_codec.hpp"
#include "remember/uri.hpp"

#include <expat.h>

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <sstream>

namespace remember::ore {

namespace {

constexpr char kNsSep = '\x01';
constexpr std::string_view kXmlNs = "http://www.w3.org/XML/1998/namespace";

struct Node {
    std::string ns;
    std::string local;
    std::vector<std::pair<std::string, std::string>> attrs; // Clark-notation names
    std::string text;                                         // direct character data
    std::vector<std::unique_ptr<Node>> children;

    bool is(std::string_view want_ns, std::string_view want_local) const {
        return ns == want_ns && local == want_local;
    }

    const std::string* attr(std::string_view name) const {
        for (const auto& [k, v] : attrs) {
            if (k == name) {
                return &v;
            }
        }
        return nullptr;
    }

    std::string descendant_text() const {
        std::string out = text;
        for (const auto& c : children) {
            out += ' ';
            out += c->descendant_text();
        }
        return out;
    }
};

std::pair<std::string, std::string> split_expat_name(const char* name) {
    std::string_view n(name);
    const auto sep = n.find(kNsSep);
    if (sep == std::string_view::npos) {
        return {"", std::string(n)};
    }
    return {std::string(n.substr(0, sep)), std::string(n.substr(sep + 1))};
}

std::string clark(const std::string& ns, const std::string& local) {
    return ns.empty() ? local : "{" + ns + "}" + local;
}

struct TreeBuilder {
    std::unique_ptr<Node> root;
    std::vector<Node*> stack;

    static void on_start(void* user, const XML_Char* name, const XML_Char** atts) {
        auto* self = static_cast<TreeBuilder*>(user);
        auto node = std::make_unique<Node>();
        std::tie(node->ns, node->local) = split_expat_name(name);
        for (size_t i = 0; atts[i] != nullptr; i += 2) {
            auto [ans, alocal] = split_expat_name(atts[i]);
            node->attrs.emplace_back(clark(ans, alocal), atts[i + 1]);
        }
        Node* raw = node.get();
        if (self->stack.empty()) {
            self->root = std::move(node);
        } else {
            self->stack.back()->children.push_back(std::move(node));
        }
        self->stack.push_back(raw);
    }

    static void on_end(void* user, const XML_Char*) {
        static_cast<TreeBuilder*>(user)->stack.pop_back();
    }

    static void on_text(void* user, const XML_Char* s, int len) {
        auto* self = static_cast<TreeBuilder*>(user);
        if (!self->stack.empty()) {
            self->stack.back()->text.append(s, static_cast<size_t>(len));
        }
    }
};

std::unique_ptr<Node> parse_xml(std::string_view text) {
    std::unique_ptr<XML_ParserStruct, decltype(&XML_ParserFree)> parser(
        XML_ParserCreateNS("UTF-8", kNsSep), &XML_ParserFree);
    if (!parser) {
        throw Error(Errc::MalformedXml, "cannot allocate XML parser");
    }
    TreeBuilder builder;
    XML_SetUserData(parser.get(), &builder);
    XML_SetElementHandler(parser.get(), &TreeBuilder::on_start, &TreeBuilder::on_end);
    XML_SetCharacterDataHandler(parser.get(), &TreeBuilder::on_text);
    if (XML_Parse(parser.get(), text.data(), static_cast<int>(text.size()), XML_TRUE) ==
        XML_STATUS_ERROR) {
        std::ostringstream msg;
        msg << "line " << XML_GetCurrentLineNumber(parser.get()) << ": "
            << XML_ErrorString(XML_GetErrorCode(parser.get()));
        throw Error(Errc::MalformedXml, msg.str());
    }
    if (!builder.root) {
        throw Error(Errc::MalformedXml, "no root element");
    }
    return std::move(builder.root);
}

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

Timestamp require_timestamp(const Node& node, const std::string& where) {
    const auto value = collapse_whitespace(node.text);
    auto t = parse_rfc3339(value);
    if (!t) {
        throw Error(Errc::InvalidRem, where + ": invalid RFC-3339 timestamp '" + value + "'");
    }
    return *t;
}

std::string link_rel(const Node& link) {
    const auto* rel = link.attr("rel");
    return rel ? collapse_whitespace(*rel) : std::string("alternate");
}

void flatten(const Node& node, const std::string& prefix, MetadataPairs& out) {
    const std::string key = prefix + clark(node.ns == kAtomNs ? "" : node.ns, node.local);
    for (const auto& [name, value] : node.attrs) {
        out.emplace_back(key + "@" + name, collapse_whitespace(value));
    }
    const auto text = collapse_whitespace(node.text);
    if (node.children.empty()) {
        if (node.attrs.empty() || !text.empty()) {
            out.emplace_back(key, text);
        }
        return;
    }
    if (!text.empty()) {
        out.emplace_back(key, text);
    }
    for (const auto& child : node.children) {
        flatten(*child, key + "/", out);
    }
}

AREntry parse_entry(const Node& node, size_t index) {
    AREntry entry;
    const std::string where = "entry " + std::to_string(index);
    bool have_id = false, have_link = false, have_title = false, have_updated = false,
         have_flag = false;
    for (const auto& child_ptr : node.children) {
        const Node& child = *child_ptr;
        if (!have_id && child.is(kAtomNs, "id")) {
            entry.entry_id = collapse_whitespace(child.text);
            have_id = true;
        } else if (!have_link && child.is(kAtomNs, "link") && link_rel(child) == "alternate" &&
                   child.attr("href") != nullptr) {
            entry.ar_uri = collapse_whitespace(*child.attr("href"));
            if (const auto* type = child.attr("type")) {
                entry.media_type = collapse_whitespace(*type);
            }
            have_link = true;
        } else if (!have_title && child.is(kAtomNs, "title")) {
            entry.title = collapse_whitespace(child.descendant_text());
            have_title = true;
        } else if (!have_updated && child.is(kAtomNs, "updated")) {
            entry.updated = require_timestamp(child, where + " updated");
            have_updated = true;
        } else if (!have_flag && child.is(kCurationNs, "flaggedGone")) {
            entry.flagged_gone = collapse_whitespace(child.text) == "true";
            have_flag = true;
        } else {
            flatten(child, "", entry.extra_metadata);
        }
    }
    if (!have_link) {
        throw Error(Errc::EntryWithoutAlternateLink,
                    where + " has no alternate link (index " + std::to_string(index) + ")");
    }
    if (entry.entry_id.empty()) {
        throw Error(Errc::InvalidRem, where + " has no id");
    }
    if (!have_updated) {
        throw Error(Errc::InvalidRem, where + " has no updated timestamp");
    }
    return entry;
}

// --- serialization ---------------------------------------------------------

void escape_into(std::string& out, std::string_view text, bool attribute) {
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"':
            if (attribute) {
                out += "&quot;";
            } else {
                out += c;
            }
            break;
        default: out += c;
        }
    }
}

std::string esc(std::string_view text, bool attribute = false) {
    std::string out;
    escape_into(out, text, attribute);
    return out;
}

struct KeySegment {
    std::string ns; // empty = Atom namespace (elements) or no namespace (attributes)
    std::string local;
};

bool is_name_char(char c, bool first) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x80 || std::isalpha(u) || c == '_') {
        return true;
    }
    return !first && (std::isdigit(u) || c == '-' || c == '.');
}

bool valid_local(std::string_view s) {
    if (s.empty()) {
        return false;
    }
    for (size_t i = 0; i < s.size(); ++i) {
        if (!is_name_char(s[i], i == 0)) {
            return false;
        }
    }
    return true;
}

// Parses one "{ns}local" or "local" starting at pos; stops at '/', '@' or end.
std::optional<KeySegment> read_segment(std::string_view key, size_t& pos) {
    KeySegment seg;
    if (pos < key.size() && key[pos] == '{') {
        const auto close = key.find('}', pos);
        if (close == std::string_view::npos || close == pos + 1) {
            return std::nullopt;
        }
        seg.ns = std::string(key.substr(pos + 1, close - pos - 1));
        pos = close + 1;
    }
    const auto start = pos;
    while (pos < key.size() && key[pos] != '/' && key[pos] != '@') {
        ++pos;
    }
    seg.local = std::string(key.substr(start, pos - start));
    if (!valid_local(seg.local)) {
        return std::nullopt;
    }
    return seg;
}

struct ParsedKey {
    std::vector<KeySegment> path;
    std::optional<KeySegment> attribute;
};

std::optional<ParsedKey> parse_key(std::string_view key) {
    ParsedKey out;
    size_t pos = 0;
    while (true) {
        auto seg = read_segment(key, pos);
        if (!seg) {
            return std::nullopt;
        }
        out.path.push_back(std::move(*seg));
        if (pos == key.size()) {
            return out;
        }
        if (key[pos] == '/') {
            ++pos;
            continue;
        }
        ++pos; // '@'
        auto attr = read_segment(key, pos);
        if (!attr || pos != key.size()) {
            return std::nullopt;
        }
        out.attribute = std::move(*attr);
        return out;
    }
}

void emit_extra(std::string& out, const std::string& key, const std::string& value,
                const std::string& indent) {
    const auto parsed = parse_key(key);
    // validate() guarantees parseable keys
    const auto& path = parsed->path;
    std::string default_ns(kAtomNs);
    std::vector<std::string> closers;
    out += indent;
    for (size_t i = 0; i < path.size(); ++i) {
        const auto& seg = path[i];
        const std::string ns = seg.ns.empty() ? std::string(kAtomNs) : seg.ns;
        out += "<" + seg.local;
        if (ns != default_ns) {
            out += " xmlns=\"" + esc(ns, true) + "\"";
            default_ns = ns;
        }
        const bool last = i + 1 == path.size();
        if (last && parsed->attribute) {
            const auto& a = *parsed->attribute;
            if (a.ns.empty()) {
                out += " " + a.local + "=\"" + esc(value, true) + "\"";
            } else if (a.ns == kXmlNs) {
                out += " xml:" + a.local + "=\"" + esc(value, true) + "\"";
            } else {
                out += " xmlns:x=\"" + esc(a.ns, true) + "\" x:" + a.local + "=\"" +
                       esc(value, true) + "\"";
            }
            out += "/>";
        } else if (last) {
            out += ">" + esc(value) + "</" + seg.local + ">";
        } else {
            out += ">";
            closers.push_back("</" + seg.local + ">");
        }
    }
    for (auto it = closers.rbegin(); it != closers.rend(); ++it) {
        out += *it;
    }
    out += "\n";
}

bool valid_utf8(std::string_view s) {
    size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 0;
        if (len == 0 || i + len > s.size()) {
            return false;
        }
        for (size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) >> 6) != 0x2) {
                return false;
            }
        }
        i += len;
    }
    return true;
}

// Text fields must be what the parser would produce.
std::optional<std::string> text_problem(std::string_view s) {
    if (!valid_utf8(s)) {
        return "not valid UTF-8";
    }
    for (char c : s) {
        if (static_cast<unsigned char>(c) < 0x20) {
            return "contains control characters";
        }
    }
    if (collapse_whitespace(s) != s) {
        return "has untrimmed or repeated whitespace";
    }
    return std::nullopt;
}

} // namespace

std::string collapse_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_ws(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += c;
    }
    return out;
}

const AREntry* ResourceMapDoc::find(std::string_view entry_id) const {
    for (const auto& e : entries) {
        if (e.entry_id == entry_id) {
            return &e;
        }
    }
    return nullptr;
}

AREntry* ResourceMapDoc::find(std::string_view entry_id) {
    return const_cast<AREntry*>(std::as_const(*this).find(entry_id));
}

std::string_view change_kind_name(ChangeKind kind) noexcept {
    switch (kind) {
    case ChangeKind::ARAdded: return "ARAdded";
    case ChangeKind::ARRemoved: return "ARRemoved";
    case ChangeKind::ARMoved: return "ARMoved";
    case ChangeKind::ARFlaggedGone: return "ARFlaggedGone";
    case ChangeKind::ARRearchived: return "ARRearchived";
    case ChangeKind::MetadataEdited: return "MetadataEdited";
    case ChangeKind::ReMMetadataEdited: return "ReMMetadataEdited";
    case ChangeKind::Rollback: return "Rollback";
    }
    return "";
}

std::optional<ChangeKind> parse_change_kind(std::string_view name) noexcept {
    for (auto k : {ChangeKind::ARAdded, ChangeKind::ARRemoved, ChangeKind::ARMoved,
                   ChangeKind::ARFlaggedGone, ChangeKind::ARRearchived,
                   ChangeKind::MetadataEdited, ChangeKind::ReMMetadataEdited,
                   ChangeKind::Rollback}) {
        if (change_kind_name(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

ResourceMapDoc parse_rem(std::string_view atom_text) {
    const auto root = parse_xml(atom_text);
    if (!root->is(kAtomNs, "feed")) {
        throw Error(Errc::InvalidRem, "root element is not an Atom feed");
    }
    ResourceMapDoc doc;
    bool have_id = false, have_self = false, have_title = false, have_updated = false;
    size_t entry_index = 0;
    for (const auto& child_ptr : root->children) {
        const Node& child = *child_ptr;
        if (!have_id && child.is(kAtomNs, "id")) {
            doc.aggregation_uri = collapse_whitespace(child.text);
            have_id = true;
        } else if (child.is(kAtomNs, "link")) {
            // Only the first self link names the ReM.
            if (!have_self && link_rel(child) == "self" && child.attr("href") != nullptr) {
                doc.rem_uri = collapse_whitespace(*child.attr("href"));
                have_self = true;
            }
        } else if (!have_title && child.is(kAtomNs, "title")) {
            doc.title = collapse_whitespace(child.descendant_text());
            have_title = true;
        } else if (child.is(kAtomNs, "author")) {
            std::string name;
            for (const auto& a : child.children) {
                if (a->is(kAtomNs, "name")) {
                    name = collapse_whitespace(a->text);
                    break;
                }
            }
            doc.authors.push_back(std::move(name));
        } else if (!have_updated && child.is(kAtomNs, "updated")) {
            doc.updated = require_timestamp(child, "feed updated");
            have_updated = true;
        } else if (child.is(kAtomNs, "entry")) {
            doc.entries.push_back(parse_entry(child, entry_index++));
        }
    }
    if (!have_id || doc.aggregation_uri.empty()) {
        throw Error(Errc::MissingFeedId, "feed has no id");
    }
    if (!have_self || doc.rem_uri.empty()) {
        throw Error(Errc::MissingSelfLink, "feed has no rel=\"self\" link");
    }
    if (!have_updated) {
        throw Error(Errc::InvalidRem, "feed has no updated timestamp");
    }
    return doc;
}

std::vector<std::string> validate(const ResourceMapDoc& doc) {
    std::vector<std::string> out;
    auto check_uri = [&](const std::string& field, const std::string& value) {
        if (value.empty()) {
            out.push_back(field + ": empty");
        } else if (!is_absolute_uri(value)) {
            out.push_back(field + ": not an absolute URI '" + value + "'");
        }
    };
    auto check_text = [&](const std::string& field, const std::string& value) {
        if (auto problem = text_problem(value)) {
            out.push_back(field + ": " + *problem);
        }
    };
    check_uri("rem_uri", doc.rem_uri);
    check_uri("aggregation_uri", doc.aggregation_uri);
    if (!doc.rem_uri.empty() && doc.rem_uri == doc.aggregation_uri) {
        out.push_back("rem_uri, aggregation_uri: must be distinct (both '" + doc.rem_uri + "')");
    }
    check_text("title", doc.title);
    for (size_t i = 0; i < doc.authors.size(); ++i) {
        check_text("authors[" + std::to_string(i) + "]", doc.authors[i]);
    }
    if (!is_representable(doc.updated)) {
        out.push_back("updated: outside RFC-3339 range");
    }
    std::map<std::string, size_t> seen;
    for (size_t i = 0; i < doc.entries.size(); ++i) {
        const auto& e = doc.entries[i];
        const std::string where = "entries[" + std::to_string(i) + "]";
        if (e.entry_id.empty()) {
            out.push_back(where + ".entry_id: empty");
        } else {
            check_text(where + ".entry_id", e.entry_id);
            auto [it, inserted] = seen.emplace(e.entry_id, i);
            if (!inserted) {
                out.push_back(where + ".entry_id: duplicate id '" + e.entry_id +
                              "' (first at entries[" + std::to_string(it->second) + "])");
            }
        }
        if (!e.flagged_gone) {
            check_uri(where + ".ar_uri", e.ar_uri);
        } else {
            check_text(where + ".ar_uri", e.ar_uri);
        }
        check_text(where + ".media_type", e.media_type);
        check_text(where + ".title", e.title);
        if (!is_representable(e.updated)) {
            out.push_back(where + ".updated: outside RFC-3339 range");
        }
        for (size_t k = 0; k < e.extra_metadata.size(); ++k) {
            const auto& [key, value] = e.extra_metadata[k];
            const std::string field = where + ".extra_metadata[" + std::to_string(k) + "]";
            if (!parse_key(key)) {
                out.push_back(field + ": malformed key '" + key + "'");
            } else if (key.rfind("{" + std::string(kCurationNs) + "}", 0) == 0) {
                out.push_back(field + ": key '" + key + "' uses the reserved curation namespace");
            }
            check_text(field, value);
        }
    }
    return out;
}

std::string serialize_rem(const ResourceMapDoc& doc) {
    if (auto problems = validate(doc); !problems.empty()) {
        std::string msg = "document fails validation:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw Error(Errc::InvariantViolation, msg);
    }
    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n";
    out += "<feed xmlns=\"" + std::string(kAtomNs) + "\">\n";
    out += "  <id>" + esc(doc.aggregation_uri) + "</id>\n";
    out += "  <link href=\"" + esc(doc.rem_uri, true) +
           "\" rel=\"self\" type=\"application/atom+xml\"/>\n";
    out += "  <category scheme=\"" + std::string(kOreTermsNs) + "\" term=\"" +
           std::string(kOreTermsNs) + "Aggregation\" label=\"Aggregation\"/>\n";
    out += "  <title>" + esc(doc.title) + "</title>\n";
    for (const auto& author : doc.authors) {
        out += "  <author><name>" + esc(author) + "</name></author>\n";
    }
    out += "  <updated>" + format_rfc3339(doc.updated) + "</updated>\n";
    for (const auto& e : doc.entries) {
        out += "  <entry>\n";
        out += "    <id>" + esc(e.entry_id) + "</id>\n";
        out += "    <link href=\"" + esc(e.ar_uri, true) + "\" rel=\"alternate\"";
        if (!e.media_type.empty()) {
            out += " type=\"" + esc(e.media_type, true) + "\"";
        }
        out += "/>\n";
        out += "    <title>" + esc(e.title) + "</title>\n";
        out += "    <updated>" + format_rfc3339(e.updated) + "</updated>\n";
        if (e.flagged_gone) {
            out += "    <flaggedGone xmlns=\"" + std::string(kCurationNs) + "\">true</flaggedGone>\n";
        }
        for (const auto& [key, value] : e.extra_metadata) {
            emit_extra(out, key, value, "    ");
        }
        out += "  </entry>\n";
    }
    out += "</feed>\n";
    return out;
}

std::vector<ChangeRecord> diff_rems(const ResourceMapDoc& old_doc, const ResourceMapDoc& new_doc) {
    std::vector<ChangeRecord> removals, additions, moves, flags, edits, feed;
    for (const auto& e : old_doc.entries) {
        if (!new_doc.find(e.entry_id)) {
            removals.push_back({ChangeKind::ARRemoved, e.entry_id, e.ar_uri, std::nullopt});
        }
    }
    for (const auto& e : new_doc.entries) {
        const AREntry* before = old_doc.find(e.entry_id);
        if (!before) {
            additions.push_back(
                {ChangeKind::ARAdded, e.entry_id, std::nullopt, nlohmann::json(e).dump()});
            continue;
        }
        if (before->ar_uri != e.ar_uri) {
            moves.push_back({ChangeKind::ARMoved, e.entry_id, before->ar_uri, e.ar_uri});
        }
        if (!before->flagged_gone && e.flagged_gone) {
            flags.push_back({ChangeKind::ARFlaggedGone, e.entry_id, e.ar_uri, std::nullopt});
        }
        nlohmann::json was = nlohmann::json::object(), now = nlohmann::json::object();
        if (before->title != e.title) {
            was["title"] = before->title;
            now["title"] = e.title;
        }
        if (before->updated != e.updated) {
            was["updated"] = format_rfc3339(before->updated);
            now["updated"] = format_rfc3339(e.updated);
        }
        if (before->media_type != e.media_type) {
            was["media_type"] = before->media_type;
            now["media_type"] = e.media_type;
        }
        if (before->extra_metadata != e.extra_metadata) {
            was["extra_metadata"] = before->extra_metadata;
            now["extra_metadata"] = e.extra_metadata;
        }
        if (before->flagged_gone && !e.flagged_gone) {
            was["flagged_gone"] = true;
            now["flagged_gone"] = false;
        }
        if (!now.empty()) {
            edits.push_back({ChangeKind::MetadataEdited, e.entry_id, was.dump(), now.dump()});
        }
    }
    nlohmann::json was = nlohmann::json::object(), now = nlohmann::json::object();
    if (old_doc.title != new_doc.title) {
        was["title"] = old_doc.title;
        now["title"] = new_doc.title;
    }
    if (old_doc.authors != new_doc.authors) {
        was["authors"] = old_doc.authors;
        now["authors"] = new_doc.authors;
    }
    if (old_doc.updated != new_doc.updated) {
        was["updated"] = format_rfc3339(old_doc.updated);
        now["updated"] = format_rfc3339(new_doc.updated);
    }
    if (!now.empty()) {
        feed.push_back({ChangeKind::ReMMetadataEdited, std::nullopt, was.dump(), now.dump()});
    }

    std::vector<ChangeRecord> out;
    for (auto* group : {&removals, &additions, &moves, &flags, &edits, &feed}) {
        out.insert(out.end(), group->begin(), group->end());
    }
    return out;
}

} // namespace remember::ore
