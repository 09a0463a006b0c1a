#include "remember/fingerprint.hpp"

#include "remember/error.hpp"
#include "remember/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>

namespace remember::fp {

namespace detail {
extern const std::vector<std::string> kStopwords;
}

namespace {

enum class Flavor { Markup, Plain, Binary };

Flavor flavor_of(std::string_view media_type) {
    std::string mt(media_type.substr(0, media_type.find(';')));
    while (!mt.empty() && mt.back() == ' ') {
        mt.pop_back();
    }
    std::transform(mt.begin(), mt.end(), mt.begin(),
                   [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); });
    const auto ends_with = [&](std::string_view suffix) {
        return mt.size() >= suffix.size() && mt.compare(mt.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (mt == "text/html" || mt == "application/xhtml+xml" || mt == "text/xml" ||
        mt == "application/xml" || ends_with("+xml")) {
        return Flavor::Markup;
    }
    if (mt.rfind("text/", 0) == 0 || mt == "application/json") {
        return Flavor::Plain;
    }
    return Flavor::Binary;
}

bool iequals_prefix(std::string_view s, size_t pos, std::string_view word) {
    if (pos + word.size() > s.size()) {
        return false;
    }
    for (size_t i = 0; i < word.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[pos + i])) != word[i]) {
            return false;
        }
    }
    return true;
}

void append_utf8(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x110000) {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
}

const std::unordered_map<std::string_view, uint32_t>& named_entities() {
    static const std::unordered_map<std::string_view, uint32_t> table = {
        {"amp", '&'},     {"lt", '<'},        {"gt", '>'},       {"quot", '"'},
        {"apos", '\''},   {"nbsp", ' '},      {"copy", 0xa9},    {"reg", 0xae},
        {"trade", 0x2122}, {"mdash", 0x2014}, {"ndash", 0x2013}, {"hellip", 0x2026},
        {"lsquo", 0x2018}, {"rsquo", 0x2019}, {"ldquo", 0x201c}, {"rdquo", 0x201d},
        {"laquo", 0xab},  {"raquo", 0xbb},    {"middot", 0xb7},  {"bull", 0x2022},
        {"eacute", 0xe9}, {"egrave", 0xe8},   {"aacute", 0xe1},  {"agrave", 0xe0},
        {"iacute", 0xed}, {"oacute", 0xf3},   {"uacute", 0xfa},  {"uuml", 0xfc},
        {"ouml", 0xf6},   {"auml", 0xe4},     {"ccedil", 0xe7},  {"ntilde", 0xf1},
        {"szlig", 0xdf},  {"deg", 0xb0},      {"times", 0xd7},   {"euro", 0x20ac},
    };
    return table;
}

// Decodes one entity at s[pos] == '&'; returns consumed length or 0.
size_t decode_entity(std::string_view s, size_t pos, std::string& out) {
    const auto semi = s.find(';', pos + 1);
    if (semi == std::string_view::npos || semi - pos > 12) {
        return 0;
    }
    const auto body = s.substr(pos + 1, semi - pos - 1);
    if (body.size() >= 2 && body[0] == '#') {
        uint32_t cp = 0;
        const bool hex = body[1] == 'x' || body[1] == 'X';
        const auto digits = body.substr(hex ? 2 : 1);
        if (digits.empty()) {
            return 0;
        }
        for (char c : digits) {
            const auto u = static_cast<unsigned char>(c);
            uint32_t v;
            if (std::isdigit(u)) {
                v = static_cast<uint32_t>(c - '0');
            } else if (hex && std::isxdigit(u)) {
                v = static_cast<uint32_t>(std::tolower(u) - 'a' + 10);
            } else {
                return 0;
            }
            cp = cp * (hex ? 16 : 10) + v;
            if (cp > 0x10ffff) {
                return 0;
            }
        }
        append_utf8(out, cp == 0xa0 ? ' ' : cp);
        return semi - pos + 1;
    }
    const auto& table = named_entities();
    const auto it = table.find(body);
    if (it == table.end()) {
        return 0;
    }
    append_utf8(out, it->second);
    return semi - pos + 1;
}

std::string strip_markup(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '<') {
            if (s.compare(i, 4, "<!--") == 0) {
                const auto end = s.find("-->", i + 4);
                i = end == std::string_view::npos ? s.size() : end + 3;
                out += ' ';
                continue;
            }
            std::string_view raw_element;
            for (std::string_view name : {"script", "style"}) {
                if (iequals_prefix(s, i + 1, name)) {
                    const size_t after = i + 1 + name.size();
                    if (after >= s.size() || !std::isalnum(static_cast<unsigned char>(s[after]))) {
                        raw_element = name;
                    }
                }
            }
            if (!raw_element.empty()) {
                size_t j = i + 1;
                while (true) {
                    j = s.find("</", j);
                    if (j == std::string_view::npos || iequals_prefix(s, j + 2, raw_element)) {
                        break;
                    }
                    j += 2;
                }
                if (j == std::string_view::npos) {
                    break;
                }
                i = j;
            }
            // skip the tag, honoring quoted attribute values
            char quote = 0;
            size_t j = i + 1;
            for (; j < s.size(); ++j) {
                if (quote) {
                    if (s[j] == quote) {
                        quote = 0;
                    }
                } else if (s[j] == '"' || s[j] == '\'') {
                    quote = s[j];
                } else if (s[j] == '>') {
                    break;
                }
            }
            i = j + 1;
            out += ' ';
            continue;
        }
        if (c == '&') {
            if (const size_t used = decode_entity(s, i, out)) {
                i += used;
                continue;
            }
        }
        out += c;
        ++i;
    }
    return out;
}

// Returns the code point length at s[i] or 0 for an invalid sequence.
size_t utf8_length(std::string_view s, size_t i, uint32_t& cp) {
    const auto c = static_cast<unsigned char>(s[i]);
    size_t len;
    if (c < 0x80) {
        cp = c;
        return 1;
    } else if ((c >> 5) == 0x6) {
        len = 2;
        cp = c & 0x1f;
    } else if ((c >> 4) == 0xe) {
        len = 3;
        cp = c & 0x0f;
    } else if ((c >> 3) == 0x1e) {
        len = 4;
        cp = c & 0x07;
    } else {
        return 0;
    }
    if (i + len > s.size()) {
        return 0;
    }
    for (size_t k = 1; k < len; ++k) {
        const auto cc = static_cast<unsigned char>(s[i + k]);
        if ((cc >> 6) != 0x2) {
            return 0;
        }
        cp = (cp << 6) | (cc & 0x3f);
    }
    static constexpr uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
        return 0;
    }
    return len;
}

bool is_word_codepoint(uint32_t cp) {
    if (cp < 0x80) {
        return std::isalnum(static_cast<int>(cp)) != 0;
    }
    // Latin-1 punctuation, general punctuation, CJK punctuation, specials.
    if ((cp >= 0x80 && cp <= 0xbf) || cp == 0xd7 || cp == 0xf7 || (cp >= 0x2000 && cp <= 0x206f) ||
        (cp >= 0x2190 && cp <= 0x2bff) || (cp >= 0x3000 && cp <= 0x303f) || cp == 0xfeff ||
        (cp >= 0xfff0 && cp <= 0xffff)) {
        return false;
    }
    return true;
}

uint32_t to_lower(uint32_t cp) {
    if (cp < 0x80) {
        return static_cast<uint32_t>(std::tolower(static_cast<int>(cp)));
    }
    if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) {
        return cp + 0x20;
    }
    return cp;
}

std::string normalize(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_token = false;
    size_t i = 0;
    while (i < s.size()) {
        uint32_t cp = 0;
        const size_t len = utf8_length(s, i, cp);
        if (len == 0) {
            in_token = false;
            ++i;
            continue;
        }
        if (is_word_codepoint(cp)) {
            if (!in_token && !out.empty()) {
                out += ' ';
            }
            append_utf8(out, to_lower(cp));
            in_token = true;
        } else {
            in_token = false;
        }
        i += len;
    }
    return out;
}

std::string prefix_codepoints(std::string_view s, size_t count) {
    size_t i = 0;
    size_t n = 0;
    while (i < s.size() && n < count) {
        uint32_t cp = 0;
        const size_t len = utf8_length(s, i, cp);
        i += len == 0 ? 1 : len;
        ++n;
    }
    return std::string(s.substr(0, i));
}

double jaccard(const std::unordered_set<std::string_view>& a,
               const std::unordered_set<std::string_view>& b) {
    if (a.empty() && b.empty()) {
        return 1.0;
    }
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    size_t common = 0;
    for (const auto& x : small) {
        common += large.count(x);
    }
    return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::unordered_set<std::string_view> shingle_set(std::string_view text, size_t k) {
    // Shingles are contiguous substrings of normalized text.
    std::vector<size_t> starts, ends;
    size_t i = 0;
    while (i < text.size()) {
        const auto sp = text.find(' ', i);
        const size_t end = sp == std::string_view::npos ? text.size() : sp;
        starts.push_back(i);
        ends.push_back(end);
        i = end + 1;
    }
    std::unordered_set<std::string_view> out;
    for (size_t t = 0; t + k <= starts.size(); ++t) {
        out.insert(text.substr(starts[t], ends[t + k - 1] - starts[t]));
    }
    return out;
}

} // namespace

std::string extract_text(std::string_view content, std::string_view media_type) {
    switch (flavor_of(media_type)) {
    case Flavor::Markup: return normalize(strip_markup(content));
    case Flavor::Plain: return normalize(content);
    case Flavor::Binary: break;
    }
    return {};
}

std::vector<std::string_view> tokens(std::string_view normalized) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < normalized.size()) {
        const auto sp = normalized.find(' ', i);
        const size_t end = sp == std::string_view::npos ? normalized.size() : sp;
        if (end > i) {
            out.push_back(normalized.substr(i, end - i));
        }
        i = end + 1;
    }
    return out;
}

std::string snapshot_of(std::string_view normalized) {
    return prefix_codepoints(normalized, kSnapshotChars);
}

const std::vector<std::string>& stopwords() { return detail::kStopwords; }

bool is_stopword(std::string_view term) {
    static const std::unordered_set<std::string_view> set = [] {
        std::unordered_set<std::string_view> s;
        for (const auto& w : detail::kStopwords) {
            s.insert(w);
        }
        return s;
    }();
    return set.count(term) != 0;
}

size_t DfTable::frequency(std::string_view term) const {
    const auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

void DfTable::add_document(std::string_view normalized) {
    ++documents_;
    std::unordered_set<std::string_view> seen;
    for (auto t : tokens(normalized)) {
        if (seen.insert(t).second) {
            auto it = df_.find(t);
            if (it == df_.end()) {
                df_.emplace(std::string(t), 1);
            } else {
                ++it->second;
            }
        }
    }
}

DfTable DfTable::from_parts(size_t documents, std::map<std::string, size_t, std::less<>> df) {
    for (const auto& [term, f] : df) {
        if (f == 0 || f > documents) {
            throw Error(Errc::InvalidArgument, "document frequency of '" + term + "' out of range");
        }
    }
    DfTable t;
    t.documents_ = documents;
    t.df_ = std::move(df);
    return t;
}

std::vector<std::string> lexical_signature(std::string_view normalized, const DfTable& df) {
    if (df.document_count() == 0) {
        throw Error(Errc::InvalidArgument, "document frequency table is empty");
    }
    const auto toks = tokens(normalized);
    if (toks.empty()) {
        throw Error(Errc::EmptyText, "no terms to build a lexical signature from");
    }
    std::unordered_map<std::string_view, size_t> tf;
    for (auto t : toks) {
        if (!is_stopword(t)) {
            ++tf[t];
        }
    }
    const double n_plus_1 = static_cast<double>(df.document_count()) + 1.0;
    std::vector<std::pair<double, std::string_view>> scored;
    scored.reserve(tf.size());
    for (const auto& [term, count] : tf) {
        const double idf = std::log(n_plus_1 / (static_cast<double>(df.frequency(term)) + 1.0));
        scored.emplace_back(static_cast<double>(count) * idf, term);
    }
    const size_t keep = std::min(kSignatureTerms, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), [](const auto& a, const auto& b) {
                          return a.first != b.first ? a.first > b.first : a.second < b.second;
                      });
    std::vector<std::string> out;
    for (size_t i = 0; i < keep; ++i) {
        out.emplace_back(scored[i].second);
    }
    return out;
}

std::string content_digest(std::string_view normalized) { return sha256_hex(normalized); }

std::string resource_digest(std::string_view raw_content, std::string_view normalized) {
    return normalized.empty() ? sha256_hex(raw_content) : sha256_hex(normalized);
}

double similarity(std::string_view a, std::string_view b, size_t shingle_size) {
    const auto ta = tokens(a);
    const auto tb = tokens(b);
    if (ta.empty() && tb.empty()) {
        return 1.0;
    }
    if (ta.empty() || tb.empty()) {
        return 0.0;
    }
    if (shingle_size == 0 || ta.size() < shingle_size || tb.size() < shingle_size) {
        return jaccard({ta.begin(), ta.end()}, {tb.begin(), tb.end()});
    }
    return jaccard(shingle_set(a, shingle_size), shingle_set(b, shingle_size));
}

std::string_view change_kind_name(ChangeKind kind) noexcept {
    switch (kind) {
    case ChangeKind::Unchanged: return "Unchanged";
    case ChangeKind::Minor: return "Minor";
    case ChangeKind::Significant: return "Significant";
    }
    return "";
}

ChangeClass classify_change(const Fingerprint& old, std::string_view new_text,
                            std::string_view new_digest, const Thresholds& thresholds) {
    if (old.content_digest == new_digest) {
        return {ChangeKind::Unchanged, 1.0};
    }
    const double s =
        similarity(old.text_snapshot, snapshot_of(new_text), thresholds.shingle_size);
    return {s >= thresholds.minor ? ChangeKind::Minor : ChangeKind::Significant, s};
}

ChangeClass classify_change(const Fingerprint& old, std::string_view new_text,
                            const Thresholds& thresholds) {
    return classify_change(old, new_text, content_digest(new_text), thresholds);
}

bool is_wrong_content(const Fingerprint& old, std::string_view new_text,
                      const Thresholds& thresholds) {
    const double s =
        similarity(old.text_snapshot, snapshot_of(new_text), thresholds.shingle_size);
    if (s >= thresholds.wrong_content) {
        return false;
    }
    const auto toks = tokens(new_text);
    const std::unordered_set<std::string_view> present(toks.begin(), toks.end());
    return std::none_of(old.lexical_signature.begin(), old.lexical_signature.end(),
                        [&](const std::string& term) { return present.count(term) != 0; });
}

Thumbnail TextPreviewRenderer::render(std::string_view, std::string_view text_snapshot) const {
    return {"text/plain", prefix_codepoints(text_snapshot, kPreviewChars)};
}

} // namespace remember::fp
