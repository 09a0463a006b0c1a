#pragma once

// Adapters for real WI services reached over HTTP. Only exercised against a
// local stub server in tests.

#include "remember/wi.hpp"

#include <chrono>
#include <string>

namespace remember::wi {

/// URL templates. Placeholders: {uri} (percent-encoded original URI),
/// {timestamp} (14-digit capture time), {query} (percent-encoded query).
/// An empty template means the capability is not offered.
struct HttpTemplates {
    std::string push;     // POST; capture URL in Content-Location or Location
    std::string holdings; // GET; CDX lines "urlkey timestamp original mimetype ..."
    std::string replay;   // archived_uri of a capture
    std::string lookup;   // GET; 200 body is the cached copy
    std::string search;   // GET; one result URI per line
};

/// {uri} and {query} are percent-encoded, {raw_uri} is inserted as is.
std::string expand_template(std::string_view tmpl, std::string_view uri, std::string_view timestamp,
                            std::string_view query);

class HttpMember final : public Member {
public:
    HttpMember(MemberDescriptor descriptor, HttpTemplates templates,
               std::chrono::milliseconds timeout = std::chrono::seconds{10});

    const HttpTemplates& templates() const noexcept { return templates_; }

    WIRecord push(const std::string& original_uri, const std::string& content,
                  const std::string& media_type, Timestamp at) override;
    std::optional<WIRecord> lookup(const std::string& uri) override;
    std::vector<WIRecord> visible_records(const std::string& uri, Timestamp now) override;
    std::vector<std::string> search(const std::string& query) override;

private:
    HttpTemplates templates_;
    std::chrono::milliseconds timeout_;
};

} // namespace remember::wi
