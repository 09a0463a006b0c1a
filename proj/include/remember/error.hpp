#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace remember {

enum class Errc {
    // ore-model
    MalformedXml,
    MissingSelfLink,
    MissingFeedId,
    EntryWithoutAlternateLink,
    InvalidRem,
    InvariantViolation,
    // fingerprint
    EmptyText,
    // wi-client
    CapabilityMissing,
    MemberUnavailable,
    UnknownMember,
    // revision store
    StorageFailure,
    ValidationFailure,
    UnknownKey,
    UnknownRevision,
    TargetIsHead,
    // curator
    AlreadyRegistered,
    ParseFailure,
    UnknownSession,
    UnknownEntry,
    NotInAttention,
    RelocateTargetUnfetchable,
    DecisionNotApplicable,
    PendingStatuses,
    UnresolvedAttention,
    SessionClosed,
    StaleSession,
    // plumbing
    InvalidArgument,
    ConfigError,
};

std::string_view errc_name(Errc code) noexcept;

/// Domain error carried by every failing operation in the library.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace remember
