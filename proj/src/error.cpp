#include "remember/error.hpp"

namespace remember {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
    case Errc::MalformedXml: return "MalformedXml";
    case Errc::MissingSelfLink: return "MissingSelfLink";
    case Errc::MissingFeedId: return "MissingFeedId";
    case Errc::EntryWithoutAlternateLink: return "EntryWithoutAlternateLink";
    case Errc::InvalidRem: return "InvalidRem";
    case Errc::InvariantViolation: return "InvariantViolation";
    case Errc::EmptyText: return "EmptyText";
    case Errc::CapabilityMissing: return "CapabilityMissing";
    case Errc::MemberUnavailable: return "MemberUnavailable";
    case Errc::UnknownMember: return "UnknownMember";
    case Errc::StorageFailure: return "StorageFailure";
    case Errc::ValidationFailure: return "ValidationFailure";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::UnknownRevision: return "UnknownRevision";
    case Errc::TargetIsHead: return "TargetIsHead";
    case Errc::AlreadyRegistered: return "AlreadyRegistered";
    case Errc::ParseFailure: return "ParseFailure";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::UnknownEntry: return "UnknownEntry";
    case Errc::NotInAttention: return "NotInAttention";
    case Errc::RelocateTargetUnfetchable: return "RelocateTargetUnfetchable";
    case Errc::DecisionNotApplicable: return "DecisionNotApplicable";
    case Errc::PendingStatuses: return "PendingStatuses";
    case Errc::UnresolvedAttention: return "UnresolvedAttention";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::StaleSession: return "StaleSession";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

} // namespace remember
