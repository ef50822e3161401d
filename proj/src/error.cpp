#include "iotarch/error.hpp"

namespace iotarch {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::SchedulingInPast: return "SchedulingInPast";
    case Errc::MalformedPattern: return "MalformedPattern";
    case Errc::MalformedTopic: return "MalformedTopic";
    case Errc::UnknownSchema: return "UnknownSchema";
    case Errc::UnknownSubscription: return "UnknownSubscription";
    case Errc::PayloadTooLarge: return "PayloadTooLarge";
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedVersion: return "UnsupportedVersion";
    case Errc::CrcMismatch: return "CrcMismatch";
    case Errc::Truncated: return "Truncated";
    case Errc::UnknownPayloadKind: return "UnknownPayloadKind";
    case Errc::UnknownFrameType: return "UnknownFrameType";
    case Errc::UnknownResource: return "UnknownResource";
    case Errc::PayloadKindMismatch: return "PayloadKindMismatch";
    case Errc::UnattachedDevice: return "UnattachedDevice";
    case Errc::ValueKindMismatch: return "ValueKindMismatch";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownAggregate: return "UnknownAggregate";
    case Errc::UnresolvedReference: return "UnresolvedReference";
    case Errc::MissingData: return "MissingData";
    case Errc::EmptyWindow: return "EmptyWindow";
    case Errc::BadAlpha: return "BadAlpha";
    case Errc::DispatchFailure: return "DispatchFailure";
    case Errc::AckTimeout: return "AckTimeout";
    case Errc::DuplicateEmail: return "DuplicateEmail";
    case Errc::InvalidEmail: return "InvalidEmail";
    case Errc::UnknownUser: return "UnknownUser";
    case Errc::UnknownDevice: return "UnknownDevice";
    case Errc::UnknownRule: return "UnknownRule";
    case Errc::UnknownLoop: return "UnknownLoop";
    case Errc::UnknownNotification: return "UnknownNotification";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationErrors: return "ValidationErrors";
    case Errc::CorruptLog: return "CorruptLog";
    case Errc::BadRequest: return "BadRequest";
    case Errc::NotFound: return "NotFound";
    case Errc::RunEnded: return "RunEnded";
  }
  return "Unknown";
}

}  // namespace iotarch
