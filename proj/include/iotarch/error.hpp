#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iotarch {

enum class Errc {
  SchedulingInPast,
  MalformedPattern,
  MalformedTopic,
  UnknownSchema,
  UnknownSubscription,
  PayloadTooLarge,
  BadMagic,
  UnsupportedVersion,
  CrcMismatch,
  Truncated,
  UnknownPayloadKind,
  UnknownFrameType,
  UnknownResource,
  PayloadKindMismatch,
  UnattachedDevice,
  ValueKindMismatch,
  SyntaxError,
  UnknownAggregate,
  UnresolvedReference,
  MissingData,
  EmptyWindow,
  BadAlpha,
  DispatchFailure,
  AckTimeout,
  DuplicateEmail,
  InvalidEmail,
  UnknownUser,
  UnknownDevice,
  UnknownRule,
  UnknownLoop,
  UnknownNotification,
  IoError,
  ParseError,
  ValidationErrors,
  CorruptLog,
  BadRequest,
  NotFound,
  RunEnded,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure surfaced by the library carries one of the codes above; the
/// HTTP layer maps the code name straight into the error body.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace iotarch
