// include/svid/error.h

#ifndef SVID_ERROR_H_
#define SVID_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace svid {

enum class ErrorCode {
  kNotWav,
  kUnsupportedEncoding,
  kTruncated,
  kInvalidParam,
  kInsufficientUtterances,
  kEmptySignal,
  kSignalTooShort,
  kLengthMismatch,
  kLagTooLarge,
  kNonPositiveEnergy,
  kConfigError,
  kTooFewFrames,
  kTooFewPoints,
  kDegenerateData,
  kDimMismatch,
  kShapeMismatch,
  kSingleClass,
  kEmptyGrid,
  kEmpty,
  kEmptyRows,
  kIoError,
  kFormatError,
  kNoSpeech,
};

std::string_view ErrorCodeName(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code),
        detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace svid

#endif  // SVID_ERROR_H_
