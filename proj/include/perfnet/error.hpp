#pragma once

#include <stdexcept>
#include <string>

namespace perfnet {

/// Base of every error raised by the library. `name()` is the stable error
/// identifier surfaced by the CLI and the HTTP API (e.g. "MalformedHeader").
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& detail)
      : std::runtime_error(name + ": " + detail), name_(std::move(name)), detail_(detail) {}

  const std::string& name() const noexcept { return name_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string name_;
  std::string detail_;
};

#define PERFNET_ERRORS(X)                                                    \
  /* midi / pianoroll */                                                     \
  X(MalformedHeader) X(MalformedTrack) X(UnsupportedFormat) X(InvalidRange)  \
  X(InvalidPianoroll)                                                        \
  /* dsp */                                                                  \
  X(InvalidGeometry) X(UnsupportedCodec) X(MalformedRiff)                    \
  /* networks */                                                             \
  X(InvalidConfig) X(ShapeMismatch) X(MissingCondition) X(InvalidBandCount)  \
  /* training */                                                             \
  X(AlignmentError) X(EmptyDataset) X(NonFiniteLoss) X(VersionMismatch)      \
  X(CorruptFile) X(IoError) X(InvalidManifest)                               \
  /* synthesis */                                                            \
  X(UnknownInstrument)

#define PERFNET_DEFINE_ERROR(Type)                                       \
  class Type : public Error {                                            \
   public:                                                               \
    explicit Type(const std::string& detail) : Error(#Type, detail) {}   \
  };
PERFNET_ERRORS(PERFNET_DEFINE_ERROR)
#undef PERFNET_DEFINE_ERROR

/// Rethrows `e` as the same error type with `context` prepended.
[[noreturn]] inline void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string detail = context + ": " + e.detail();
#define PERFNET_RETHROW(Type) \
  if (e.name() == #Type) throw Type(detail);
  PERFNET_ERRORS(PERFNET_RETHROW)
#undef PERFNET_RETHROW
  throw Error(e.name(), detail);
}

}  // namespace perfnet
