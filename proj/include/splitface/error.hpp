#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace splitface {

/// Base class for every error raised by the library. `kind()` is a stable
/// identifier suitable for one-line CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), detail_(what) {}

  const std::string& kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string kind_;
  std::string detail_;
};

#define SPLITFACE_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(#Name, what) {}     \
  }

SPLITFACE_DEFINE_ERROR(EmptyIntersection);
SPLITFACE_DEFINE_ERROR(ShapeMismatch);
SPLITFACE_DEFINE_ERROR(DegenerateBatch);
SPLITFACE_DEFINE_ERROR(ToleranceExceeded);
SPLITFACE_DEFINE_ERROR(CorruptCheckpoint);
SPLITFACE_DEFINE_ERROR(NumericalDivergence);
SPLITFACE_DEFINE_ERROR(EmptyInput);
SPLITFACE_DEFINE_ERROR(EmptyValidationSet);
SPLITFACE_DEFINE_ERROR(MalformedHeader);
SPLITFACE_DEFINE_ERROR(RowArityMismatch);
SPLITFACE_DEFINE_ERROR(MalformedRow);
SPLITFACE_DEFINE_ERROR(DegenerateAttribute);
SPLITFACE_DEFINE_ERROR(MissingImage);
SPLITFACE_DEFINE_ERROR(MissingFullFace);
SPLITFACE_DEFINE_ERROR(AttributeNotPredicted);
SPLITFACE_DEFINE_ERROR(UnsupportedPredictor);
SPLITFACE_DEFINE_ERROR(IoFailure);
SPLITFACE_DEFINE_ERROR(ConfigError);
SPLITFACE_DEFINE_ERROR(MissingInput);

#undef SPLITFACE_DEFINE_ERROR

/// Raised when a fiducial required by a segment formula is below the
/// visibility threshold. `indices()` holds the 1-based fiducial numbers.
class InsufficientVisibility : public Error {
 public:
  InsufficientVisibility(const std::string& segment, std::vector<int> indices);

  const std::vector<int>& indices() const noexcept { return indices_; }

 private:
  std::vector<int> indices_;
};

}  // namespace splitface
