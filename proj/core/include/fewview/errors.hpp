#pragma once

#include <stdexcept>
#include <string>

namespace fewview {

// Base class for all library errors so callers can catch one type at the
// CLI boundary and map it to an exit code.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define FEWVIEW_DEFINE_ERROR(NAME)                             \
  struct NAME : Error {                                        \
    explicit NAME(const std::string& msg) : Error(msg) {}      \
  }

FEWVIEW_DEFINE_ERROR(DegenerateFrame);
FEWVIEW_DEFINE_ERROR(OutOfBounds);
FEWVIEW_DEFINE_ERROR(InvalidBounds);
FEWVIEW_DEFINE_ERROR(ShapeMismatch);
FEWVIEW_DEFINE_ERROR(NonFiniteInput);
FEWVIEW_DEFINE_ERROR(MaskLengthMismatch);
FEWVIEW_DEFINE_ERROR(TooFewSamples);
FEWVIEW_DEFINE_ERROR(CacheMismatch);
FEWVIEW_DEFINE_ERROR(ShrinkNotSupported);
FEWVIEW_DEFINE_ERROR(MissingFile);
FEWVIEW_DEFINE_ERROR(SchemaError);
FEWVIEW_DEFINE_ERROR(ImageDecodeError);
FEWVIEW_DEFINE_ERROR(IoError);
FEWVIEW_DEFINE_ERROR(NotEnoughFrames);
FEWVIEW_DEFINE_ERROR(CheckpointCorrupt);
FEWVIEW_DEFINE_ERROR(ImageTooSmall);

#undef FEWVIEW_DEFINE_ERROR

}  // namespace fewview
