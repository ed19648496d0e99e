#pragma once

#include <stdexcept>
#include <string>

namespace patchdrop {

/// Base class for every error the library raises.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error {
  using Error::Error;
};
struct IndexOutOfRange : Error {
  using Error::Error;
};
struct DuplicateIndex : Error {
  using Error::Error;
};
struct IndivisibleImage : Error {
  using Error::Error;
};
struct InvalidRate : Error {
  using Error::Error;
};
struct IntervalInactive : Error {
  using Error::Error;
};
struct DoubleDropout : Error {
  using Error::Error;
};
struct BadMagic : Error {
  using Error::Error;
};
struct TruncatedFile : Error {
  using Error::Error;
};
struct LabelOutOfRange : Error {
  using Error::Error;
};
struct InvalidSplit : Error {
  using Error::Error;
};
struct DivergedLoss : Error {
  using Error::Error;
};
struct SchemaMismatch : Error {
  using Error::Error;
};

/// Raised by the CLI layer for bad flags or config keys (exit code 2).
struct UsageError : Error {
  using Error::Error;
};

}  // namespace patchdrop
