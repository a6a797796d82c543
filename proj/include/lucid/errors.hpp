#pragma once

#include <stdexcept>

namespace lucid {

// Base class for everything thrown by the library. The CLI maps the
// subclasses below onto distinct process exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension or shape disagreement between tensors / fields.
struct ShapeError : Error {
  using Error::Error;
};

// A precondition of an operation was violated.
struct ContractError : Error {
  using Error::Error;
};

// Out-of-range layer / channel / class / element index.
struct IndexError : Error {
  using Error::Error;
};

// Malformed bytes or text: bad magic, truncated payload, unparseable fields.
struct ParseError : Error {
  using Error::Error;
};

// A required input file is absent.
struct MissingInputError : Error {
  using Error::Error;
};

// Filesystem read/write failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace lucid
