#pragma once

#include <stdexcept>
#include <string>

namespace svlr {

// Base for every error this library raises on purpose.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up.
struct DimError : Error {
    using Error::Error;
};

// A stated precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

// Unknown word, category, or other failed lookup.
struct LookupError : Error {
    using Error::Error;
};

// NaN or Inf escaped a numeric primitive.
struct NumericError : Error {
    using Error::Error;
};

// Malformed input file; message carries the offending line number.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace svlr
