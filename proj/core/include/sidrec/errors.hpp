#pragma once

#include <stdexcept>
#include <string>

namespace sidrec {

// Base class for every error raised by the library. Each concrete type
// corresponds to one failure mode of a public operation, so callers can
// catch precisely.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CapacityExceeded : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct NotANegative : Error { using Error::Error; };
struct UnknownPrefix : Error { using Error::Error; };
struct EmptyCatalog : Error { using Error::Error; };

struct EmptyContext : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };

struct PrefixTooLong : Error { using Error::Error; };
struct InvalidPath : Error { using Error::Error; };
struct InvalidRank : Error { using Error::Error; };
struct StaleSnapshot : Error { using Error::Error; };

struct IoError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

}  // namespace sidrec
