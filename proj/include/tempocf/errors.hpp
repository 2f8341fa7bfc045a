#pragma once

#include <stdexcept>

namespace tempocf {

// Base class for every recoverable error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input unreadable or output not writable.
struct IoError : Error { using Error::Error; };

// A log (or a filtered view of one) ended up with zero events.
struct EmptyLogError : Error { using Error::Error; };

// Temporal split where one side would have no events.
struct DegenerateSplitError : Error { using Error::Error; };

struct UnknownUserError : Error { using Error::Error; };

// Event timestamp after the reference t_max.
struct InvalidTimestampError : Error { using Error::Error; };

struct InvalidRangeError : Error { using Error::Error; };

struct EmptyCandidatesError : Error { using Error::Error; };

struct EmptyEvaluationError : Error { using Error::Error; };

// Training produced a non-finite loss or an unsolvable system.
struct DivergedTrainingError : Error { using Error::Error; };

// Data cannot support the requested operation (e.g. no valid ranking triples).
struct DegenerateDataError : Error { using Error::Error; };

// Bad command-line or config-file input.
struct ConfigError : Error { using Error::Error; };

}  // namespace tempocf
