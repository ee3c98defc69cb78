#pragma once

#include <stdexcept>
#include <string>

namespace memnet {

/// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-contract input: bad JSON, dangling references,
/// parameters violating their invariants, values outside a domain.
struct InvalidInput : Error {
    using Error::Error;
};

/// Failure while computing: singular solves, non-finite state.
struct NumericalFailure : Error {
    using Error::Error;
};

}  // namespace memnet
