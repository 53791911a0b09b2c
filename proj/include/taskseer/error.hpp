// Copyright (c) 2026 taskseer contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace taskseer {

/// Base class for all data and contract errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed input bytes. The message carries the byte offset or line.
struct ParseError : Error {
    using Error::Error;
};

/// A stated precondition was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

} // namespace taskseer
