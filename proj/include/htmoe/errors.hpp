// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace htmoe {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File-level failures: unreadable files, malformed headers, bad offsets,
// unsupported dtypes, unresolvable tensor names. CLI maps these to exit 2.
struct IngestError : Error {
    using Error::Error;
};

// A spectrum on which a tail fit is not defined (too few positive
// eigenvalues, all eigenvalues equal, ...). Layer aggregation skips
// matrices that raise this.
struct SpectrumError : Error {
    using Error::Error;
};

struct DegenerateSpectrumError : SpectrumError {
    using SpectrumError::SpectrumError;
};

// Hill denominator is zero: the top-k eigenvalues all equal the reference.
struct FlatTailError : SpectrumError {
    using SpectrumError::SpectrumError;
};

// A postcondition the library guarantees failed to hold at runtime.
// CLI maps these to exit 3.
struct InvariantError : Error {
    using Error::Error;
};

}  // namespace htmoe
