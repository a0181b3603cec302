// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "htmoe/tensor.hpp"

namespace htmoe {

// NumPy .npy v1.0 reader/writer.
//
// Layout: magic "\x93NUMPY", one byte major + one byte minor version,
// 2-byte little-endian header length, then a Python dict literal
// {'descr': ..., 'fortran_order': ..., 'shape': (...)} padded with spaces
// and terminated by '\n', followed by the raw element bytes.
//
// Reading supports '<f4' and '<f8' (widened to f64). fortran_order inputs
// are transposed to row-major. Writing always emits '<f8', C order.

TensorRecord read_npy(const std::filesystem::path& path);

void write_npy(const std::filesystem::path& path, const TensorRecord& record);

}  // namespace htmoe
