// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "htmoe/tensor.hpp"

namespace htmoe {

// safetensors checkpoint reader.
//
// File layout: 8-byte little-endian u64 header length N, then N bytes of
// UTF-8 JSON mapping tensor names to {dtype, shape, data_offsets}, then the
// raw little-endian tensor data. data_offsets are relative to the end of
// the header. The optional "__metadata__" entry is skipped.
//
// Supported dtypes: F16, BF16, F32 (widened to f64) and F64. Anything else
// is reported as an unsupported dtype with the tensor name.

// Reads a single file. Records are returned in header (name) order.
std::vector<TensorRecord> read_safetensors(const std::filesystem::path& path);

// Reads every *.safetensors file in a directory, lexicographic order, and
// merges the namespaces. Duplicate tensor names across shards are an error.
// An existing directory with no shards yields an empty list.
std::vector<TensorRecord> read_safetensors_dir(const std::filesystem::path& dir);

// Reads a file or a directory of shards, by inspecting the path.
std::vector<TensorRecord> read_checkpoint(const std::filesystem::path& path);

// Minimal writer used by fixtures and tests. dtype is "F32" or "F64".
void write_safetensors(const std::filesystem::path& path,
                       const std::vector<TensorRecord>& records,
                       const std::string& dtype = "F32");

}  // namespace htmoe
