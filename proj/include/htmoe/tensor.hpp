// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace htmoe {

// A named weight matrix (or other tensor) loaded from a checkpoint.
// Values are widened to 64-bit at load time so that everything downstream
// (SVD, tail fits) is computed at the same precision regardless of the
// stored dtype.
struct TensorRecord {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> values;  // row-major

    // Only 2-D tensors with both dimensions >= 1 enter spectral analysis;
    // everything else (biases, norms, scalars) is retained but skipped.
    bool analyzable() const {
        return shape.size() == 2 && shape[0] >= 1 && shape[1] >= 1;
    }

    std::int64_t rows() const { return shape.size() == 2 ? shape[0] : 0; }
    std::int64_t cols() const { return shape.size() == 2 ? shape[1] : 0; }

    std::int64_t num_elements() const {
        std::int64_t n = 1;
        for (std::int64_t d : shape) n *= d;
        return n;
    }
};

double frobenius_norm(const TensorRecord& t);

}  // namespace htmoe
