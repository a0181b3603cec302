// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "htmoe/tensor.hpp"

namespace htmoe {

// Empirical spectral density of one weight matrix: the eigenvalues of the
// Gram matrix taken on the smaller dimension, i.e. the squared singular
// values of W, sorted ascending.
struct ESD {
    std::vector<double> eigenvalues;  // ascending, length gram_dim, all >= 0
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::int64_t gram_dim = 0;        // min(rows, cols)
    double frob_sq = 0.0;             // squared Frobenius norm of the source

    double lambda_max() const { return eigenvalues.empty() ? 0.0 : eigenvalues.back(); }

    // Builds an ESD directly from an eigenvalue list (tests, synthetic
    // spectra). Values are clamped at 0 and sorted; frob_sq is their sum.
    static ESD from_eigenvalues(std::vector<double> eigenvalues);
};

// Computes the ESD of a 2-D tensor via SVD of the matrix itself rather
// than an eigendecomposition of the explicitly formed Gram matrix; the
// matrix is oriented tall before the decomposition so W and W^T produce
// identical spectra. Verifies the trace identity sum(lambda) = |W|_F^2.
ESD compute_esd(const TensorRecord& w);

}  // namespace htmoe
