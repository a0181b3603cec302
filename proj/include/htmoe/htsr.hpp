// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "htmoe/esd.hpp"

namespace htmoe {

// Power-law tail fit of an ESD.
struct TailFit {
    double lambda_min = 0.0;  // lower tail threshold, > 0
    int k = 0;                // eigenvalues strictly above lambda_min
    double alpha = 0.0;       // fitted tail exponent
};

struct MatrixMetrics {
    std::string tensor_name;
    std::string role;  // filled by callers that know the model map
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    double pl_alpha_hill = 0.0;
    double alpha_hat = 0.0;
    double stable_rank = 0.0;
    double log_spectral_norm = 0.0;  // ln(lambda_max)
    TailFit tail;
};

enum class Aggregation { mean, median };

struct LayerMetrics {
    int layer_index = 0;
    std::vector<MatrixMetrics> per_matrix;
    double layer_alpha_hill = 0.0;
    double layer_alpha_hat = 0.0;
    double layer_stable_rank = 0.0;
    std::vector<std::string> skipped;  // degenerate matrices, with reasons
};

inline constexpr int kDefaultFixFingerBins = 100;

// Places the tail threshold at the peak of the log-scale ESD: histogram of
// ln(lambda) over the strictly positive eigenvalues with `bins` equal-width
// bins, threshold = the eigenvalue nearest the center of the maximal-count
// bin (bin ties broken toward the lower bin). Returns (lambda_min, k) with
// k = #{lambda > lambda_min} clamped into [1, n-1]; clamping moves
// lambda_min to the adjacent order statistic. Eigenvalues below
// 1e-12 * lambda_max are excluded from the histogram.
std::pair<double, int> fix_finger_lambda_min(const ESD& esd, int bins = kDefaultFixFingerBins);

// Hill estimator over the top k order statistics (lambda sorted ascending):
// 1 + k / sum_{i=1..k} ln(lambda_{n-i+1} / lambda_{n-k}).
double hill_alpha(const ESD& esd, int k);

// Fix-finger threshold selection followed by the Hill estimator.
TailFit pl_alpha_hill(const ESD& esd, int bins = kDefaultFixFingerBins);

// |W|_F^2 / |W|_2^2 = sum(lambda) / lambda_max.
double stable_rank(const ESD& esd);

// Tail exponent scaled by the log of the largest eigenvalue.
double alpha_hat(const TailFit& tail, const ESD& esd);

MatrixMetrics matrix_metrics(const std::string& tensor_name, const ESD& esd,
                             int bins = kDefaultFixFingerBins);

// Per-matrix metrics plus layer aggregates. Matrices with degenerate
// spectra are skipped (recorded in `skipped`); at least one must survive.
LayerMetrics layer_metrics(const std::vector<std::pair<std::string, ESD>>& esds,
                           int layer_index,
                           int bins = kDefaultFixFingerBins,
                           Aggregation aggregation = Aggregation::mean);

}  // namespace htmoe
