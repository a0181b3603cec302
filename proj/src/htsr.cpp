// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/htsr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "htmoe/errors.hpp"

namespace htmoe {

namespace {

double aggregate(std::vector<double> values, Aggregation how) {
    if (how == Aggregation::median) {
        std::sort(values.begin(), values.end());
        const size_t n = values.size();
        return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

std::pair<double, int> fix_finger_lambda_min(const ESD& esd, int bins) {
    if (bins < 1) throw std::invalid_argument("fix_finger_lambda_min: bins must be >= 1");

    const double floor = 1e-12 * esd.lambda_max();
    std::vector<double> kept;   // eigenvalues entering the histogram, ascending
    std::vector<double> logs;   // their natural logs
    for (double v : esd.eigenvalues) {
        if (v > 0.0 && v >= floor) {
            kept.push_back(v);
            logs.push_back(std::log(v));
        }
    }
    if (kept.size() < 8) {
        throw DegenerateSpectrumError("fewer than 8 positive eigenvalues (" +
                                      std::to_string(kept.size()) + ")");
    }

    const double lo = logs.front();
    const double hi = logs.back();
    if (hi <= lo) {
        throw DegenerateSpectrumError("all eigenvalues equal; no histogram peak");
    }

    const double width = (hi - lo) / bins;
    std::vector<int> counts(static_cast<size_t>(bins), 0);
    for (double x : logs) {
        auto b = static_cast<std::int64_t>((x - lo) / width);
        b = std::clamp<std::int64_t>(b, 0, bins - 1);
        ++counts[static_cast<size_t>(b)];
    }

    size_t peak = 0;
    for (size_t b = 1; b < counts.size(); ++b) {
        if (counts[b] > counts[peak]) peak = b;  // ties keep the lower bin
    }
    const double center = lo + (static_cast<double>(peak) + 0.5) * width;

    double lambda_min = kept.front();
    double best = std::abs(logs.front() - center);
    for (size_t i = 1; i < kept.size(); ++i) {
        const double d = std::abs(logs[i] - center);
        if (d < best) {
            best = d;
            lambda_min = kept[i];
        }
    }

    const auto n = static_cast<std::int64_t>(esd.eigenvalues.size());
    auto count_above = [&](double threshold) {
        return static_cast<int>(esd.eigenvalues.end() -
                                std::upper_bound(esd.eigenvalues.begin(), esd.eigenvalues.end(),
                                                 threshold));
    };
    int k = count_above(lambda_min);
    if (k < 1) {
        // lambda_min landed on lambda_max; back off to the next distinct
        // order statistic below it.
        auto it = std::lower_bound(esd.eigenvalues.begin(), esd.eigenvalues.end(), lambda_min);
        if (it == esd.eigenvalues.begin()) {
            throw DegenerateSpectrumError("no eigenvalue below the selected threshold");
        }
        lambda_min = *std::prev(it);
        k = count_above(lambda_min);
    }
    if (k > n - 1) k = static_cast<int>(n - 1);
    return {lambda_min, k};
}

double hill_alpha(const ESD& esd, int k) {
    const auto n = static_cast<std::int64_t>(esd.eigenvalues.size());
    if (k < 1 || k > n - 1) {
        throw std::invalid_argument("hill_alpha: k = " + std::to_string(k) +
                                    " out of range [1, " + std::to_string(n - 1) + "]");
    }
    const double ref = esd.eigenvalues[static_cast<size_t>(n - k - 1)];
    if (ref <= 0.0) {
        throw std::invalid_argument("hill_alpha: reference eigenvalue is not positive");
    }
    double sum = 0.0;
    for (std::int64_t j = n - k; j < n; ++j) {
        sum += std::log(esd.eigenvalues[static_cast<size_t>(j)] / ref);
    }
    if (sum == 0.0) {
        throw FlatTailError("hill_alpha: top " + std::to_string(k) +
                            " eigenvalues all equal the reference");
    }
    return 1.0 + static_cast<double>(k) / sum;
}

TailFit pl_alpha_hill(const ESD& esd, int bins) {
    TailFit fit;
    std::tie(fit.lambda_min, fit.k) = fix_finger_lambda_min(esd, bins);
    fit.alpha = hill_alpha(esd, fit.k);
    return fit;
}

double stable_rank(const ESD& esd) {
    const double lmax = esd.lambda_max();
    if (lmax <= 0.0) throw std::invalid_argument("stable_rank: spectral norm is zero");
    return esd.frob_sq / lmax;
}

double alpha_hat(const TailFit& tail, const ESD& esd) {
    const double lmax = esd.lambda_max();
    if (lmax <= 0.0) throw std::invalid_argument("alpha_hat: lambda_max must be positive");
    return tail.alpha * std::log(lmax);
}

MatrixMetrics matrix_metrics(const std::string& tensor_name, const ESD& esd, int bins) {
    MatrixMetrics m;
    m.tensor_name = tensor_name;
    m.rows = esd.rows;
    m.cols = esd.cols;
    m.tail = pl_alpha_hill(esd, bins);
    m.pl_alpha_hill = m.tail.alpha;
    m.stable_rank = stable_rank(esd);
    m.alpha_hat = alpha_hat(m.tail, esd);
    m.log_spectral_norm = std::log(esd.lambda_max());
    return m;
}

LayerMetrics layer_metrics(const std::vector<std::pair<std::string, ESD>>& esds, int layer_index,
                           int bins, Aggregation aggregation) {
    if (esds.empty()) throw std::invalid_argument("layer_metrics: empty matrix list");

    LayerMetrics layer;
    layer.layer_index = layer_index;
    for (const auto& [name, esd] : esds) {
        try {
            layer.per_matrix.push_back(matrix_metrics(name, esd, bins));
        } catch (const SpectrumError& e) {
            layer.skipped.push_back(name + ": " + e.what());
        }
    }
    if (layer.per_matrix.empty()) {
        throw DegenerateSpectrumError("layer " + std::to_string(layer_index) +
                                      ": every matrix has a degenerate spectrum");
    }

    std::vector<double> alphas, hats, ranks;
    for (const MatrixMetrics& m : layer.per_matrix) {
        alphas.push_back(m.pl_alpha_hill);
        hats.push_back(m.alpha_hat);
        ranks.push_back(m.stable_rank);
    }
    layer.layer_alpha_hill = aggregate(alphas, aggregation);
    layer.layer_alpha_hat = aggregate(hats, aggregation);
    layer.layer_stable_rank = aggregate(ranks, aggregation);
    return layer;
}

}  // namespace htmoe
