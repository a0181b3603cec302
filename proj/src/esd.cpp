// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/esd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "htmoe/errors.hpp"

namespace htmoe {

ESD ESD::from_eigenvalues(std::vector<double> eigenvalues) {
    ESD esd;
    for (double& v : eigenvalues) v = std::max(v, 0.0);
    std::sort(eigenvalues.begin(), eigenvalues.end());
    esd.gram_dim = static_cast<std::int64_t>(eigenvalues.size());
    esd.rows = esd.gram_dim;
    esd.cols = esd.gram_dim;
    for (double v : eigenvalues) esd.frob_sq += v;
    esd.eigenvalues = std::move(eigenvalues);
    return esd;
}

ESD compute_esd(const TensorRecord& w) {
    if (!w.analyzable()) {
        throw std::invalid_argument("compute_esd: tensor '" + w.name +
                                    "' is not a 2-D matrix with positive dimensions");
    }
    for (size_t i = 0; i < w.values.size(); ++i) {
        if (!std::isfinite(w.values[i])) {
            const auto r = static_cast<std::int64_t>(i) / w.cols();
            const auto c = static_cast<std::int64_t>(i) % w.cols();
            throw std::invalid_argument("compute_esd: tensor '" + w.name +
                                        "' has a non-finite entry at (" + std::to_string(r) +
                                        ", " + std::to_string(c) + ")");
        }
    }

    const auto rows = static_cast<Eigen::Index>(w.rows());
    const auto cols = static_cast<Eigen::Index>(w.cols());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        mapped(w.values.data(), rows, cols);

    // Orient tall so that W and its transpose decompose the same matrix.
    Eigen::MatrixXd m;
    if (rows >= cols) {
        m = mapped;
    } else {
        m = mapped.transpose();
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd& sigma = svd.singularValues();

    ESD esd;
    esd.rows = w.rows();
    esd.cols = w.cols();
    esd.gram_dim = std::min(esd.rows, esd.cols);
    esd.eigenvalues.resize(static_cast<size_t>(sigma.size()));
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        // singular values arrive descending; store squared, ascending
        esd.eigenvalues[static_cast<size_t>(sigma.size() - 1 - i)] =
            std::max(sigma[i] * sigma[i], 0.0);
    }

    double frob_sq = 0.0;
    for (double v : w.values) frob_sq += v * v;
    esd.frob_sq = frob_sq;

    double trace = 0.0;
    for (double v : esd.eigenvalues) trace += v;
    const double tol = 1e-8 * std::max(1.0, frob_sq);
    if (std::abs(trace - frob_sq) > tol) {
        throw InvariantError("spectrum of '" + w.name + "' violates the trace identity: sum " +
                             std::to_string(trace) + " vs |W|_F^2 " + std::to_string(frob_sq));
    }
    return esd;
}

}  // namespace htmoe
