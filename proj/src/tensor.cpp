// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/tensor.hpp"

#include <cmath>

namespace htmoe {

double frobenius_norm(const TensorRecord& t) {
    double sq = 0.0;
    for (double v : t.values) sq += v * v;
    return std::sqrt(sq);
}

}  // namespace htmoe
