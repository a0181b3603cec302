// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "htmoe/errors.hpp"
#include "htmoe/esd.hpp"
#include "support/oracles.hpp"

using namespace htmoe;

namespace {

TensorRecord make_tensor(std::int64_t rows, std::int64_t cols, std::vector<double> values,
                         const std::string& name = "w") {
    TensorRecord t;
    t.name = name;
    t.shape = {rows, cols};
    t.values = std::move(values);
    return t;
}

TensorRecord random_tensor(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    std::vector<double> values(static_cast<size_t>(rows * cols));
    for (double& v : values) v = dist(rng);
    return make_tensor(rows, cols, std::move(values));
}

}  // namespace

TEST_CASE("identity and diagonal spectra") {
    const ESD id = compute_esd(make_tensor(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    REQUIRE(id.eigenvalues.size() == 3);
    for (double v : id.eigenvalues) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    const ESD diag = compute_esd(make_tensor(3, 3, {1, 0, 0, 0, 2, 0, 0, 0, 3}));
    CHECK(diag.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag.eigenvalues[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(diag.eigenvalues[2] == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(diag.frob_sq == doctest::Approx(14.0));
    CHECK(diag.gram_dim == 3);
}

TEST_CASE("seeded 5x3 matrix matches the dense Gram eigensolve") {
    const TensorRecord w = random_tensor(5, 3, 99);
    const ESD esd = compute_esd(w);
    const auto oracle = oracles::jacobi_eigenvalues(oracles::gram_matrix(w.values, 5, 3));
    REQUIRE(esd.eigenvalues.size() == oracle.size());
    for (size_t i = 0; i < oracle.size(); ++i) {
        CHECK(esd.eigenvalues[i] ==
              doctest::Approx(oracle[i]).epsilon(1e-8).scale(std::max(1.0, esd.lambda_max())));
    }
    double sum = 0.0;
    for (double v : esd.eigenvalues) sum += v;
    CHECK(sum == doctest::Approx(esd.frob_sq).epsilon(1e-10));
}

TEST_CASE("rotation invariance") {
    const TensorRecord w = random_tensor(6, 4, 7);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> dist;
    Eigen::MatrixXd g(6, 6);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) g(r, c) = dist(rng);
    }
    const Eigen::MatrixXd q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(6, 6);

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        w.values.data(), 6, 4);
    const Eigen::MatrixXd rotated = q * m;
    TensorRecord qw = w;
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 4; ++c) qw.values[static_cast<size_t>(r * 4 + c)] = rotated(r, c);
    }

    const ESD a = compute_esd(w);
    const ESD b = compute_esd(qw);
    for (size_t i = 0; i < a.eigenvalues.size(); ++i) {
        CHECK(b.eigenvalues[i] ==
              doctest::Approx(a.eigenvalues[i]).epsilon(1e-8).scale(std::max(1.0, a.lambda_max())));
    }
}

TEST_CASE("scaling multiplies eigenvalues by c squared") {
    const TensorRecord w = random_tensor(4, 5, 13);
    TensorRecord scaled = w;
    const double c = 3.5;
    for (double& v : scaled.values) v *= c;

    const ESD a = compute_esd(w);
    const ESD b = compute_esd(scaled);
    for (size_t i = 0; i < a.eigenvalues.size(); ++i) {
        CHECK(b.eigenvalues[i] == doctest::Approx(c * c * a.eigenvalues[i]).epsilon(1e-8));
    }
}

TEST_CASE("transpose invariance is exact") {
    const TensorRecord w = random_tensor(7, 3, 21);
    TensorRecord wt = make_tensor(3, 7, std::vector<double>(21), "wt");
    for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 3; ++c) {
            wt.values[static_cast<size_t>(c * 7 + r)] = w.values[static_cast<size_t>(r * 3 + c)];
        }
    }
    const ESD a = compute_esd(w);
    const ESD b = compute_esd(wt);
    CHECK(a.eigenvalues == b.eigenvalues);  // same matrix after orientation, bit-identical
    CHECK(a.gram_dim == b.gram_dim);
}

TEST_CASE("trace identity holds across random shapes") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rows = static_cast<std::int64_t>(1 + rng() % 40);
        const auto cols = static_cast<std::int64_t>(1 + rng() % 40);
        const ESD esd = compute_esd(random_tensor(rows, cols, rng()));
        double sum = 0.0;
        for (double v : esd.eigenvalues) sum += v;
        CHECK(std::abs(sum - esd.frob_sq) <= 1e-8 * std::max(1.0, esd.frob_sq));
        CHECK(esd.gram_dim == std::min(rows, cols));
        CHECK(std::is_sorted(esd.eigenvalues.begin(), esd.eigenvalues.end()));
        for (double v : esd.eigenvalues) CHECK(v >= 0.0);
    }
}

TEST_CASE("non-finite and non-2-D inputs are rejected") {
    TensorRecord bad = random_tensor(3, 3, 1);
    bad.values[4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(compute_esd(bad), doctest::Contains("(1, 1)"), std::invalid_argument);

    TensorRecord vec;
    vec.name = "v";
    vec.shape = {4};
    vec.values.assign(4, 1.0);
    CHECK_THROWS_AS(compute_esd(vec), std::invalid_argument);
}

TEST_CASE("esd from raw eigenvalues clamps and sorts") {
    const ESD esd = ESD::from_eigenvalues({3.0, -1e-15, 1.0});
    CHECK(esd.eigenvalues == std::vector<double>{0.0, 1.0, 3.0});
    CHECK(esd.frob_sq == doctest::Approx(4.0));
    CHECK(esd.lambda_max() == 3.0);
}
