// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <vector>

#include <json.hpp>

#include "htmoe/allocate.hpp"
#include "htmoe/errors.hpp"

using namespace htmoe;

namespace {

std::string fixture_path(const std::string& rel) {
    return std::string(HTMOE_FIXTURE_DIR) + "/" + rel;
}

int sum(const std::vector<int>& s) { return std::accumulate(s.begin(), s.end(), 0); }

}  // namespace

TEST_CASE("raw allocation splits a uniform metric evenly") {
    const auto a = raw_allocation({1, 1, 1, 1}, 2.0, 8);
    REQUIRE(a.size() == 4);
    for (double x : a) CHECK(x == 2.0);
}

TEST_CASE("raw allocation hand arithmetic") {
    // v = [2,3,4,5], beta = 2: squares [4,9,16,25] sum to 54
    const auto a = raw_allocation({2, 3, 4, 5}, 2.0, 14);
    REQUIRE(a.size() == 4);
    CHECK(a[0] == doctest::Approx(14.0 * 4.0 / 54.0).epsilon(1e-14));
    CHECK(a[1] == doctest::Approx(14.0 * 9.0 / 54.0).epsilon(1e-14));
    CHECK(a[2] == doctest::Approx(14.0 * 16.0 / 54.0).epsilon(1e-14));
    CHECK(a[3] == doctest::Approx(14.0 * 25.0 / 54.0).epsilon(1e-14));
    CHECK(std::accumulate(a.begin(), a.end(), 0.0) == doctest::Approx(14.0).epsilon(1e-12));
}

TEST_CASE("raw allocation beta edge cases") {
    // beta = 0 ignores the metric entirely
    const auto uniform = raw_allocation({2, 3, 4, 5}, 0.0, 14);
    for (double x : uniform) CHECK(x == doctest::Approx(3.5).epsilon(1e-14));
    // beta = 1 is plain proportionality
    const auto prop = raw_allocation({1, 3}, 1.0, 8);
    CHECK(prop[0] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(prop[1] == doctest::Approx(6.0).epsilon(1e-14));
    // budget 0 allocates nothing
    const auto zero = raw_allocation({1, 2}, 2.0, 0);
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == 0.0);
}

TEST_CASE("raw allocation is invariant under metric rescaling") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(0.5, 5.0);
    std::vector<double> v(16);
    for (double& x : v) x = dist(rng);
    const auto base = raw_allocation(v, 2.5, 100);
    std::vector<double> scaled = v;
    for (double& x : scaled) x *= 7.25;
    const auto rescaled = raw_allocation(scaled, 2.5, 100);
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK(rescaled[i] == doctest::Approx(base[i]).epsilon(1e-12));
    }
}

TEST_CASE("raw allocation input validation") {
    CHECK_THROWS_AS(raw_allocation({}, 2.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(raw_allocation({1.0, 0.0}, 2.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(raw_allocation({1.0, -2.0}, 2.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(raw_allocation({1.0, 2.0}, 2.0, -1), std::invalid_argument);
}

TEST_CASE("round and repair leaves integral allocations untouched") {
    const auto [s, log] = round_and_repair({1.0, 2.0, 4.0, 7.0}, 14, RepairMode::largest_remainder);
    CHECK(s == std::vector<int>{1, 2, 4, 7});
    CHECK(log.empty());
}

TEST_CASE("round and repair under budget picks the largest residual") {
    // raw allocation of v=[2,3,4,5], beta=2, T=14
    const std::vector<double> a = {14.0 * 4.0 / 54.0, 14.0 * 9.0 / 54.0, 14.0 * 16.0 / 54.0,
                                   14.0 * 25.0 / 54.0};
    const auto [s, log] = round_and_repair(a, 14, RepairMode::largest_remainder);
    CHECK(s == std::vector<int>{1, 2, 4, 7});
    REQUIRE(log.size() == 1);
    CHECK(log[0].index == 3);  // residual 0.481 is the largest
    CHECK(log[0].direction == 1);
}

TEST_CASE("round and repair literal mode funnels into the smallest residual") {
    const std::vector<double> a = {14.0 * 4.0 / 54.0, 14.0 * 9.0 / 54.0, 14.0 * 16.0 / 54.0,
                                   14.0 * 25.0 / 54.0};
    const auto [s, log] = round_and_repair(a, 14, RepairMode::paper_literal);
    CHECK(s == std::vector<int>{2, 2, 4, 6});
    REQUIRE(log.size() == 1);
    CHECK(log[0].index == 0);  // residual 0.037 is the smallest
    CHECK(log[0].direction == 1);
}

TEST_CASE("round and repair over budget decrements without going negative") {
    const auto [s, log] = round_and_repair({0.5, 0.5, 3.0}, 4, RepairMode::largest_remainder);
    CHECK(s == std::vector<int>{0, 1, 3});
    REQUIRE(log.size() == 1);
    CHECK(log[0].index == 0);  // tie between equal residuals breaks low
    CHECK(log[0].direction == -1);

    const auto [s2, log2] =
        round_and_repair({0.5, 0.5, 0.5, 0.5, 2.0}, 4, RepairMode::largest_remainder);
    CHECK(s2 == std::vector<int>{0, 0, 1, 1, 2});
    CHECK(log2.size() == 2);
    for (const auto& step : log2) CHECK(step.direction == -1);
    CHECK(*std::min_element(s2.begin(), s2.end()) >= 0);
}

TEST_CASE("round and repair rejects inconsistent sums") {
    CHECK_THROWS_AS(round_and_repair({2.5, 2.5}, 4, RepairMode::largest_remainder),
                    std::invalid_argument);
    CHECK_THROWS_AS(round_and_repair({-0.5, 4.5}, 4, RepairMode::largest_remainder),
                    std::invalid_argument);
    CHECK_THROWS_AS(round_and_repair({1.0}, -1, RepairMode::largest_remainder),
                    std::invalid_argument);
}

TEST_CASE("allocation properties hold over many random instances") {
    std::mt19937_64 rng(9001);
    std::uniform_int_distribution<int> n_dist(1, 40);
    std::uniform_int_distribution<int> t_dist(0, 400);
    std::uniform_real_distribution<double> v_dist(0.1, 10.0);
    const double betas[] = {0.5, 1.0, 2.0, 2.5, 4.0};

    int cases = 0;
    for (int iter = 0; iter < 1200; ++iter) {
        const int n = n_dist(rng);
        const int total = t_dist(rng);
        std::vector<double> v(static_cast<size_t>(n));
        for (double& x : v) x = v_dist(rng);
        const double beta = betas[iter % 5];

        AllocationConfig config;
        config.total_experts = total;
        config.beta = beta;
        const AllocationPlan plan = allocate(v, config);

        // the budget is met exactly
        REQUIRE(sum(plan.experts) == total);
        // largest-remainder repair keeps every layer within one expert of
        // its real-valued share
        for (size_t i = 0; i < v.size(); ++i) {
            REQUIRE(plan.experts[i] >= 0);
            REQUIRE(std::abs(plan.experts[i] - plan.raw_allocation[i]) < 1.0);
        }
        ++cases;

        // metric rescaling does not change the integer plan
        std::vector<double> scaled = v;
        for (double& x : scaled) x *= 4.0;
        const AllocationPlan plan2 = allocate(scaled, config);
        REQUIRE(plan2.experts == plan.experts);
        ++cases;

        // permutation equivariance: reverse the metric, the plan reverses
        std::vector<double> rev(v.rbegin(), v.rend());
        const AllocationPlan plan3 = allocate(rev, config);
        std::vector<int> expected(plan.experts.rbegin(), plan.experts.rend());
        REQUIRE(plan3.experts == expected);
        ++cases;
    }
    CHECK(cases >= 1000);
}

TEST_CASE("sharper beta concentrates the allocation") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> v_dist(0.5, 5.0);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<double> v(12);
        for (double& x : v) x = v_dist(rng);
        const size_t arg = static_cast<size_t>(
            std::max_element(v.begin(), v.end()) - v.begin());
        double prev = 0.0;
        for (double beta : {0.5, 1.0, 2.0, 4.0}) {
            const auto a = raw_allocation(v, beta, 100);
            const double share = a[arg] / 100.0;
            REQUIRE(share >= prev - 1e-12);
            prev = share;
        }
    }
}

TEST_CASE("group pattern expansion") {
    std::vector<int> expected;
    for (int g : {2, 4, 6, 8})
        for (int i = 0; i < 8; ++i) expected.push_back(g);
    CHECK(mola_pattern({{2, 4, 6, 8}, 32}) == expected);
    CHECK(sum(mola_pattern({{2, 4, 6, 8}, 32})) == 160);
    CHECK(sum(mola_pattern({{8, 8, 8, 8}, 32})) == 256);
    CHECK(sum(mola_pattern({{1, 2, 3, 4}, 32})) == 80);
    CHECK(sum(mola_pattern({{4, 6, 8, 10}, 32})) == 224);
    CHECK(sum(mola_pattern({{5, 5, 5, 5}, 32})) == 160);
    CHECK(mola_pattern({{3}, 2}) == std::vector<int>{3, 3});

    CHECK_THROWS_AS(mola_pattern({{4, 6, 8, 1, 0}, 32}), std::invalid_argument);  // 32 % 5 != 0
    CHECK_THROWS_AS(mola_pattern({{}, 32}), std::invalid_argument);
    CHECK_THROWS_AS(mola_pattern({{2, 4}, 0}), std::invalid_argument);
}

TEST_CASE("pattern parsing accepts digit strings and comma lists") {
    CHECK(parse_pattern("2468") == std::vector<int>{2, 4, 6, 8});
    CHECK(parse_pattern("5555") == std::vector<int>{5, 5, 5, 5});
    CHECK(parse_pattern("46810") == std::vector<int>{4, 6, 8, 1, 0});
    CHECK(parse_pattern("4,6,8,10") == std::vector<int>{4, 6, 8, 10});
    CHECK(parse_pattern("12,0,7") == std::vector<int>{12, 0, 7});

    CHECK_THROWS_AS(parse_pattern(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_pattern("4,,8"), std::invalid_argument);
    CHECK_THROWS_AS(parse_pattern("4,x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_pattern("abc"), std::invalid_argument);
    CHECK_THROWS_AS(parse_pattern("2 4"), std::invalid_argument);
    CHECK_THROWS_AS(parse_pattern("4,6,"), std::invalid_argument);
}

TEST_CASE("parameter count for the 7b preset") {
    const ModelConfig model = ModelConfig::llama2_7b();
    const std::vector<int> experts(32, 5);
    const ParamCountReport report = count_trainable_params(model, experts, 8);

    CHECK(report.total == 105'635'840);
    CHECK(report.router_params == 5'693'440);
    CHECK(report.expert_params == 99'942'400);
    CHECK(report.expert_params + report.router_params == report.total);
    REQUIRE(report.per_layer.size() == 32);
    for (const auto& layer : report.per_layer) {
        CHECK(layer.experts == 5);
        CHECK(layer.params == report.total / 32);
    }
}

TEST_CASE("parameter count matches a brute-force tensor enumeration") {
    const ModelConfig model = ModelConfig::llama_style("toy", 8, 12, 3);
    const std::vector<int> experts = {1, 2, 3};
    const int rank = 2;
    const ParamCountReport report = count_trainable_params(model, experts, rank);

    // enumerate every adapter and router tensor explicitly
    std::int64_t expert_total = 0;
    std::int64_t router_total = 0;
    for (size_t layer = 0; layer < experts.size(); ++layer) {
        for (const RoleDims& role : model.roles) {
            for (int e = 0; e < experts[layer]; ++e) {
                expert_total += role.rows * rank;  // A
                expert_total += rank * role.cols;  // B
            }
            router_total += role.cols * experts[layer];  // one column per expert
        }
    }
    CHECK(report.expert_params == expert_total);
    CHECK(report.router_params == router_total);
    CHECK(report.total == expert_total + router_total);

    // per-layer entries add up to the total
    std::int64_t per_layer_sum = 0;
    for (const auto& layer : report.per_layer) per_layer_sum += layer.params;
    CHECK(per_layer_sum == report.total);
}

TEST_CASE("parameter count is linear in the expert counts") {
    const ModelConfig model = ModelConfig::llama_style("toy", 16, 40, 4);
    const std::vector<int> experts = {1, 2, 3, 4};
    std::vector<int> doubled = experts;
    for (int& e : doubled) e *= 2;
    const auto base = count_trainable_params(model, experts, 4);
    const auto twice = count_trainable_params(model, doubled, 4);
    CHECK(twice.expert_params == 2 * base.expert_params);
    CHECK(twice.router_params == 2 * base.router_params);
    CHECK(twice.total == 2 * base.total);
}

TEST_CASE("parameter count rejects malformed plans") {
    const ModelConfig model = ModelConfig::llama_style("toy", 8, 12, 3);
    CHECK_THROWS_AS(count_trainable_params(model, {1, 2}, 4), std::invalid_argument);
    CHECK_THROWS_AS(count_trainable_params(model, {1, 2, -1}, 4), std::invalid_argument);
    CHECK_THROWS_AS(count_trainable_params(model, {1, 2, 3}, 0), std::invalid_argument);
}

TEST_CASE("zero experts everywhere costs nothing") {
    const ModelConfig model = ModelConfig::llama2_7b();
    const auto report = count_trainable_params(model, std::vector<int>(32, 0), 8);
    CHECK(report.expert_params == 0);
    CHECK(report.router_params == 0);
    CHECK(report.total == 0);
}

TEST_CASE("allocation over the bundled metric curve") {
    std::ifstream in(fixture_path("metric_curve.json"));
    REQUIRE(in.good());
    const nlohmann::json doc = nlohmann::json::parse(in);
    const std::vector<double> v = doc.at("values").get<std::vector<double>>();
    REQUIRE(v.size() == 32);

    AllocationConfig config;
    config.total_experts = 160;
    config.beta = 2.5;
    const AllocationPlan plan = allocate(v, config);

    CHECK(sum(plan.experts) == 160);
    const size_t arg_v =
        static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    const size_t arg_s = static_cast<size_t>(
        std::max_element(plan.experts.begin(), plan.experts.end()) - plan.experts.begin());
    CHECK(arg_v == 23);  // the curve's unique maximum
    CHECK(arg_s == arg_v);
    for (int e : plan.experts) CHECK(e >= 0);
}
