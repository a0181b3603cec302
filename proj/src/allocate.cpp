// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/allocate.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "htmoe/errors.hpp"

namespace htmoe {

std::string repair_mode_name(RepairMode mode) {
    return mode == RepairMode::largest_remainder ? "largest_remainder" : "paper_literal";
}

std::vector<double> raw_allocation(const std::vector<double>& v, double beta, int total) {
    if (v.empty()) throw std::invalid_argument("raw_allocation: empty metric list");
    if (total < 0) throw std::invalid_argument("raw_allocation: negative budget");

    double denom = 0.0;
    for (double x : v) {
        if (!(x > 0.0)) {
            throw std::invalid_argument("raw_allocation: metric values must be positive, got " +
                                        std::to_string(x));
        }
        denom += std::pow(x, beta);
    }

    std::vector<double> a(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        a[i] = std::pow(v[i], beta) / denom * static_cast<double>(total);
    }
    return a;
}

std::pair<std::vector<int>, std::vector<RepairStep>> round_and_repair(
    const std::vector<double>& a, int total, RepairMode mode) {
    if (total < 0) throw std::invalid_argument("round_and_repair: negative budget");
    double asum = 0.0;
    for (double x : a) {
        if (x < 0.0) throw std::invalid_argument("round_and_repair: negative allocation");
        asum += x;
    }
    if (std::abs(asum - total) > 1e-6 * std::max(1.0, static_cast<double>(total))) {
        throw std::invalid_argument("round_and_repair: allocations sum to " +
                                    std::to_string(asum) + ", expected " + std::to_string(total));
    }

    std::vector<int> s(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        s[i] = static_cast<int>(std::floor(a[i] + 0.5));  // round half up
    }

    std::vector<RepairStep> log;
    int sum = std::accumulate(s.begin(), s.end(), 0);
    int step = 0;
    while (sum != total) {
        const bool under = sum < total;
        // Residual that the standard method targets: largest a_i - s_i when
        // short, smallest when over. paper_literal flips the comparison.
        int picked = -1;
        double picked_res = 0.0;
        for (size_t i = 0; i < a.size(); ++i) {
            if (!under && s[i] <= 0) continue;  // never decrement below zero
            const double res = a[i] - static_cast<double>(s[i]);
            bool better;
            if (picked < 0) {
                better = true;
            } else if (mode == RepairMode::largest_remainder) {
                better = under ? res > picked_res : res < picked_res;
            } else {
                better = under ? res < picked_res : res > picked_res;
            }
            if (better) {
                picked = static_cast<int>(i);
                picked_res = res;
            }
        }
        if (picked < 0) {
            throw InvariantError("round_and_repair: over budget with no positive entry");
        }
        s[static_cast<size_t>(picked)] += under ? 1 : -1;
        sum += under ? 1 : -1;
        log.push_back({step++, picked, under ? 1 : -1});
    }
    return {std::move(s), std::move(log)};
}

AllocationPlan allocate(const std::vector<double>& v, const AllocationConfig& config) {
    AllocationPlan plan;
    plan.metric_values = v;
    plan.config = config;
    plan.raw_allocation = raw_allocation(v, config.beta, config.total_experts);
    std::tie(plan.experts, plan.repair_log) =
        round_and_repair(plan.raw_allocation, config.total_experts, config.repair_mode);
    return plan;
}

std::vector<int> mola_pattern(const PatternSpec& spec) {
    if (spec.groups.empty()) throw std::invalid_argument("mola_pattern: empty group list");
    const auto g = static_cast<int>(spec.groups.size());
    if (spec.num_layers <= 0 || spec.num_layers % g != 0) {
        throw std::invalid_argument("mola_pattern: " + std::to_string(spec.num_layers) +
                                    " layers not divisible into " + std::to_string(g) +
                                    " groups");
    }
    const int span = spec.num_layers / g;
    std::vector<int> experts;
    experts.reserve(static_cast<size_t>(spec.num_layers));
    for (int value : spec.groups) {
        for (int i = 0; i < span; ++i) experts.push_back(value);
    }
    return experts;
}

std::vector<int> parse_pattern(const std::string& pattern) {
    if (pattern.empty()) throw std::invalid_argument("parse_pattern: empty pattern");
    std::vector<int> groups;
    if (pattern.find(',') != std::string::npos) {
        size_t pos = 0;
        while (pos <= pattern.size()) {
            const size_t comma = pattern.find(',', pos);
            const std::string token =
                pattern.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
            if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos) {
                throw std::invalid_argument("parse_pattern: bad group '" + token + "' in '" +
                                            pattern + "'");
            }
            groups.push_back(std::stoi(token));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
    } else {
        for (char c : pattern) {
            if (c < '0' || c > '9') {
                throw std::invalid_argument("parse_pattern: bad digit '" + std::string(1, c) +
                                            "' in '" + pattern + "'");
            }
            groups.push_back(c - '0');
        }
    }
    return groups;
}

ParamCountReport count_trainable_params(const ModelConfig& model, const std::vector<int>& experts,
                                        int rank) {
    if (static_cast<int>(experts.size()) != model.num_layers) {
        throw std::invalid_argument("count_trainable_params: " + std::to_string(experts.size()) +
                                    " expert entries for " + std::to_string(model.num_layers) +
                                    " layers");
    }
    if (rank < 1) throw std::invalid_argument("count_trainable_params: rank must be >= 1");

    // Per expert, each target matrix contributes A (rows x rank) and
    // B (rank x cols); each expert also owns one router column per target
    // matrix, with router rows equal to the matrix input dimension.
    std::int64_t expert_per = 0;
    std::int64_t router_per = 0;
    for (const RoleDims& dims : model.roles) {
        expert_per += static_cast<std::int64_t>(rank) * (dims.rows + dims.cols);
        router_per += dims.cols;
    }

    ParamCountReport report;
    for (size_t layer = 0; layer < experts.size(); ++layer) {
        const int s = experts[layer];
        if (s < 0) throw std::invalid_argument("count_trainable_params: negative expert count");
        const std::int64_t layer_params = static_cast<std::int64_t>(s) * (expert_per + router_per);
        report.expert_params += static_cast<std::int64_t>(s) * expert_per;
        report.router_params += static_cast<std::int64_t>(s) * router_per;
        report.per_layer.push_back({static_cast<int>(layer), s, layer_params});
    }
    report.total = report.expert_params + report.router_params;
    return report;
}

}  // namespace htmoe
