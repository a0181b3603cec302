// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "htmoe/model_map.hpp"

namespace htmoe {

// Rounding-repair policy for the integer allocation step.
//
// largest_remainder: under budget, increment the entry with the largest
// residual (a_i - s_i); over budget, decrement the smallest residual among
// positive entries. This is the standard largest-remainder apportionment
// and keeps |s_i - a_i| < 1.
//
// paper_literal: the argmin/argmax directions are swapped. Under budget the
// smallest residual is incremented, which funnels every further increment
// into the same layer. Provided for auditing only.
enum class RepairMode { largest_remainder, paper_literal };

std::string repair_mode_name(RepairMode mode);

struct AllocationConfig {
    int total_experts = 0;
    double beta = 2.5;
    RepairMode repair_mode = RepairMode::largest_remainder;
};

struct RepairStep {
    int step = 0;
    int index = 0;
    int direction = 0;  // +1 increment, -1 decrement
};

struct AllocationPlan {
    std::vector<double> metric_values;
    std::vector<double> raw_allocation;
    std::vector<int> experts;
    AllocationConfig config;
    std::vector<RepairStep> repair_log;
    std::string metric_name;  // provenance: which layer metric produced v
};

// a_i = (v_i^beta / sum_j v_j^beta) * T. All metric values must be > 0.
std::vector<double> raw_allocation(const std::vector<double>& v, double beta, int total);

// Round-half-up followed by the repair loop until sum(s) == total.
// Ties are broken by lowest index; every step is recorded.
std::pair<std::vector<int>, std::vector<RepairStep>> round_and_repair(
    const std::vector<double>& a, int total, RepairMode mode);

AllocationPlan allocate(const std::vector<double>& v, const AllocationConfig& config);

// Group-wise baseline: each group's expert count repeated over an equal
// share of the layers, e.g. groups {2,4,6,8} over 32 layers.
struct PatternSpec {
    std::vector<int> groups;
    int num_layers = 0;
};

std::vector<int> mola_pattern(const PatternSpec& spec);

// Parses "2468" (single-digit groups) or "4,6,8,10".
std::vector<int> parse_pattern(const std::string& pattern);

// Exact trainable-parameter count for a plan: per layer and expert, one
// pair A (rows x rank) + B (rank x cols) per target matrix, plus one router
// column per expert and target matrix (router rows = input dim).
struct ParamCountReport {
    std::int64_t expert_params = 0;
    std::int64_t router_params = 0;
    std::int64_t total = 0;
    struct LayerParams {
        int layer = 0;
        int experts = 0;
        std::int64_t params = 0;
    };
    std::vector<LayerParams> per_layer;
};

ParamCountReport count_trainable_params(const ModelConfig& model,
                                        const std::vector<int>& experts, int rank);

}  // namespace htmoe
