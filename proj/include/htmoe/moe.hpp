// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace htmoe {

// Reference LoRA-MoE layer: a frozen base matrix, N low-rank expert pairs
// and a router selecting the top-K experts per input. Numerical reference
// only; no training loop.
struct MoELayer {
    Eigen::MatrixXd w0;                // out_dim x in_dim, frozen
    std::vector<Eigen::MatrixXd> a;    // out_dim x rank, Gaussian init
    std::vector<Eigen::MatrixXd> b;    // rank x in_dim, zero init
    Eigen::MatrixXd wr;                // in_dim x num_experts
    int topk = 1;
    int rank = 0;
    // Optional output scale on the expert sum (e.g. lora_alpha / rank).
    // Off by default: 1.0 leaves the expert contributions unscaled.
    double lora_scale = 1.0;

    int num_experts() const { return static_cast<int>(a.size()); }
    int out_dim() const { return static_cast<int>(w0.rows()); }
    int in_dim() const { return static_cast<int>(w0.cols()); }
};

struct RouterOutput {
    std::vector<double> probs;   // full softmax, length N
    std::vector<int> selected;   // K expert indices, descending probability
    std::vector<double> gates;   // renormalized top-K weights, sum 1
};

struct AuxLossReport {
    std::vector<double> dispatch_fraction;  // f_i: fraction of tokens routed to i
    std::vector<double> mean_prob;          // P_i: mean router probability of i
    double loss = 0.0;                      // N * sum_i f_i * P_i / K
};

struct MoeGradients {
    std::vector<Eigen::MatrixXd> d_a;
    std::vector<Eigen::MatrixXd> d_b;
};

inline constexpr double kDefaultInitStd = 0.02;

// Deterministic seeded construction. Every A_j and the router are i.i.d.
// Gaussian(0, init_std); every B_j is exactly zero, so the layer computes
// w0 * x until the experts receive updates. N = 0 builds a pass-through
// layer. If w0 is null a seeded Gaussian base matrix is generated.
MoELayer init_moe_layer(int out_dim, int in_dim, int num_experts, int rank, int topk,
                        std::uint64_t seed, double init_std = kDefaultInitStd,
                        const Eigen::MatrixXd* w0 = nullptr);

// logits = x^T * wr; numerically stable softmax; top-K by probability with
// ties broken by lower index; gates = selected probs renormalized to 1.
// When K == N the gates are the probs verbatim.
RouterOutput route(const MoELayer& layer, const Eigen::VectorXd& x);

// h = w0 x + sum_{j in selected} gate_j * lora_scale * A_j (B_j x).
Eigen::VectorXd moe_forward(const MoELayer& layer, const Eigen::VectorXd& x);

// Load-balancing auxiliary loss over a token batch, normalized so that a
// perfectly balanced router scores 1 for any K.
AuxLossReport aux_load_balance_loss(const std::vector<RouterOutput>& outputs, int num_experts);

// Gradients of upstream . h with respect to each A_j, B_j, with the
// routing selection frozen and gates treated as constants. Unselected
// experts receive zero gradients.
MoeGradients analytic_grads(const MoELayer& layer, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& upstream);

// Central finite differences of upstream . h through the full forward
// against analytic_grads; returns the maximum elementwise relative error.
double gradient_check(const MoELayer& layer, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& upstream, double step = 1e-5);

}  // namespace htmoe
