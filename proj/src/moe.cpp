// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/moe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace htmoe {

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
    }
    return m;
}

}  // namespace

MoELayer init_moe_layer(int out_dim, int in_dim, int num_experts, int rank, int topk,
                        std::uint64_t seed, double init_std, const Eigen::MatrixXd* w0) {
    if (out_dim < 1 || in_dim < 1) throw std::invalid_argument("init_moe_layer: dims must be >= 1");
    if (num_experts < 0) throw std::invalid_argument("init_moe_layer: negative expert count");
    if (num_experts >= 1 && (topk < 1 || topk > num_experts)) {
        throw std::invalid_argument("init_moe_layer: topk " + std::to_string(topk) +
                                    " out of range for " + std::to_string(num_experts) +
                                    " experts");
    }
    if (num_experts >= 1 && rank < 1) {
        throw std::invalid_argument("init_moe_layer: rank must be >= 1");
    }

    std::mt19937_64 rng(seed);
    MoELayer layer;
    layer.topk = topk;
    layer.rank = rank;
    if (w0) {
        if (w0->rows() != out_dim || w0->cols() != in_dim) {
            throw std::invalid_argument("init_moe_layer: supplied base matrix has wrong shape");
        }
        layer.w0 = *w0;
    } else {
        layer.w0 = gaussian_matrix(out_dim, in_dim, rng, init_std);
    }
    for (int j = 0; j < num_experts; ++j) {
        layer.a.push_back(gaussian_matrix(out_dim, rank, rng, init_std));
        layer.b.push_back(Eigen::MatrixXd::Zero(rank, in_dim));
    }
    layer.wr = num_experts > 0 ? gaussian_matrix(in_dim, num_experts, rng, init_std)
                               : Eigen::MatrixXd(in_dim, 0);
    return layer;
}

RouterOutput route(const MoELayer& layer, const Eigen::VectorXd& x) {
    const int n = layer.num_experts();
    if (n == 0) throw std::invalid_argument("route: layer has no experts");
    if (x.size() != layer.in_dim()) throw std::invalid_argument("route: input dim mismatch");

    const Eigen::VectorXd logits = layer.wr.transpose() * x;
    const double max_logit = logits.maxCoeff();
    RouterOutput out;
    out.probs.resize(static_cast<size_t>(n));
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        out.probs[static_cast<size_t>(i)] = std::exp(logits[i] - max_logit);
        z += out.probs[static_cast<size_t>(i)];
    }
    for (double& p : out.probs) p /= z;

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        return out.probs[static_cast<size_t>(lhs)] > out.probs[static_cast<size_t>(rhs)];
    });
    out.selected.assign(order.begin(), order.begin() + layer.topk);

    if (layer.topk == n) {
        // Renormalizing the full selection is the identity; copy verbatim
        // so the equality is exact.
        out.gates.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            out.gates[static_cast<size_t>(i)] = out.probs[static_cast<size_t>(out.selected[i])];
        }
    } else {
        double sum = 0.0;
        for (int idx : out.selected) sum += out.probs[static_cast<size_t>(idx)];
        for (int idx : out.selected) out.gates.push_back(out.probs[static_cast<size_t>(idx)] / sum);
    }
    return out;
}

Eigen::VectorXd moe_forward(const MoELayer& layer, const Eigen::VectorXd& x) {
    if (x.size() != layer.in_dim()) throw std::invalid_argument("moe_forward: input dim mismatch");
    Eigen::VectorXd h = layer.w0 * x;
    if (layer.num_experts() == 0) return h;

    const RouterOutput routed = route(layer, x);
    for (size_t s = 0; s < routed.selected.size(); ++s) {
        const auto j = static_cast<size_t>(routed.selected[s]);
        h += routed.gates[s] * layer.lora_scale * (layer.a[j] * (layer.b[j] * x));
    }
    return h;
}

AuxLossReport aux_load_balance_loss(const std::vector<RouterOutput>& outputs, int num_experts) {
    if (outputs.empty()) throw std::invalid_argument("aux_load_balance_loss: empty batch");
    if (num_experts < 1) throw std::invalid_argument("aux_load_balance_loss: no experts");

    AuxLossReport report;
    report.dispatch_fraction.assign(static_cast<size_t>(num_experts), 0.0);
    report.mean_prob.assign(static_cast<size_t>(num_experts), 0.0);
    size_t k = 0;
    for (const RouterOutput& out : outputs) {
        if (out.probs.size() != static_cast<size_t>(num_experts)) {
            throw std::invalid_argument("aux_load_balance_loss: inconsistent expert count");
        }
        if (k == 0) {
            k = out.selected.size();
        } else if (out.selected.size() != k) {
            throw std::invalid_argument("aux_load_balance_loss: inconsistent top-K");
        }
        for (int idx : out.selected) report.dispatch_fraction[static_cast<size_t>(idx)] += 1.0;
        for (size_t i = 0; i < out.probs.size(); ++i) report.mean_prob[i] += out.probs[i];
    }
    const auto batch = static_cast<double>(outputs.size());
    for (double& f : report.dispatch_fraction) f /= batch;
    for (double& p : report.mean_prob) p /= batch;

    double dot = 0.0;
    for (int i = 0; i < num_experts; ++i) {
        dot += report.dispatch_fraction[static_cast<size_t>(i)] *
               report.mean_prob[static_cast<size_t>(i)];
    }
    report.loss = static_cast<double>(num_experts) * dot / static_cast<double>(k);
    return report;
}

MoeGradients analytic_grads(const MoELayer& layer, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& upstream) {
    if (x.size() != layer.in_dim() || upstream.size() != layer.out_dim()) {
        throw std::invalid_argument("analytic_grads: dimension mismatch");
    }

    MoeGradients grads;
    const int n = layer.num_experts();
    for (int j = 0; j < n; ++j) {
        grads.d_a.push_back(Eigen::MatrixXd::Zero(layer.out_dim(), layer.rank));
        grads.d_b.push_back(Eigen::MatrixXd::Zero(layer.rank, layer.in_dim()));
    }
    if (n == 0) return grads;

    const RouterOutput routed = route(layer, x);
    for (size_t s = 0; s < routed.selected.size(); ++s) {
        const auto j = static_cast<size_t>(routed.selected[s]);
        const double g = routed.gates[s] * layer.lora_scale;
        const Eigen::VectorXd bx = layer.b[j] * x;
        grads.d_a[j] = g * upstream * bx.transpose();
        grads.d_b[j] = g * (layer.a[j].transpose() * upstream) * x.transpose();
    }
    return grads;
}

double gradient_check(const MoELayer& layer, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& upstream, double step) {
    const MoeGradients grads = analytic_grads(layer, x, upstream);
    MoELayer probe = layer;

    auto objective = [&]() { return upstream.dot(moe_forward(probe, x)); };

    double max_rel_err = 0.0;
    auto check_entry = [&](double& w, double analytic) {
        const double saved = w;
        w = saved + step;
        const double plus = objective();
        w = saved - step;
        const double minus = objective();
        w = saved;
        const double fd = (plus - minus) / (2.0 * step);
        const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-8});
        max_rel_err = std::max(max_rel_err, std::abs(analytic - fd) / denom);
    };

    for (int j = 0; j < layer.num_experts(); ++j) {
        const auto uj = static_cast<size_t>(j);
        for (Eigen::Index r = 0; r < probe.a[uj].rows(); ++r) {
            for (Eigen::Index c = 0; c < probe.a[uj].cols(); ++c) {
                check_entry(probe.a[uj](r, c), grads.d_a[uj](r, c));
            }
        }
        for (Eigen::Index r = 0; r < probe.b[uj].rows(); ++r) {
            for (Eigen::Index c = 0; c < probe.b[uj].cols(); ++c) {
                check_entry(probe.b[uj](r, c), grads.d_b[uj](r, c));
            }
        }
    }
    return max_rel_err;
}

}  // namespace htmoe
