// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0
//
// Generates the committed toy2 fixture: a 2-layer llama-style checkpoint
// (hidden 32, intermediate 48) whose matrices have planted spectra, split
// across two safetensors shards, plus a manifest recording the planted
// eigenvalues and the metrics the pipeline computes on the stored float32
// bytes. Run once; outputs are committed so tests stay deterministic.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "htmoe/esd.hpp"
#include "htmoe/htsr.hpp"
#include "htmoe/model_map.hpp"
#include "htmoe/safetensors.hpp"
#include "htmoe/tensor.hpp"

using htmoe::Role;
using nlohmann::json;

namespace {

constexpr std::uint64_t kBaseSeed = 7;
constexpr int kHidden = 32;
constexpr int kIntermediate = 48;
constexpr int kLayers = 2;

Eigen::MatrixXd orthonormal_columns(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) g(r, c) = normal(rng);
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

// Bulk of near-1 eigenvalues plus a sparse heavy tail; ascending.
std::vector<double> planted_spectrum(int n, double tail_index, std::mt19937_64& rng) {
    std::normal_distribution<double> bulk_log(0.0, 0.05);
    std::uniform_real_distribution<double> uniform(0.01, 1.0);
    std::vector<double> lambda;
    const int tail = 8;
    for (int i = 0; i < n - tail; ++i) lambda.push_back(std::exp(bulk_log(rng)));
    for (int i = 0; i < tail; ++i) {
        lambda.push_back(5.0 * std::pow(uniform(rng), -1.0 / tail_index));
    }
    std::sort(lambda.begin(), lambda.end());
    return lambda;
}

htmoe::TensorRecord make_matrix(const std::string& name, int rows, int cols,
                                const std::vector<double>& lambda, std::mt19937_64& rng) {
    const int n = std::min(rows, cols);
    const Eigen::MatrixXd u = orthonormal_columns(rows, n, rng);
    const Eigen::MatrixXd v = orthonormal_columns(cols, n, rng);
    Eigen::VectorXd sigma(n);
    for (int i = 0; i < n; ++i) sigma[i] = std::sqrt(lambda[static_cast<size_t>(i)]);
    const Eigen::MatrixXd w = u * sigma.asDiagonal() * v.transpose();

    htmoe::TensorRecord record;
    record.name = name;
    record.shape = {rows, cols};
    record.values.reserve(static_cast<size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) record.values.push_back(w(r, c));
    }
    return record;
}

std::string tensor_name(int layer, Role role) {
    const std::string base = "model.layers." + std::to_string(layer);
    switch (role) {
        case Role::q: return base + ".self_attn.q_proj.weight";
        case Role::k: return base + ".self_attn.k_proj.weight";
        case Role::v: return base + ".self_attn.v_proj.weight";
        case Role::o: return base + ".self_attn.o_proj.weight";
        case Role::gate: return base + ".mlp.gate_proj.weight";
        case Role::down: return base + ".mlp.down_proj.weight";
        case Role::up: return base + ".mlp.up_proj.weight";
    }
    return base;
}

void role_dims(Role role, int& rows, int& cols) {
    switch (role) {
        case Role::gate:
        case Role::up:
            rows = kIntermediate;
            cols = kHidden;
            return;
        case Role::down:
            rows = kHidden;
            cols = kIntermediate;
            return;
        default:
            rows = kHidden;
            cols = kHidden;
            return;
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::filesystem::path out_dir = argc > 1 ? argv[1] : "tests/fixtures/toy2";
    std::filesystem::create_directories(out_dir);

    std::vector<std::vector<htmoe::TensorRecord>> shards(kLayers);
    std::vector<std::vector<double>> planted;
    for (int layer = 0; layer < kLayers; ++layer) {
        // Layer 1 gets a lighter tail than layer 0 so the per-layer alphas
        // differ and allocation plans are non-uniform.
        const double tail_index = layer == 0 ? 1.2 : 2.4;
        int role_idx = 0;
        for (Role role : htmoe::kAnalysisRoles) {
            std::mt19937_64 rng(kBaseSeed * 1000 + static_cast<std::uint64_t>(layer) * 100 +
                                static_cast<std::uint64_t>(role_idx++));
            int rows = 0, cols = 0;
            role_dims(role, rows, cols);
            const std::vector<double> lambda =
                planted_spectrum(std::min(rows, cols), tail_index, rng);
            shards[static_cast<size_t>(layer)].push_back(
                make_matrix(tensor_name(layer, role), rows, cols, lambda, rng));
            planted.push_back(lambda);
        }
    }

    char shard_name[64];
    for (int layer = 0; layer < kLayers; ++layer) {
        std::snprintf(shard_name, sizeof(shard_name), "model-%05d-of-%05d.safetensors",
                      layer + 1, kLayers);
        htmoe::write_safetensors(out_dir / shard_name, shards[static_cast<size_t>(layer)], "F32");
    }

    // Re-read the stored float32 bytes and record what the pipeline computes
    // on them, verifying first that the spectra survive the narrowing.
    const std::vector<htmoe::TensorRecord> stored = htmoe::read_safetensors_dir(out_dir);
    json tensors = json::array();
    std::vector<std::vector<std::pair<std::string, htmoe::ESD>>> per_layer(kLayers);
    size_t idx = 0;
    for (int layer = 0; layer < kLayers; ++layer) {
        for (const htmoe::TensorRecord& original : shards[static_cast<size_t>(layer)]) {
            const htmoe::TensorRecord* record = nullptr;
            for (const auto& r : stored) {
                if (r.name == original.name) record = &r;
            }
            if (!record) {
                std::fprintf(stderr, "tensor %s missing after re-read\n", original.name.c_str());
                return 1;
            }
            const htmoe::ESD esd = htmoe::compute_esd(*record);
            const std::vector<double>& lambda = planted[idx++];
            for (size_t i = 0; i < lambda.size(); ++i) {
                const double rel = std::abs(esd.eigenvalues[i] - lambda[i]) /
                                   std::max(lambda[i], 1e-6);
                if (rel > 1e-4) {
                    std::fprintf(stderr, "%s: eigenvalue %zu drifted by %g after float32 cast\n",
                                 record->name.c_str(), i, rel);
                    return 1;
                }
            }
            const htmoe::MatrixMetrics m = htmoe::matrix_metrics(record->name, esd);
            tensors.push_back({{"name", record->name},
                               {"shape", record->shape},
                               {"frob", htmoe::frobenius_norm(*record)},
                               {"planted_eigenvalues", lambda},
                               {"expected",
                                {{"pl_alpha_hill", m.pl_alpha_hill},
                                 {"alpha_hat", m.alpha_hat},
                                 {"stable_rank", m.stable_rank},
                                 {"log_spectral_norm", m.log_spectral_norm},
                                 {"lambda_min", m.tail.lambda_min},
                                 {"k", m.tail.k}}}});
            per_layer[static_cast<size_t>(layer)].emplace_back(record->name, esd);
        }
    }

    json layers = json::array();
    for (int layer = 0; layer < kLayers; ++layer) {
        const htmoe::LayerMetrics lm =
            htmoe::layer_metrics(per_layer[static_cast<size_t>(layer)], layer);
        layers.push_back({{"layer_index", layer},
                          {"pl_alpha_hill", lm.layer_alpha_hill},
                          {"alpha_hat", lm.layer_alpha_hat},
                          {"stable_rank", lm.layer_stable_rank}});
    }

    const json manifest = {{"model",
                            {{"name", "toy2"},
                             {"hidden_dim", kHidden},
                             {"intermediate_dim", kIntermediate},
                             {"num_layers", kLayers}}},
                           {"seed", kBaseSeed},
                           {"dtype", "F32"},
                           {"tensors", std::move(tensors)},
                           {"layers", std::move(layers)}};
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << "\n";

    const json config = {{"name", "toy2"},
                         {"hidden_dim", kHidden},
                         {"intermediate_dim", kIntermediate},
                         {"num_layers", kLayers}};
    std::ofstream(out_dir / "config.json") << config.dump(2) << "\n";

    std::printf("wrote %d-layer fixture to %s\n", kLayers, out_dir.string().c_str());
    return 0;
}
