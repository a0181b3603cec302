// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace htmoe {

// The seven per-block projection matrices that enter layer metrics.
enum class Role { q, k, v, o, gate, down, up };

constexpr std::array<Role, 7> kAnalysisRoles = {
    Role::q, Role::k, Role::v, Role::o, Role::gate, Role::down, Role::up};

std::string role_name(Role role);
std::optional<Role> parse_role(const std::string& name);

// How tensor names map to (layer, role). A pattern's regex must contain a
// single capture group holding the 0-based layer index.
struct RolePattern {
    Role role;
    std::string regex;
};

struct SchemeSpec {
    std::string name;  // "llama-style" or "custom"
    std::vector<RolePattern> patterns;

    static SchemeSpec llama_style();
};

struct LayerEntry {
    int index = 0;
    std::map<Role, std::string> matrices;
};

struct ModelMap {
    int num_layers = 0;
    std::vector<LayerEntry> layers;          // sorted by index, exactly 0..num_layers-1
    std::vector<std::string> warnings;       // missing (layer, role) slots

    const LayerEntry& layer(int index) const { return layers.at(static_cast<size_t>(index)); }
    int num_matrices() const;
};

// Maps tensor names onto (layer, role) slots. Names that match no role
// pattern (embeddings, norms, heads) are ignored. Missing roles produce
// warnings; zero matched layers or a duplicate (layer, role) is an error.
// The result depends only on the set of names, not their order.
ModelMap build_model_map(const std::vector<std::string>& names, const SchemeSpec& scheme);

// Target-matrix dimensions of a model, for parameter counting without
// loading weights. rows = output dim, cols = input dim.
struct RoleDims {
    Role role;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
};

struct ModelConfig {
    std::string name;
    std::int64_t hidden_dim = 0;
    std::int64_t intermediate_dim = 0;
    int num_layers = 0;
    std::vector<RoleDims> roles;

    // llama-style dims: q/k/v/o are hidden x hidden, gate/up are
    // intermediate x hidden, down is hidden x intermediate.
    static ModelConfig llama_style(std::string name, std::int64_t hidden,
                                   std::int64_t intermediate, int layers);
    static ModelConfig llama2_7b();
};

}  // namespace htmoe
