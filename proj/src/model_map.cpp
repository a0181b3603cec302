// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/model_map.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "htmoe/errors.hpp"

namespace htmoe {

std::string role_name(Role role) {
    switch (role) {
        case Role::q: return "q";
        case Role::k: return "k";
        case Role::v: return "v";
        case Role::o: return "o";
        case Role::gate: return "gate";
        case Role::down: return "down";
        case Role::up: return "up";
    }
    return "?";
}

std::optional<Role> parse_role(const std::string& name) {
    for (Role role : kAnalysisRoles) {
        if (role_name(role) == name) return role;
    }
    return std::nullopt;
}

SchemeSpec SchemeSpec::llama_style() {
    SchemeSpec scheme;
    scheme.name = "llama-style";
    scheme.patterns = {
        {Role::q, R"(^model\.layers\.([0-9]+)\.self_attn\.q_proj\.weight$)"},
        {Role::k, R"(^model\.layers\.([0-9]+)\.self_attn\.k_proj\.weight$)"},
        {Role::v, R"(^model\.layers\.([0-9]+)\.self_attn\.v_proj\.weight$)"},
        {Role::o, R"(^model\.layers\.([0-9]+)\.self_attn\.o_proj\.weight$)"},
        {Role::gate, R"(^model\.layers\.([0-9]+)\.mlp\.gate_proj\.weight$)"},
        {Role::down, R"(^model\.layers\.([0-9]+)\.mlp\.down_proj\.weight$)"},
        {Role::up, R"(^model\.layers\.([0-9]+)\.mlp\.up_proj\.weight$)"},
    };
    return scheme;
}

int ModelMap::num_matrices() const {
    int n = 0;
    for (const LayerEntry& layer : layers) n += static_cast<int>(layer.matrices.size());
    return n;
}

ModelMap build_model_map(const std::vector<std::string>& names, const SchemeSpec& scheme) {
    std::vector<std::pair<Role, std::regex>> compiled;
    compiled.reserve(scheme.patterns.size());
    for (const RolePattern& p : scheme.patterns) {
        compiled.emplace_back(p.role, std::regex(p.regex));
    }

    // Sort a copy so the result is independent of input order.
    std::vector<std::string> sorted_names = names;
    std::sort(sorted_names.begin(), sorted_names.end());

    std::map<int, LayerEntry> layers;
    for (const std::string& name : sorted_names) {
        for (const auto& [role, regex] : compiled) {
            std::smatch m;
            if (!std::regex_match(name, m, regex)) continue;
            const int layer = std::stoi(m[1]);
            LayerEntry& entry = layers[layer];
            entry.index = layer;
            auto [it, inserted] = entry.matrices.emplace(role, name);
            if (!inserted) {
                throw IngestError("duplicate tensor for layer " + std::to_string(layer) +
                                  " role " + role_name(role) + ": '" + it->second + "' and '" +
                                  name + "'");
            }
            break;
        }
    }

    if (layers.empty()) {
        throw IngestError("zero layers matched scheme '" + scheme.name + "'");
    }

    ModelMap map;
    map.num_layers = layers.rbegin()->first + 1;
    for (int i = 0; i < map.num_layers; ++i) {
        auto it = layers.find(i);
        if (it == layers.end()) {
            LayerEntry empty;
            empty.index = i;
            map.layers.push_back(empty);
            map.warnings.push_back("layer " + std::to_string(i) + ": no matrices matched");
            continue;
        }
        for (Role role : kAnalysisRoles) {
            if (!it->second.matrices.count(role)) {
                map.warnings.push_back("layer " + std::to_string(i) + ": missing role " +
                                       role_name(role));
            }
        }
        map.layers.push_back(std::move(it->second));
    }
    return map;
}

ModelConfig ModelConfig::llama_style(std::string name, std::int64_t hidden,
                                     std::int64_t intermediate, int layers) {
    ModelConfig config;
    config.name = std::move(name);
    config.hidden_dim = hidden;
    config.intermediate_dim = intermediate;
    config.num_layers = layers;
    config.roles = {
        {Role::q, hidden, hidden},        {Role::k, hidden, hidden},
        {Role::v, hidden, hidden},        {Role::o, hidden, hidden},
        {Role::gate, intermediate, hidden}, {Role::down, hidden, intermediate},
        {Role::up, intermediate, hidden},
    };
    return config;
}

ModelConfig ModelConfig::llama2_7b() { return llama_style("llama2-7b", 4096, 11008, 32); }

}  // namespace htmoe
