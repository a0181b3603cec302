// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#include "htmoe/json_io.hpp"

#include <cmath>
#include <ctime>
#include <iomanip>

#include "htmoe/errors.hpp"

namespace htmoe {

namespace {

const json* require(const json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw IngestError(std::string(where) + ": missing key '" + key + "'");
    }
    return &*it;
}

void require_type(const char* key, const char* where, bool ok) {
    if (!ok) throw IngestError(std::string(where) + ": key '" + key + "' has the wrong type");
}

double number_at(const json& j, const char* key, const char* where) {
    const json* v = require(j, key, where);
    require_type(key, where, v->is_number());
    return v->get<double>();
}

std::int64_t integer_at(const json& j, const char* key, const char* where) {
    const json* v = require(j, key, where);
    require_type(key, where, v->is_number_integer());
    return v->get<std::int64_t>();
}

std::string string_at(const json& j, const char* key, const char* where) {
    const json* v = require(j, key, where);
    require_type(key, where, v->is_string());
    return v->get<std::string>();
}

const json& array_at(const json& j, const char* key, const char* where) {
    const json* v = require(j, key, where);
    require_type(key, where, v->is_array());
    return *v;
}

const json& object_at(const json& j, const char* key, const char* where) {
    const json* v = require(j, key, where);
    require_type(key, where, v->is_object());
    return *v;
}

void require_number_array(const json& j, const char* key, const char* where) {
    for (const json& v : array_at(j, key, where)) {
        require_type(key, where, v.is_number());
    }
}

}  // namespace

json metrics_report_to_json(const MetricsReport& report) {
    json layers = json::array();
    for (const LayerMetrics& layer : report.layers) {
        json matrices = json::array();
        for (const MatrixMetrics& m : layer.per_matrix) {
            matrices.push_back({{"tensor_name", m.tensor_name},
                                {"role", m.role},
                                {"rows", m.rows},
                                {"cols", m.cols},
                                {"pl_alpha_hill", m.pl_alpha_hill},
                                {"alpha_hat", m.alpha_hat},
                                {"stable_rank", m.stable_rank},
                                {"log_spectral_norm", m.log_spectral_norm},
                                {"lambda_min", m.tail.lambda_min},
                                {"k", m.tail.k}});
        }
        layers.push_back({{"layer_index", layer.layer_index},
                          {"pl_alpha_hill", layer.layer_alpha_hill},
                          {"alpha_hat", layer.layer_alpha_hat},
                          {"stable_rank", layer.layer_stable_rank},
                          {"matrices", std::move(matrices)},
                          {"skipped", layer.skipped}});
    }
    return {{"model_id", report.model_id},
            {"generated_at", report.generated_at},
            {"tool_version", report.tool_version},
            {"settings",
             {{"bins", report.settings.bins},
              {"log_base", report.settings.log_base},
              {"aggregation", report.settings.aggregation},
              {"scheme", report.settings.scheme}}},
            {"layers", std::move(layers)}};
}

MetricsReport metrics_report_from_json(const json& j) {
    validate_metrics_json(j);
    MetricsReport report;
    report.model_id = j["model_id"];
    report.generated_at = j["generated_at"];
    report.tool_version = j["tool_version"];
    report.settings.bins = j["settings"]["bins"];
    report.settings.log_base = j["settings"]["log_base"];
    report.settings.aggregation = j["settings"]["aggregation"];
    report.settings.scheme = j["settings"]["scheme"];
    for (const json& jl : j["layers"]) {
        LayerMetrics layer;
        layer.layer_index = jl["layer_index"];
        layer.layer_alpha_hill = jl["pl_alpha_hill"];
        layer.layer_alpha_hat = jl["alpha_hat"];
        layer.layer_stable_rank = jl["stable_rank"];
        for (const json& jm : jl["matrices"]) {
            MatrixMetrics m;
            m.tensor_name = jm["tensor_name"];
            m.role = jm["role"];
            m.rows = jm["rows"];
            m.cols = jm["cols"];
            m.pl_alpha_hill = jm["pl_alpha_hill"];
            m.alpha_hat = jm["alpha_hat"];
            m.stable_rank = jm["stable_rank"];
            m.log_spectral_norm = jm["log_spectral_norm"];
            m.tail.lambda_min = jm["lambda_min"];
            m.tail.k = jm["k"];
            m.tail.alpha = m.pl_alpha_hill;
            layer.per_matrix.push_back(std::move(m));
        }
        for (const json& js : jl["skipped"]) layer.skipped.push_back(js.get<std::string>());
        report.layers.push_back(std::move(layer));
    }
    return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
    out << "layer,role,tensor_name,rows,cols,pl_alpha_hill,alpha_hat,stable_rank,"
           "log_spectral_norm,lambda_min,k\n";
    out << std::setprecision(17);
    for (const LayerMetrics& layer : report.layers) {
        for (const MatrixMetrics& m : layer.per_matrix) {
            out << layer.layer_index << ',' << m.role << ',' << m.tensor_name << ',' << m.rows
                << ',' << m.cols << ',' << m.pl_alpha_hill << ',' << m.alpha_hat << ','
                << m.stable_rank << ',' << m.log_spectral_norm << ',' << m.tail.lambda_min << ','
                << m.tail.k << '\n';
        }
    }
}

json plan_to_json(const AllocationPlan& plan) {
    json raw = json::array();
    for (double a : plan.raw_allocation) raw.push_back(a);
    return {{"total", plan.config.total_experts},
            {"beta", plan.config.beta},
            {"mode", plan.metric_name == "pattern" ? "pattern"
                                                   : repair_mode_name(plan.config.repair_mode)},
            {"metric", plan.metric_name},
            {"metric_values", plan.metric_values},
            {"raw", std::move(raw)},
            {"experts", plan.experts}};
}

AllocationPlan plan_from_json(const json& j) {
    validate_plan_json(j);
    AllocationPlan plan;
    plan.config.total_experts = j["total"];
    plan.config.beta = j["beta"];
    const std::string mode = j["mode"];
    plan.config.repair_mode =
        mode == "paper_literal" ? RepairMode::paper_literal : RepairMode::largest_remainder;
    plan.metric_name = j.value("metric", mode == "pattern" ? "pattern" : "");
    plan.metric_values = j["metric_values"].get<std::vector<double>>();
    plan.raw_allocation = j["raw"].get<std::vector<double>>();
    plan.experts = j["experts"].get<std::vector<int>>();
    return plan;
}

json params_report_to_json(const ParamCountReport& report, const std::string& config_name,
                           int rank, std::optional<std::int64_t> base_params) {
    json per_layer = json::array();
    for (const auto& lp : report.per_layer) {
        per_layer.push_back({{"layer", lp.layer}, {"experts", lp.experts}, {"params", lp.params}});
    }
    json j = {{"config", config_name},
              {"rank", rank},
              {"expert_params", report.expert_params},
              {"router_params", report.router_params},
              {"total", report.total},
              {"per_layer", std::move(per_layer)}};
    if (base_params) {
        j["base_params"] = *base_params;
        j["trainable_ratio"] =
            static_cast<double>(report.total) / static_cast<double>(*base_params);
    }
    return j;
}

void validate_metrics_json(const json& j) {
    const char* where = "metrics";
    if (!j.is_object()) throw IngestError("metrics: document is not a JSON object");
    string_at(j, "model_id", where);
    string_at(j, "generated_at", where);
    string_at(j, "tool_version", where);
    const json& settings = object_at(j, "settings", where);
    integer_at(settings, "bins", "metrics.settings");
    string_at(settings, "log_base", "metrics.settings");
    string_at(settings, "aggregation", "metrics.settings");
    string_at(settings, "scheme", "metrics.settings");
    const json& layers = array_at(j, "layers", where);
    std::int64_t prev_index = -1;
    for (const json& jl : layers) {
        if (!jl.is_object()) throw IngestError("metrics.layers: entry is not an object");
        const std::int64_t index = integer_at(jl, "layer_index", "metrics.layers");
        if (index <= prev_index) {
            throw IngestError("metrics.layers: key 'layer_index' values must strictly increase");
        }
        prev_index = index;
        number_at(jl, "pl_alpha_hill", "metrics.layers");
        number_at(jl, "alpha_hat", "metrics.layers");
        number_at(jl, "stable_rank", "metrics.layers");
        for (const json& jm : array_at(jl, "matrices", "metrics.layers")) {
            const char* mw = "metrics.layers.matrices";
            string_at(jm, "tensor_name", mw);
            string_at(jm, "role", mw);
            integer_at(jm, "rows", mw);
            integer_at(jm, "cols", mw);
            number_at(jm, "pl_alpha_hill", mw);
            number_at(jm, "alpha_hat", mw);
            number_at(jm, "stable_rank", mw);
            number_at(jm, "log_spectral_norm", mw);
            number_at(jm, "lambda_min", mw);
            integer_at(jm, "k", mw);
        }
        for (const json& js : array_at(jl, "skipped", "metrics.layers")) {
            require_type("skipped", "metrics.layers", js.is_string());
        }
    }
}

void validate_plan_json(const json& j) {
    const char* where = "plan";
    if (!j.is_object()) throw IngestError("plan: document is not a JSON object");
    const std::int64_t total = integer_at(j, "total", where);
    number_at(j, "beta", where);
    const std::string mode = string_at(j, "mode", where);
    if (mode != "largest_remainder" && mode != "paper_literal" && mode != "pattern") {
        throw IngestError("plan: key 'mode' must be largest_remainder, paper_literal or pattern");
    }
    require_number_array(j, "metric_values", where);
    require_number_array(j, "raw", where);
    const json& experts = array_at(j, "experts", where);
    if (experts.empty()) throw IngestError("plan: key 'experts' must be a nonempty array");
    std::int64_t sum = 0;
    for (const json& e : experts) {
        require_type("experts", where, e.is_number_integer());
        const auto v = e.get<std::int64_t>();
        if (v < 0) throw IngestError("plan: key 'experts' contains a negative count");
        sum += v;
    }
    if (sum != total) {
        throw IngestError("plan: key 'experts' sums to " + std::to_string(sum) +
                          ", key 'total' says " + std::to_string(total));
    }
    const auto m = experts.size();
    if (!j["raw"].empty() && j["raw"].size() != m) {
        throw IngestError("plan: key 'raw' length differs from 'experts'");
    }
    if (!j["metric_values"].empty() && j["metric_values"].size() != m) {
        throw IngestError("plan: key 'metric_values' length differs from 'experts'");
    }
}

void validate_params_json(const json& j) {
    const char* where = "params";
    if (!j.is_object()) throw IngestError("params: document is not a JSON object");
    string_at(j, "config", where);
    integer_at(j, "rank", where);
    const std::int64_t expert = integer_at(j, "expert_params", where);
    const std::int64_t router = integer_at(j, "router_params", where);
    const std::int64_t total = integer_at(j, "total", where);
    if (expert + router != total) {
        throw IngestError("params: key 'total' does not equal expert_params + router_params");
    }
    for (const json& lp : array_at(j, "per_layer", where)) {
        integer_at(lp, "layer", "params.per_layer");
        integer_at(lp, "experts", "params.per_layer");
        integer_at(lp, "params", "params.per_layer");
    }
}

void validate_sim_json(const json& j) {
    const char* where = "sim";
    if (!j.is_object()) throw IngestError("sim: document is not a JSON object");
    object_at(j, "config", where);
    for (const json& t : array_at(j, "tokens", where)) {
        require_number_array(t, "probs", "sim.tokens");
        array_at(t, "selected", "sim.tokens");
        require_number_array(t, "gates", "sim.tokens");
    }
    const json& aux = object_at(j, "aux", where);
    require_number_array(aux, "f", "sim.aux");
    require_number_array(aux, "P", "sim.aux");
    number_at(aux, "loss", "sim.aux");
    const json& grad = object_at(j, "gradient_check", where);
    number_at(grad, "max_rel_err", "sim.gradient_check");
}

std::string iso8601_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

}  // namespace htmoe
