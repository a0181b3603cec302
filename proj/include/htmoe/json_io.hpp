// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "htmoe/allocate.hpp"
#include "htmoe/htsr.hpp"

namespace htmoe {

using nlohmann::json;

// On-disk report carrying Figure-2-style per-layer metric curves.
struct MetricsSettings {
    int bins = kDefaultFixFingerBins;
    std::string log_base = "e";
    std::string aggregation = "mean";
    std::string scheme = "llama-style";
};

struct MetricsReport {
    std::string model_id;
    std::string generated_at;  // ISO 8601 UTC; excluded from determinism checks
    std::string tool_version;
    MetricsSettings settings;
    std::vector<LayerMetrics> layers;  // sorted by layer index
};

json metrics_report_to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const json& j);

// One row per matrix, for plotting per-layer metric curves externally.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

// Plan files. Baselines use mode "pattern", beta 0 and empty metric_values.
json plan_to_json(const AllocationPlan& plan);
AllocationPlan plan_from_json(const json& j);

json params_report_to_json(const ParamCountReport& report, const std::string& config_name,
                           int rank, std::optional<std::int64_t> base_params);

// Structural schema validation; each throws IngestError naming the first
// offending key. The schemas are documented in the README.
void validate_metrics_json(const json& j);
void validate_plan_json(const json& j);
void validate_params_json(const json& j);
void validate_sim_json(const json& j);

// Current time as an ISO 8601 UTC string, e.g. "2026-08-15T12:30:00Z".
std::string iso8601_utc_now();

}  // namespace htmoe
