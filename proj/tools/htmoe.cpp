// Copyright (c) 2026 htmoe contributors
// SPDX-License-Identifier: Apache-2.0
//
// htmoe: spectral layer diagnostics and LoRA-expert allocation planning.
//
// Subcommands:
//   analyze   checkpoint -> per-layer shape metrics (JSON, optional CSV)
//   allocate  metrics -> integer expert plan
//   baseline  group pattern -> expert plan
//   params    plan + model config -> trainable-parameter report
//   simulate  seeded MoE reference layer -> routing/loss/gradient report
//
// Exit codes: 0 success, 1 usage error, 2 input error, 3 invariant failure.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "htmoe/allocate.hpp"
#include "htmoe/errors.hpp"
#include "htmoe/esd.hpp"
#include "htmoe/htsr.hpp"
#include "htmoe/json_io.hpp"
#include "htmoe/model_map.hpp"
#include "htmoe/moe.hpp"
#include "htmoe/safetensors.hpp"
#include "htmoe/version.hpp"

namespace {

using htmoe::json;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw htmoe::IngestError(path + ": cannot open for writing");
    out << text;
    if (!out) throw htmoe::IngestError(path + ": write failed");
}

void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw htmoe::IngestError(path + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw htmoe::IngestError(path + ": " + e.what());
    }
}

std::string model_id_from_path(const std::string& model_path) {
    std::filesystem::path p(model_path);
    if (p.filename().empty()) p = p.parent_path();
    std::string id = p.filename().string();
    return id.empty() ? model_path : id;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOptions {
    std::string model;
    std::string scheme = "llama-style";
    int bins = htmoe::kDefaultFixFingerBins;
    std::string aggregation = "mean";
    unsigned threads = 0;  // 0 = hardware default
    std::string out;
    std::string csv;
};

void run_analyze(const AnalyzeOptions& opt) {
    const std::vector<htmoe::TensorRecord> records = htmoe::read_checkpoint(opt.model);

    std::vector<std::string> names;
    names.reserve(records.size());
    for (const auto& r : records) names.push_back(r.name);
    const htmoe::ModelMap map = htmoe::build_model_map(names, htmoe::SchemeSpec::llama_style());
    for (const std::string& w : map.warnings) std::cerr << "warning: " << w << "\n";

    std::map<std::string, const htmoe::TensorRecord*> by_name;
    for (const auto& r : records) by_name[r.name] = &r;

    // Work list in deterministic (layer, role) order.
    struct Item {
        int layer;
        htmoe::Role role;
        const htmoe::TensorRecord* record;
    };
    std::vector<Item> items;
    for (const htmoe::LayerEntry& layer : map.layers) {
        for (htmoe::Role role : htmoe::kAnalysisRoles) {
            auto it = layer.matrices.find(role);
            if (it == layer.matrices.end()) continue;
            const htmoe::TensorRecord* rec = by_name.at(it->second);
            if (!rec->analyzable()) {
                std::cerr << "warning: tensor '" << rec->name
                          << "' is not a 2-D matrix; skipping\n";
                continue;
            }
            items.push_back({layer.index, role, rec});
        }
    }

    // Fan ESD computations out over worker threads; results land in
    // pre-assigned slots so the merge order never depends on scheduling.
    std::vector<htmoe::ESD> esds(items.size());
    std::vector<std::exception_ptr> failures(items.size());
    std::atomic<size_t> cursor{0};
    unsigned thread_count = opt.threads ? opt.threads : std::thread::hardware_concurrency();
    if (thread_count == 0) thread_count = 1;
    if (!items.empty() && thread_count > items.size()) {
        thread_count = static_cast<unsigned>(items.size());
    }

    auto worker = [&] {
        while (true) {
            const size_t i = cursor.fetch_add(1);
            if (i >= items.size()) break;
            try {
                esds[i] = htmoe::compute_esd(*items[i].record);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < thread_count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }

    htmoe::MetricsReport report;
    report.model_id = model_id_from_path(opt.model);
    report.generated_at = htmoe::iso8601_utc_now();
    report.tool_version = htmoe::kToolVersion;
    report.settings.bins = opt.bins;
    report.settings.aggregation = opt.aggregation;
    report.settings.scheme = opt.scheme;
    const htmoe::Aggregation aggregation =
        opt.aggregation == "median" ? htmoe::Aggregation::median : htmoe::Aggregation::mean;

    size_t item_pos = 0;
    int total_matrices = 0;
    int total_skipped = 0;
    for (const htmoe::LayerEntry& layer : map.layers) {
        std::vector<std::pair<std::string, htmoe::ESD>> layer_esds;
        std::map<std::string, std::string> roles;
        while (item_pos < items.size() && items[item_pos].layer == layer.index) {
            const Item& item = items[item_pos];
            roles[item.record->name] = htmoe::role_name(item.role);
            layer_esds.emplace_back(item.record->name, std::move(esds[item_pos]));
            ++item_pos;
        }
        if (layer_esds.empty()) continue;
        htmoe::LayerMetrics metrics;
        try {
            metrics = htmoe::layer_metrics(layer_esds, layer.index, opt.bins, aggregation);
        } catch (const htmoe::SpectrumError& e) {
            std::cerr << "warning: layer " << layer.index << " dropped: " << e.what() << "\n";
            continue;
        }
        for (htmoe::MatrixMetrics& m : metrics.per_matrix) m.role = roles[m.tensor_name];
        for (const std::string& s : metrics.skipped) {
            std::cerr << "warning: skipped " << s << "\n";
        }
        total_matrices += static_cast<int>(metrics.per_matrix.size());
        total_skipped += static_cast<int>(metrics.skipped.size());
        report.layers.push_back(std::move(metrics));
    }
    if (report.layers.empty()) {
        throw htmoe::IngestError(opt.model + ": no layer produced analyzable spectra");
    }

    write_json_file(opt.out, htmoe::metrics_report_to_json(report));
    if (!opt.csv.empty()) {
        std::ostringstream csv;
        htmoe::write_metrics_csv(csv, report);
        write_text_file(opt.csv, csv.str());
    }
    std::cout << "analyzed " << report.layers.size() << " layers, " << total_matrices
              << " matrices (" << total_skipped << " skipped) -> " << opt.out << "\n";
}

// --------------------------------------------------------------- allocate

struct AllocateOptions {
    std::string metrics;
    int total = 0;
    double beta = 2.5;
    std::string metric = "pl_alpha_hill";
    std::string repair = "largest-remainder";
    std::string out;
};

void run_allocate(const AllocateOptions& opt) {
    const htmoe::MetricsReport report = htmoe::metrics_report_from_json(read_json_file(opt.metrics));
    if (report.layers.empty()) {
        throw htmoe::IngestError(opt.metrics + ": metrics file has no layers");
    }

    std::vector<double> v;
    for (const htmoe::LayerMetrics& layer : report.layers) {
        if (opt.metric == "pl_alpha_hill") {
            v.push_back(layer.layer_alpha_hill);
        } else if (opt.metric == "alpha_hat") {
            v.push_back(layer.layer_alpha_hat);
        } else {
            v.push_back(layer.layer_stable_rank);
        }
    }

    htmoe::AllocationConfig config;
    config.total_experts = opt.total;
    config.beta = opt.beta;
    config.repair_mode = opt.repair == "paper-literal" ? htmoe::RepairMode::paper_literal
                                                       : htmoe::RepairMode::largest_remainder;
    htmoe::AllocationPlan plan = htmoe::allocate(v, config);
    plan.metric_name = opt.metric;
    write_json_file(opt.out, htmoe::plan_to_json(plan));

    std::printf("%5s  %12s  %10s  %7s\n", "layer", opt.metric.c_str(), "raw", "experts");
    for (size_t i = 0; i < v.size(); ++i) {
        std::printf("%5d  %12.4f  %10.4f  %7d\n", report.layers[i].layer_index, v[i],
                    plan.raw_allocation[i], plan.experts[i]);
    }
    std::printf("total %d experts over %zu layers (beta %.2f, %s) -> %s\n", opt.total, v.size(),
                opt.beta, htmoe::repair_mode_name(config.repair_mode).c_str(), opt.out.c_str());
}

// --------------------------------------------------------------- baseline

struct BaselineOptions {
    std::string pattern;
    int layers = 0;
    std::string out;
};

void run_baseline(const BaselineOptions& opt) {
    htmoe::PatternSpec spec;
    spec.groups = htmoe::parse_pattern(opt.pattern);
    spec.num_layers = opt.layers;
    const std::vector<int> experts = htmoe::mola_pattern(spec);

    htmoe::AllocationPlan plan;
    plan.experts = experts;
    plan.metric_name = "pattern";
    plan.config.beta = 0.0;
    for (int s : experts) {
        plan.config.total_experts += s;
        plan.raw_allocation.push_back(static_cast<double>(s));
    }
    write_json_file(opt.out, htmoe::plan_to_json(plan));
    std::cout << "pattern " << opt.pattern << " over " << opt.layers << " layers: total "
              << plan.config.total_experts << " experts -> " << opt.out << "\n";
}

// ----------------------------------------------------------------- params

struct ParamsOptions {
    std::string config;
    std::string plan;
    int rank = 8;
    std::optional<std::int64_t> base_params;
    std::string out;
};

htmoe::ModelConfig load_model_config(const std::string& spec) {
    if (spec == "llama2-7b") return htmoe::ModelConfig::llama2_7b();
    const json j = read_json_file(spec);
    if (!j.is_object() || !j.contains("hidden_dim") || !j.contains("intermediate_dim") ||
        !j.contains("num_layers")) {
        throw htmoe::IngestError(spec +
                                 ": model config needs hidden_dim, intermediate_dim, num_layers");
    }
    return htmoe::ModelConfig::llama_style(j.value("name", spec), j["hidden_dim"],
                                           j["intermediate_dim"], j["num_layers"]);
}

void run_params(const ParamsOptions& opt) {
    const htmoe::ModelConfig model = load_model_config(opt.config);
    const htmoe::AllocationPlan plan = htmoe::plan_from_json(read_json_file(opt.plan));
    const htmoe::ParamCountReport report =
        htmoe::count_trainable_params(model, plan.experts, opt.rank);

    write_json_file(opt.out, htmoe::params_report_to_json(report, model.name, opt.rank,
                                                          opt.base_params));
    std::cout << "trainable parameters: " << report.total << " (expert " << report.expert_params
              << ", router " << report.router_params << ")\n";
    if (opt.base_params) {
        std::printf("ratio vs base model: %.4f%%\n",
                    100.0 * static_cast<double>(report.total) /
                        static_cast<double>(*opt.base_params));
    }
}

// --------------------------------------------------------------- simulate

struct SimulateOptions {
    int out_dim = 16;
    int in_dim = 16;
    int experts = 4;
    int topk = 2;
    int rank = 4;
    std::uint64_t seed = 0;
    int batch = 32;
    std::string out;
};

void run_simulate(const SimulateOptions& opt) {
    htmoe::MoELayer layer = htmoe::init_moe_layer(opt.out_dim, opt.in_dim, opt.experts, opt.rank,
                                                  opt.topk, opt.seed);

    std::mt19937_64 rng(opt.seed + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_vector = [&](int n) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x[i] = normal(rng);
        return x;
    };

    // Zero-init pass-through must hold before any expert update.
    for (int t = 0; t < 4; ++t) {
        const Eigen::VectorXd x = random_vector(opt.in_dim);
        const Eigen::VectorXd h = htmoe::moe_forward(layer, x);
        const Eigen::VectorXd base = layer.w0 * x;
        if ((h.array() != base.array()).any()) {
            throw htmoe::InvariantError("zero-init pass-through violated");
        }
    }

    // Give the experts nonzero weights so routing and gradients are exercised.
    for (auto& b : layer.b) {
        for (Eigen::Index r = 0; r < b.rows(); ++r) {
            for (Eigen::Index c = 0; c < b.cols(); ++c) b(r, c) = 0.02 * normal(rng);
        }
    }

    std::optional<bool> lora_equivalence;
    if (opt.experts == 1 && opt.topk == 1) {
        const Eigen::VectorXd x = random_vector(opt.in_dim);
        const Eigen::VectorXd plain = layer.w0 * x + layer.a[0] * (layer.b[0] * x);
        if ((htmoe::moe_forward(layer, x) - plain).cwiseAbs().maxCoeff() > 1e-12) {
            throw htmoe::InvariantError("single-expert layer does not reduce to plain LoRA");
        }
        lora_equivalence = true;
    }

    json tokens = json::array();
    std::vector<htmoe::RouterOutput> outputs;
    for (int t = 0; t < opt.batch; ++t) {
        const Eigen::VectorXd x = random_vector(opt.in_dim);
        htmoe::RouterOutput routed = htmoe::route(layer, x);
        double gate_sum = 0.0;
        for (double g : routed.gates) gate_sum += g;
        if (std::abs(gate_sum - 1.0) > 1e-12) {
            throw htmoe::InvariantError("gate normalization violated");
        }
        htmoe::moe_forward(layer, x);
        tokens.push_back({{"probs", routed.probs},
                          {"selected", routed.selected},
                          {"gates", routed.gates}});
        outputs.push_back(std::move(routed));
    }
    const htmoe::AuxLossReport aux = htmoe::aux_load_balance_loss(outputs, opt.experts);

    const Eigen::VectorXd x = random_vector(opt.in_dim);
    const Eigen::VectorXd upstream = random_vector(opt.out_dim);
    const double max_rel_err = htmoe::gradient_check(layer, x, upstream);
    constexpr double kGradTolerance = 1e-5;
    if (max_rel_err >= kGradTolerance) {
        throw htmoe::InvariantError("gradient check failed: max relative error " +
                                    std::to_string(max_rel_err));
    }

    json checks = {{"zero_init_passthrough", true}, {"gate_normalization", true}};
    if (lora_equivalence) checks["lora_equivalence"] = *lora_equivalence;
    const json sim = {{"config",
                       {{"out_dim", opt.out_dim},
                        {"in_dim", opt.in_dim},
                        {"experts", opt.experts},
                        {"topk", opt.topk},
                        {"rank", opt.rank},
                        {"seed", opt.seed},
                        {"batch", opt.batch}}},
                      {"tokens", std::move(tokens)},
                      {"aux",
                       {{"f", aux.dispatch_fraction},
                        {"P", aux.mean_prob},
                        {"loss", aux.loss}}},
                      {"gradient_check",
                       {{"max_rel_err", max_rel_err}, {"tolerance", kGradTolerance}}},
                      {"checks", std::move(checks)}};
    write_json_file(opt.out, sim);
    std::printf("aux loss %.6f, gradient max relative error %.3g -> %s\n", aux.loss, max_rel_err,
                opt.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layer-wise spectral diagnostics and LoRA-expert allocation"};
    app.set_version_flag("--version", htmoe::kToolVersion);
    app.require_subcommand(1);

    AnalyzeOptions analyze_opt;
    CLI::App* analyze = app.add_subcommand("analyze", "Compute per-layer shape metrics");
    analyze->set_config("--config-file");
    analyze->add_option("--model", analyze_opt.model, "Checkpoint file or directory")->required();
    analyze->add_option("--scheme", analyze_opt.scheme, "Tensor naming scheme")
        ->check(CLI::IsMember({"llama-style"}));
    analyze->add_option("--bins", analyze_opt.bins, "Histogram bins for the tail threshold")
        ->check(CLI::PositiveNumber);
    analyze->add_option("--aggregation", analyze_opt.aggregation, "Layer aggregation")
        ->check(CLI::IsMember({"mean", "median"}));
    analyze->add_option("--threads", analyze_opt.threads, "Worker threads (default: hardware)");
    analyze->add_option("--out", analyze_opt.out, "Metrics JSON output path")->required();
    analyze->add_option("--csv", analyze_opt.csv, "Optional per-matrix CSV output path");
    analyze->callback([&] { run_analyze(analyze_opt); });

    AllocateOptions allocate_opt;
    CLI::App* allocate = app.add_subcommand("allocate", "Turn metrics into an expert plan");
    allocate->set_config("--config-file");
    allocate->add_option("--metrics", allocate_opt.metrics, "Metrics JSON from analyze")
        ->required();
    allocate->add_option("--total", allocate_opt.total, "Total expert budget T")
        ->required()
        ->check(CLI::PositiveNumber);
    allocate->add_option("--beta", allocate_opt.beta, "Concentration exponent");
    allocate->add_option("--metric", allocate_opt.metric, "Layer metric driving the plan")
        ->check(CLI::IsMember({"pl_alpha_hill", "alpha_hat", "stable_rank"}));
    allocate->add_option("--repair", allocate_opt.repair, "Rounding repair mode")
        ->check(CLI::IsMember({"largest-remainder", "paper-literal"}));
    allocate->add_option("--out", allocate_opt.out, "Plan JSON output path")->required();
    allocate->callback([&] { run_allocate(allocate_opt); });

    BaselineOptions baseline_opt;
    CLI::App* baseline = app.add_subcommand("baseline", "Group-pattern baseline plan");
    baseline->set_config("--config-file");
    baseline->add_option("--pattern", baseline_opt.pattern,
                         "Digit string (2468) or comma list (4,6,8,10)")
        ->required();
    baseline->add_option("--layers", baseline_opt.layers, "Number of layers")
        ->required()
        ->check(CLI::PositiveNumber);
    baseline->add_option("--out", baseline_opt.out, "Plan JSON output path")->required();
    baseline->callback([&] { run_baseline(baseline_opt); });

    ParamsOptions params_opt;
    CLI::App* params = app.add_subcommand("params", "Count trainable parameters for a plan");
    params->set_config("--config-file");
    params->add_option("--config", params_opt.config, "Model preset (llama2-7b) or config JSON")
        ->required();
    params->add_option("--plan", params_opt.plan, "Plan JSON")->required();
    params->add_option("--rank", params_opt.rank, "LoRA rank r")->check(CLI::PositiveNumber);
    std::int64_t base_params = 0;
    CLI::Option* base_opt =
        params->add_option("--base-params", base_params, "Base model parameter count")
            ->check(CLI::PositiveNumber);
    params->add_option("--out", params_opt.out, "Report JSON output path")->required();
    params->callback([&] {
        if (*base_opt) params_opt.base_params = base_params;
        run_params(params_opt);
    });

    SimulateOptions simulate_opt;
    CLI::App* simulate = app.add_subcommand("simulate", "Run the MoE reference layer checks");
    simulate->set_config("--config-file");
    simulate->add_option("--out-dim", simulate_opt.out_dim)->check(CLI::PositiveNumber);
    simulate->add_option("--in-dim", simulate_opt.in_dim)->check(CLI::PositiveNumber);
    simulate->add_option("--experts", simulate_opt.experts)->check(CLI::PositiveNumber);
    simulate->add_option("--topk", simulate_opt.topk)->check(CLI::PositiveNumber);
    simulate->add_option("--rank", simulate_opt.rank)->check(CLI::PositiveNumber);
    simulate->add_option("--seed", simulate_opt.seed);
    simulate->add_option("--batch", simulate_opt.batch)->check(CLI::PositiveNumber);
    simulate->add_option("--out", simulate_opt.out, "Simulation JSON output path")->required();
    simulate->callback([&] { run_simulate(simulate_opt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const htmoe::InvariantError& e) {
        std::cerr << "invariant failure: " << e.what() << "\n";
        return 3;
    } catch (const htmoe::SpectrumError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const htmoe::IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
