// Command-line front end: `theta` estimates one counterfactual functional,
// `attribute` produces the Shapley / path report, `simulate` runs the seeded
// replication benchmarks. Exit codes: 0 success, 2 config/schema error,
// 3 estimation failure.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "mrattrib/mrattrib.hpp"

namespace {

using namespace mrattrib;

struct Overrides {
    std::string config_path;
    std::optional<std::string> data, change, mode, method, out, format, scenario;
    std::optional<uint64_t> seed;
    std::optional<int> threads, design, draws, K, folds, bootstrap_draws;
};

RunConfig resolve_config(const Overrides& ov, const std::string& command) {
    RunConfig cfg = ov.config_path.empty() ? parse_run_config(ordered_json::object(), command)
                                           : load_run_config(ov.config_path, command);
    // Flags override config-file values.
    if (ov.data) cfg.data_path = *ov.data;
    if (ov.change) cfg.change = *ov.change;
    if (ov.mode) {
        if (*ov.mode == "shapley") cfg.mode = AttributionMode::Shapley;
        else if (*ov.mode == "path") cfg.mode = AttributionMode::Path;
        else if (*ov.mode == "both") cfg.mode = AttributionMode::Both;
        else throw ConfigError("unknown mode '" + *ov.mode + "'");
    }
    if (ov.method) {
        if (*ov.method == "MR") cfg.method = Method::MultiplyRobust;
        else if (*ov.method == "regression") cfg.method = Method::RegressionOnly;
        else if (*ov.method == "reweighting") cfg.method = Method::ReweightingOnly;
        else throw ConfigError("unknown method '" + *ov.method + "'");
    }
    if (ov.seed) {
        cfg.seed = *ov.seed;
        cfg.seed_set = true;
        cfg.regression.cv_seed = cfg.seed;
        cfg.classifier.cv_seed = cfg.seed;
        cfg.split.seed = cfg.seed;
    }
    if (ov.threads) cfg.threads = *ov.threads;
    if (ov.out) cfg.output_path = *ov.out;
    if (ov.format) cfg.output_format = *ov.format;
    if (ov.design) cfg.design = *ov.design;
    if (ov.draws) cfg.draws = *ov.draws;
    if (ov.scenario) cfg.scenario = *ov.scenario;
    if (ov.K) cfg.design2_K = *ov.K;
    if (ov.folds) cfg.split.folds = *ov.folds;
    if (ov.bootstrap_draws) cfg.bootstrap_draws = *ov.bootstrap_draws;
    if (cfg.output_format != "json" && cfg.output_format != "csv")
        throw ConfigError("output format must be json or csv");
    return cfg;
}

ValidatedModel load_model(RunConfig& cfg) {
    if (cfg.data_path.empty()) throw ConfigError("config.data (or --data) is required");
    TwoSampleDataset data = read_dataset_csv(cfg.data_path);
    if (!cfg.regression_predictions.empty()) {
        auto table = read_precomputed_csv(cfg.regression_predictions);
        if (static_cast<long>(table->values.size()) != data.n())
            throw SchemaError("regression predictions cover " +
                              std::to_string(table->values.size()) + " rows, dataset has " +
                              std::to_string(data.n()));
        cfg.regression.precomputed = table;
    }
    if (!cfg.classifier_predictions.empty()) {
        auto table = read_precomputed_csv(cfg.classifier_predictions);
        if (static_cast<long>(table->values.size()) != data.n())
            throw SchemaError("classifier predictions cover " +
                              std::to_string(table->values.size()) + " rows, dataset has " +
                              std::to_string(data.n()));
        cfg.classifier.precomputed = table;
    }
    CausalStructure structure = cfg.build_structure(data);
    return validate_structure(std::move(data), std::move(structure));
}

void write_sidecar(const RunConfig& cfg, const EstimateDiagnostics& diag,
                   const std::vector<std::pair<long, long>>& fold_sizes) {
    ordered_json j = diagnostics_json(diag, fold_sizes);
    j["seed"] = cfg.seed;
    write_text_file(cfg.output_path + ".diag.json", j.dump(2) + "\n");
}

int cmd_theta(const Overrides& ov) {
    RunConfig cfg = resolve_config(ov, "theta");
    if (cfg.change.empty()) throw ConfigError("theta needs a change vector (config.change or --change)");
    ValidatedModel model = load_model(cfg);
    ChangeVector c = ChangeVector::from_string(cfg.change);
    if (c.size() != model.K() + 1)
        throw ConfigError("change vector length " + std::to_string(c.size()) +
                          " does not match K+1 = " + std::to_string(model.K() + 1));

    ThetaEngine engine(model, cfg.build_settings(), cfg.split);
    engine.set_functional(cfg.functional);
    ThetaEstimate est = engine.estimate(c, cfg.method);
    ConfidenceInterval ci = estimate_variance_ci(est, cfg.level);

    ordered_json out;
    out["c"] = c.to_string();
    out["theta"] = est.theta;
    out["se"] = ci.se;
    out["ci_lo"] = ci.lo;
    out["ci_hi"] = ci.hi;
    out["level"] = ci.level;
    out["v_hat"] = est.v_hat;
    out["n0"] = est.n0;
    out["n1"] = est.n1;
    ordered_json meta;
    meta["seed"] = cfg.seed;
    meta["method"] = method_name(cfg.method);
    meta["config"] = run_config_json(cfg);
    out["meta"] = std::move(meta);
    write_text_file(cfg.output_path, out.dump(2) + "\n");
    write_sidecar(cfg, est.diagnostics, engine.fold_sizes());
    std::cout << "theta(" << c.to_string() << ") = " << est.theta << " (se " << ci.se << ")\n";
    return 0;
}

int cmd_attribute(const Overrides& ov) {
    RunConfig cfg = resolve_config(ov, "attribute");
    ValidatedModel model = load_model(cfg);
    AttributionConfig ac;
    ac.mode = cfg.mode;
    ac.method = cfg.method;
    ac.bootstrap_draws = cfg.bootstrap_draws;
    ac.multiplier = cfg.multiplier;
    ac.seed = cfg.seed;
    ac.exact_cap = cfg.shapley_exact_cap;
    ac.allow_sampling = cfg.shapley_allow_sampling;
    ac.sample_permutations = cfg.shapley_permutations;
    ac.ci_level = cfg.level;
    AttributionReport report =
        attribute(model, cfg.functional, cfg.build_settings(), cfg.split, ac);

    ordered_json out = attribution_report_json(report);
    ordered_json meta;
    meta["seed"] = cfg.seed;
    meta["mode"] = report.mode;
    ordered_json learners;
    learners["regression"] = run_config_json(cfg)["regression"];
    learners["classifier"] = run_config_json(cfg)["classifier"];
    meta["learners"] = std::move(learners);
    meta["config"] = run_config_json(cfg);
    out["meta"] = std::move(meta);
    if (cfg.output_format == "csv") write_text_file(cfg.output_path, attribution_report_csv(report));
    else write_text_file(cfg.output_path, out.dump(2) + "\n");
    write_sidecar(cfg, report.diagnostics, report.fold_sizes);
    std::cout << "total change " << report.total_change << " (se " << report.total_change_se
              << "), report written to " << cfg.output_path << "\n";
    return 0;
}

int cmd_simulate(const Overrides& ov) {
    RunConfig cfg = resolve_config(ov, "simulate");
    MonteCarloConfig mc;
    mc.design = cfg.design;
    mc.draws = cfg.draws;
    mc.seed = cfg.seed;
    mc.threads = cfg.threads;
    mc.d2.K = cfg.design2_K;
    if (cfg.scenario == "correct") mc.scenario = Design1Scenario::Correct;
    else if (cfg.scenario == "mis_weights") mc.scenario = Design1Scenario::MisspecifiedWeights;
    else if (cfg.scenario == "mis_regression") mc.scenario = Design1Scenario::MisspecifiedRegression;
    else if (cfg.scenario == "mis_both") mc.scenario = Design1Scenario::MisspecifiedBoth;
    else throw ConfigError("unknown scenario '" + cfg.scenario + "'");
    if (mc.design != 1 && mc.design != 2) throw ConfigError("design must be 1 or 2");

    MCResult res = run_monte_carlo(mc);
    if (res.failures > 0)
        std::cerr << "warning: " << res.failures << " draws failed and were excluded\n";
    write_text_file(cfg.output_path, mc_result_csv(res));
    std::cout << "design " << mc.design << ", " << res.draws << " draws -> " << cfg.output_path
              << "\n";
    return res.failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiply-robust causal change attribution"};
    app.require_subcommand(1);
    Overrides ov;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", ov.config_path, "JSON config file");
        sub->add_option("--data", ov.data, "dataset CSV (overrides config)");
        sub->add_option("--seed", ov.seed, "RNG seed (overrides config)");
        sub->add_option("--threads", ov.threads, "worker thread cap");
        sub->add_option("--out", ov.out, "output path");
        sub->add_option("--format", ov.format, "output format: json|csv");
        sub->add_option("--method", ov.method, "estimator: MR|regression|reweighting");
    };

    CLI::App* theta = app.add_subcommand("theta", "estimate one counterfactual functional");
    add_common(theta);
    theta->add_option("--change", ov.change, "change vector, e.g. 100");

    CLI::App* attr = app.add_subcommand("attribute", "Shapley / path attribution report");
    add_common(attr);
    attr->add_option("--mode", ov.mode, "shapley|path|both");
    attr->add_option("--bootstrap", ov.bootstrap_draws, "bootstrap draw count");

    CLI::App* sim = app.add_subcommand("simulate", "seeded replication benchmarks");
    add_common(sim);
    sim->add_option("--design", ov.design, "benchmark design: 1|2");
    sim->add_option("--draws", ov.draws, "number of replication draws");
    sim->add_option("--scenario", ov.scenario,
                    "design 1 learners: correct|mis_weights|mis_regression|mis_both");
    sim->add_option("--K", ov.K, "design 2 chain length");

    CLI11_PARSE(app, argc, argv);

    try {
        if (theta->parsed()) return cmd_theta(ov);
        if (attr->parsed()) return cmd_attribute(ov);
        if (sim->parsed()) return cmd_simulate(ov);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 2;
    } catch (const StructureError& e) {
        std::cerr << "structure error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 3;
    }
}
