#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrattrib/attribution.hpp"
#include "mrattrib/estimator.hpp"
#include "mrattrib/io.hpp"

namespace mrattrib {

namespace detail {

inline void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                                const std::string& path) {
    if (!obj.is_object()) throw ConfigError("expected an object at " + path);
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' at " + path);
}

template <typename T>
inline T get_or(const ordered_json& obj, const std::string& key, const T& fallback,
                const std::string& path) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("invalid value for " + path + "." + key);
    }
}

}  // namespace detail

struct RunConfig {
    std::string command;  // theta | attribute | simulate
    std::string data_path;

    // structure
    std::vector<std::string> ordering;  // empty -> dataset column order
    std::vector<std::pair<std::string, std::vector<std::string>>> parents;
    std::vector<std::pair<std::string, std::string>> independence;
    bool all_independent = false;

    Functional functional = Functional::mean();
    std::string change;  // theta command
    AttributionMode mode = AttributionMode::Both;
    Method method = Method::MultiplyRobust;

    RegressorSpec regression = RegressorSpec::ols(2);
    std::string regression_family = "ols_poly";
    std::string regression_predictions;  // precomputed-learner file
    ClassifierSpec classifier = ClassifierSpec::logistic(2, 0.0);
    std::string classifier_family = "logistic_l2";
    std::string classifier_predictions;

    WeightConfig weights;
    WeightRoute route = WeightRoute::Classification;

    SplitSpec split;
    int bootstrap_draws = 1000;
    Multiplier multiplier = Multiplier::BayesianExponential;
    int shapley_exact_cap = kDefaultEnumerationCap;
    bool shapley_allow_sampling = true;
    int shapley_permutations = 200;
    double level = 0.95;

    uint64_t seed = 1;
    bool seed_set = false;
    int threads = 1;
    std::string output_path = "report.json";
    std::string output_format = "json";  // json | csv

    // simulate command
    int design = 1;
    int draws = 100;
    std::string scenario = "correct";
    int design2_K = 10;

    CausalStructure build_structure(const TwoSampleDataset& data) const {
        CausalStructure s;
        s.ordering = ordering.empty() ? data.names : ordering;
        s.all_independent = all_independent;
        auto index_of = [&](const std::string& name) {
            for (std::size_t i = 0; i < s.ordering.size(); ++i)
                if (s.ordering[i] == name) return static_cast<int>(i);
            throw ConfigError("structure references unknown variable '" + name + "'");
        };
        if (!parents.empty()) {
            s.parents.assign(s.ordering.size(), std::nullopt);
            for (const auto& [child, ps] : parents) {
                std::vector<int> idx;
                for (const auto& p : ps) idx.push_back(index_of(p));
                s.parents[static_cast<std::size_t>(index_of(child))] = idx;
            }
        }
        for (const auto& [a, b] : independence) s.independence_flags.emplace_back(index_of(a), index_of(b));
        return s;
    }

    EstimatorSettings build_settings() const {
        EstimatorSettings st;
        st.regression = regression;
        st.classifier = classifier;
        st.weights = weights;
        st.route = route;
        return st;
    }
};

namespace detail {

inline Functional parse_functional(const ordered_json& j, const std::string& path) {
    reject_unknown_keys(j, {"kind", "u"}, path);
    std::string kind = get_or<std::string>(j, "kind", "mean", path);
    if (kind == "mean") return Functional::mean();
    if (kind == "second_moment") return Functional::second_moment();
    if (kind == "cdf_at") {
        if (!j.contains("u")) throw ConfigError(path + ".u is required for cdf_at");
        return Functional::cdf_at(j.at("u").get<double>());
    }
    throw ConfigError("unknown functional kind '" + kind + "' at " + path);
}

inline std::optional<double> parse_penalty(const ordered_json& j, const std::string& path) {
    if (j.is_string()) {
        if (j.get<std::string>() == "cv") return std::nullopt;
        throw ConfigError(path + " must be a number or \"cv\"");
    }
    if (!j.is_number()) throw ConfigError(path + " must be a number or \"cv\"");
    return j.get<double>();
}

inline void parse_regression(const ordered_json& j, RunConfig& cfg, const std::string& path) {
    reject_unknown_keys(j, {"family", "degree", "penalty", "cv_grid", "cv_folds", "predictions"},
                        path);
    cfg.regression_family = get_or<std::string>(j, "family", cfg.regression_family, path);
    RegressorSpec spec;
    if (cfg.regression_family == "ols_poly") spec = RegressorSpec::ols(2);
    else if (cfg.regression_family == "ridge_poly") spec = RegressorSpec::ridge(0.0, 2);
    else if (cfg.regression_family == "lasso") spec = RegressorSpec::lasso(std::nullopt, 1);
    else if (cfg.regression_family == "precomputed") spec.family = RegressorFamily::Precomputed;
    else throw ConfigError("unknown regression family '" + cfg.regression_family + "' at " + path);
    spec.degree = get_or<int>(j, "degree", spec.degree, path);
    if (j.contains("penalty")) spec.penalty = parse_penalty(j.at("penalty"), path + ".penalty");
    if (j.contains("cv_grid")) spec.cv_grid = j.at("cv_grid").get<std::vector<double>>();
    spec.cv_folds = get_or<int>(j, "cv_folds", spec.cv_folds, path);
    if (j.contains("predictions")) {
        cfg.regression_predictions = j.at("predictions").get<std::string>();
        spec.family = RegressorFamily::Precomputed;
        cfg.regression_family = "precomputed";
    }
    cfg.regression = spec;
}

inline void parse_classifier(const ordered_json& j, RunConfig& cfg, const std::string& path) {
    reject_unknown_keys(j,
                        {"family", "degree", "penalty", "cv_grid", "cv_folds", "calibration",
                         "calibration_fraction", "predictions"},
                        path);
    cfg.classifier_family = get_or<std::string>(j, "family", cfg.classifier_family, path);
    ClassifierSpec spec;
    if (cfg.classifier_family == "logistic_l2") spec = ClassifierSpec::logistic(2, 0.0);
    else if (cfg.classifier_family == "logistic_l1") spec = ClassifierSpec::logit_lasso(std::nullopt, 1);
    else if (cfg.classifier_family == "precomputed") spec.family = ClassifierFamily::Precomputed;
    else throw ConfigError("unknown classifier family '" + cfg.classifier_family + "' at " + path);
    spec.degree = get_or<int>(j, "degree", spec.degree, path);
    if (j.contains("penalty")) spec.penalty = parse_penalty(j.at("penalty"), path + ".penalty");
    if (j.contains("cv_grid")) spec.cv_grid = j.at("cv_grid").get<std::vector<double>>();
    spec.cv_folds = get_or<int>(j, "cv_folds", spec.cv_folds, path);
    std::string cal = get_or<std::string>(j, "calibration", "none", path);
    if (cal == "none") spec.calibration = Calibration::None;
    else if (cal == "isotonic") spec.calibration = Calibration::Isotonic;
    else if (cal == "sigmoid") spec.calibration = Calibration::Sigmoid;
    else throw ConfigError("unknown calibration '" + cal + "' at " + path);
    spec.calibration_fraction = get_or<double>(j, "calibration_fraction", 0.2, path);
    if (j.contains("predictions")) {
        cfg.classifier_predictions = j.at("predictions").get<std::string>();
        spec.family = ClassifierFamily::Precomputed;
        cfg.classifier_family = "precomputed";
    }
    cfg.classifier = spec;
}

}  // namespace detail

inline RunConfig parse_run_config(const ordered_json& j, const std::string& command) {
    RunConfig cfg;
    cfg.command = command;
    detail::reject_unknown_keys(
        j,
        {"data", "structure", "functional", "change", "mode", "method", "regression", "classifier",
         "weights", "split", "bootstrap", "shapley", "level", "seed", "threads", "output", "design",
         "draws", "scenario", "K"},
        "config");

    cfg.data_path = detail::get_or<std::string>(j, "data", "", "config");
    if (j.contains("structure")) {
        const ordered_json& s = j.at("structure");
        detail::reject_unknown_keys(s, {"ordering", "parents", "independence", "all_independent"},
                                    "config.structure");
        if (s.contains("ordering")) cfg.ordering = s.at("ordering").get<std::vector<std::string>>();
        if (s.contains("parents")) {
            if (!s.at("parents").is_object())
                throw ConfigError("config.structure.parents must map variable -> parent list");
            for (auto it = s.at("parents").begin(); it != s.at("parents").end(); ++it)
                cfg.parents.emplace_back(it.key(), it.value().get<std::vector<std::string>>());
        }
        if (s.contains("independence"))
            for (const auto& pair : s.at("independence")) {
                auto v = pair.get<std::vector<std::string>>();
                if (v.size() != 2)
                    throw ConfigError("config.structure.independence entries must be pairs");
                cfg.independence.emplace_back(v[0], v[1]);
            }
        cfg.all_independent =
            detail::get_or<bool>(s, "all_independent", false, "config.structure");
    }
    if (j.contains("functional"))
        cfg.functional = detail::parse_functional(j.at("functional"), "config.functional");
    cfg.change = detail::get_or<std::string>(j, "change", "", "config");
    std::string mode = detail::get_or<std::string>(j, "mode", "both", "config");
    if (mode == "shapley") cfg.mode = AttributionMode::Shapley;
    else if (mode == "path") cfg.mode = AttributionMode::Path;
    else if (mode == "both") cfg.mode = AttributionMode::Both;
    else throw ConfigError("unknown mode '" + mode + "' at config.mode");
    std::string method = detail::get_or<std::string>(j, "method", "MR", "config");
    if (method == "MR") cfg.method = Method::MultiplyRobust;
    else if (method == "regression") cfg.method = Method::RegressionOnly;
    else if (method == "reweighting") cfg.method = Method::ReweightingOnly;
    else throw ConfigError("unknown method '" + method + "' at config.method");

    if (j.contains("regression")) detail::parse_regression(j.at("regression"), cfg, "config.regression");
    if (j.contains("classifier")) detail::parse_classifier(j.at("classifier"), cfg, "config.classifier");

    if (j.contains("weights")) {
        const ordered_json& w = j.at("weights");
        detail::reject_unknown_keys(
            w, {"route", "clip_lo", "clip_hi", "prob_clip", "automatic_penalty", "automatic_degree"},
            "config.weights");
        std::string route = detail::get_or<std::string>(w, "route", "classification", "config.weights");
        if (route == "classification") cfg.route = WeightRoute::Classification;
        else if (route == "automatic") cfg.route = WeightRoute::Automatic;
        else throw ConfigError("unknown weight route '" + route + "' at config.weights.route");
        cfg.weights.w_lo = detail::get_or<double>(w, "clip_lo", cfg.weights.w_lo, "config.weights");
        cfg.weights.w_hi = detail::get_or<double>(w, "clip_hi", cfg.weights.w_hi, "config.weights");
        cfg.weights.prob_clip =
            detail::get_or<double>(w, "prob_clip", cfg.weights.prob_clip, "config.weights");
        cfg.weights.automatic_penalty = detail::get_or<double>(w, "automatic_penalty",
                                                               cfg.weights.automatic_penalty,
                                                               "config.weights");
        cfg.weights.automatic_degree = detail::get_or<int>(w, "automatic_degree",
                                                           cfg.weights.automatic_degree,
                                                           "config.weights");
    }
    if (j.contains("split")) {
        const ordered_json& s = j.at("split");
        detail::reject_unknown_keys(
            s, {"mode", "folds", "train_fraction", "calibration_fraction"}, "config.split");
        std::string m = detail::get_or<std::string>(s, "mode", "crossfit", "config.split");
        if (m == "crossfit") cfg.split.mode = SplitSpec::Mode::CrossFit;
        else if (m == "single") cfg.split.mode = SplitSpec::Mode::SingleSplit;
        else if (m == "in_sample") cfg.split.mode = SplitSpec::Mode::InSample;
        else throw ConfigError("unknown split mode '" + m + "' at config.split.mode");
        cfg.split.folds = detail::get_or<int>(s, "folds", cfg.split.folds, "config.split");
        cfg.split.train_fraction =
            detail::get_or<double>(s, "train_fraction", cfg.split.train_fraction, "config.split");
        cfg.split.calibration_fraction = detail::get_or<double>(
            s, "calibration_fraction", cfg.split.calibration_fraction, "config.split");
    }
    if (j.contains("bootstrap")) {
        const ordered_json& b = j.at("bootstrap");
        detail::reject_unknown_keys(b, {"draws", "multiplier"}, "config.bootstrap");
        cfg.bootstrap_draws = detail::get_or<int>(b, "draws", cfg.bootstrap_draws, "config.bootstrap");
        std::string mult =
            detail::get_or<std::string>(b, "multiplier", "exponential", "config.bootstrap");
        if (mult == "exponential") cfg.multiplier = Multiplier::BayesianExponential;
        else if (mult == "gaussian") cfg.multiplier = Multiplier::Gaussian;
        else throw ConfigError("unknown multiplier '" + mult + "' at config.bootstrap.multiplier");
    }
    if (j.contains("shapley")) {
        const ordered_json& s = j.at("shapley");
        detail::reject_unknown_keys(s, {"exact_cap", "allow_sampling", "permutations"},
                                    "config.shapley");
        cfg.shapley_exact_cap =
            detail::get_or<int>(s, "exact_cap", cfg.shapley_exact_cap, "config.shapley");
        cfg.shapley_allow_sampling =
            detail::get_or<bool>(s, "allow_sampling", cfg.shapley_allow_sampling, "config.shapley");
        cfg.shapley_permutations =
            detail::get_or<int>(s, "permutations", cfg.shapley_permutations, "config.shapley");
    }
    cfg.level = detail::get_or<double>(j, "level", cfg.level, "config");
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.seed_set = true;
    }
    cfg.threads = detail::get_or<int>(j, "threads", cfg.threads, "config");
    if (j.contains("output")) {
        const ordered_json& o = j.at("output");
        detail::reject_unknown_keys(o, {"path", "format"}, "config.output");
        cfg.output_path = detail::get_or<std::string>(o, "path", cfg.output_path, "config.output");
        cfg.output_format =
            detail::get_or<std::string>(o, "format", cfg.output_format, "config.output");
        if (cfg.output_format != "json" && cfg.output_format != "csv")
            throw ConfigError("output format must be json or csv");
    }
    cfg.design = detail::get_or<int>(j, "design", cfg.design, "config");
    cfg.draws = detail::get_or<int>(j, "draws", cfg.draws, "config");
    cfg.scenario = detail::get_or<std::string>(j, "scenario", cfg.scenario, "config");
    cfg.design2_K = detail::get_or<int>(j, "K", cfg.design2_K, "config");

    // Seed fallback: MRATTRIB_SEED applies when neither config nor flags set one.
    if (!cfg.seed_set) {
        if (const char* env = std::getenv("MRATTRIB_SEED")) {
            cfg.seed = std::strtoull(env, nullptr, 10);
            cfg.seed_set = true;
        }
    }

    cfg.regression.cv_seed = cfg.seed;
    cfg.classifier.cv_seed = cfg.seed;
    cfg.split.seed = cfg.seed;
    return cfg;
}

inline RunConfig load_run_config(const std::string& path, const std::string& command) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(j, command);
}

// Resolved configuration, emitted into report meta blocks; parsing this back
// through parse_run_config reproduces the same configuration.
inline ordered_json run_config_json(const RunConfig& cfg) {
    ordered_json j;
    if (!cfg.data_path.empty()) j["data"] = cfg.data_path;
    ordered_json st;
    if (!cfg.ordering.empty()) st["ordering"] = cfg.ordering;
    if (!cfg.parents.empty()) {
        ordered_json p;
        for (const auto& [child, ps] : cfg.parents) p[child] = ps;
        st["parents"] = std::move(p);
    }
    if (!cfg.independence.empty()) {
        ordered_json ind = ordered_json::array();
        for (const auto& [a, b] : cfg.independence) ind.push_back(std::vector<std::string>{a, b});
        st["independence"] = std::move(ind);
    }
    st["all_independent"] = cfg.all_independent;
    j["structure"] = std::move(st);
    ordered_json f;
    f["kind"] = cfg.functional.name();
    if (cfg.functional.kind == FunctionalKind::CdfAt) f["u"] = cfg.functional.u;
    j["functional"] = std::move(f);
    if (!cfg.change.empty()) j["change"] = cfg.change;
    j["mode"] = cfg.mode == AttributionMode::Shapley ? "shapley"
                : cfg.mode == AttributionMode::Path  ? "path"
                                                     : "both";
    j["method"] = cfg.method == Method::MultiplyRobust   ? "MR"
                  : cfg.method == Method::RegressionOnly ? "regression"
                                                         : "reweighting";
    ordered_json reg;
    reg["family"] = cfg.regression_family;
    reg["degree"] = cfg.regression.degree;
    if (cfg.regression.penalty) reg["penalty"] = *cfg.regression.penalty;
    else reg["penalty"] = "cv";
    reg["cv_folds"] = cfg.regression.cv_folds;
    if (!cfg.regression_predictions.empty()) reg["predictions"] = cfg.regression_predictions;
    j["regression"] = std::move(reg);
    ordered_json clf;
    clf["family"] = cfg.classifier_family;
    clf["degree"] = cfg.classifier.degree;
    if (cfg.classifier.penalty) clf["penalty"] = *cfg.classifier.penalty;
    else clf["penalty"] = "cv";
    clf["cv_folds"] = cfg.classifier.cv_folds;
    clf["calibration"] = cfg.classifier.calibration == Calibration::None       ? "none"
                         : cfg.classifier.calibration == Calibration::Isotonic ? "isotonic"
                                                                               : "sigmoid";
    clf["calibration_fraction"] = cfg.classifier.calibration_fraction;
    if (!cfg.classifier_predictions.empty()) clf["predictions"] = cfg.classifier_predictions;
    j["classifier"] = std::move(clf);
    ordered_json w;
    w["route"] = cfg.route == WeightRoute::Classification ? "classification" : "automatic";
    w["clip_lo"] = cfg.weights.w_lo;
    w["clip_hi"] = cfg.weights.w_hi;
    w["prob_clip"] = cfg.weights.prob_clip;
    w["automatic_penalty"] = cfg.weights.automatic_penalty;
    w["automatic_degree"] = cfg.weights.automatic_degree;
    j["weights"] = std::move(w);
    ordered_json sp;
    sp["mode"] = cfg.split.mode == SplitSpec::Mode::CrossFit      ? "crossfit"
                 : cfg.split.mode == SplitSpec::Mode::SingleSplit ? "single"
                                                                  : "in_sample";
    sp["folds"] = cfg.split.folds;
    sp["train_fraction"] = cfg.split.train_fraction;
    sp["calibration_fraction"] = cfg.split.calibration_fraction;
    j["split"] = std::move(sp);
    ordered_json b;
    b["draws"] = cfg.bootstrap_draws;
    b["multiplier"] =
        cfg.multiplier == Multiplier::BayesianExponential ? "exponential" : "gaussian";
    j["bootstrap"] = std::move(b);
    ordered_json sh;
    sh["exact_cap"] = cfg.shapley_exact_cap;
    sh["allow_sampling"] = cfg.shapley_allow_sampling;
    sh["permutations"] = cfg.shapley_permutations;
    j["shapley"] = std::move(sh);
    j["level"] = cfg.level;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    ordered_json o;
    o["path"] = cfg.output_path;
    o["format"] = cfg.output_format;
    j["output"] = std::move(o);
    if (cfg.command == "simulate") {
        j["design"] = cfg.design;
        j["draws"] = cfg.draws;
        j["scenario"] = cfg.scenario;
        j["K"] = cfg.design2_K;
    }
    return j;
}

}  // namespace mrattrib
