#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mrattrib/attribution.hpp"
#include "mrattrib/core.hpp"
#include "mrattrib/estimator.hpp"
#include "mrattrib/rng.hpp"

namespace mrattrib {

// ---------------------------------------------------------------------------
// Benchmark design 1: two explanatory variables, X1 -> X2, both -> Y, with
// per-sample parameters (sigma^2, beta, delta) controlling the variance of
// X1, the X2|X1 slope, and the quadratic Y-dependence on X2.
// ---------------------------------------------------------------------------

struct Design1Params {
    long n0 = 1000, n1 = 1000;
    std::array<double, 3> mu0{1.0, 0.5, 0.25};     // sigma^2, beta, delta in sample 0
    std::array<double, 3> mu1{1.21, 0.2, -0.25};   // and in sample 1
    uint64_t seed = 1;

    void validate() const {
        if (n0 < 1 || n1 < 1) throw InputError("design 1 needs positive sample sizes");
        if (mu0[0] <= 0.0 || mu1[0] <= 0.0) throw InputError("design 1 needs positive variances");
    }
};

inline TwoSampleDataset simulate_design1(const Design1Params& p) {
    p.validate();
    const long n = p.n0 + p.n1;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    std::vector<int> t(static_cast<std::size_t>(n));
    long row = 0;
    for (int s = 0; s <= 1; ++s) {
        const auto& mu = s == 0 ? p.mu0 : p.mu1;
        const double sd1 = std::sqrt(mu[0]);
        const long ns = s == 0 ? p.n0 : p.n1;
        Rng rng(p.seed, Rng::substream(p.seed, /*tag=*/0xde51ULL, static_cast<uint64_t>(s)));
        for (long i = 0; i < ns; ++i, ++row) {
            double x1 = rng.normal(1.0, sd1);
            double x2 = rng.normal(mu[1] * x1, 1.0);
            double yy = rng.normal(x1 + x2 + 0.25 * x1 * x1 + mu[2] * x2 * x2, 1.0);
            x(row, 0) = x1;
            x(row, 1) = x2;
            y[row] = yy;
            t[static_cast<std::size_t>(row)] = s;
        }
    }
    return TwoSampleDataset::make({"x1", "x2"}, std::move(x), std::move(y), std::move(t));
}

inline CausalStructure design1_structure() {
    CausalStructure s;
    s.ordering = {"x1", "x2"};
    s.parents = {std::vector<int>{}, std::vector<int>{0}};
    return s;
}

enum class OracleMethod { Analytic, Simulation };

// Ground-truth counterfactual mean, assembled from Gaussian moments of the
// mechanism mixture selected by c. Non-mean functionals fall back to the
// simulation oracle.
inline double oracle_theta_design1(const ChangeVector& c, const Design1Params& p,
                                   OracleMethod method = OracleMethod::Analytic,
                                   const Functional& h = Functional::mean(),
                                   long sim_draws = 1000000, uint64_t sim_seed = 99) {
    if (c.size() != 3) throw InputError("design 1 has K = 2 mechanisms plus the outcome");
    const auto& m1 = c[0] ? p.mu1 : p.mu0;  // X1 mechanism
    const auto& m2 = c[1] ? p.mu1 : p.mu0;  // X2|X1 mechanism
    const auto& m3 = c[2] ? p.mu1 : p.mu0;  // Y|X mechanism
    const double s2 = m1[0], beta = m2[1], delta = m3[2];
    if (method == OracleMethod::Analytic && h.kind == FunctionalKind::Mean) {
        // E[Y] = E[X1] + E[X2] + 0.25 E[X1^2] + delta E[X2^2], X1 ~ N(1, s2),
        // X2 = beta X1 + N(0,1).
        const double ex1 = 1.0, ex1sq = 1.0 + s2;
        const double ex2 = beta * ex1;
        const double ex2sq = beta * beta * ex1sq + 1.0;
        return ex1 + ex2 + 0.25 * ex1sq + delta * ex2sq;
    }
    Rng rng(sim_seed, Rng::substream(sim_seed, /*tag=*/0x04acULL, c.mask()));
    KahanSum acc;
    const double sd1 = std::sqrt(s2);
    for (long i = 0; i < sim_draws; ++i) {
        double x1 = rng.normal(1.0, sd1);
        double x2 = rng.normal(beta * x1, 1.0);
        double yy = rng.normal(x1 + x2 + 0.25 * x1 * x1 + delta * x2 * x2, 1.0);
        acc.add(functional_eval(h, yy));
    }
    return acc.value() / static_cast<double>(sim_draws);
}

// ---------------------------------------------------------------------------
// Benchmark design 2: line DAG X1 -> X2 -> ... -> X_K -> Y; a random subset of
// mechanisms get their conditional mean shifted in sample 1.
// ---------------------------------------------------------------------------

struct Design2Params {
    int K = 10;
    long n = 2000;  // per sample
    double shift_fraction = 0.1;
    double shift_size = 0.2;
    uint64_t seed = 1;

    void validate() const {
        if (K < 2) throw InputError("design 2 needs K >= 2");
        if (n < 1) throw InputError("design 2 needs a positive sample size");
        if (shift_fraction < 0.0 || shift_fraction > 1.0)
            throw InputError("shift fraction must lie in [0,1]");
    }
};

// Mechanisms are indexed 1..K+1 along the line (the last one is Y). Returns
// the dataset and the 1-based shifted mechanism indices.
inline std::pair<TwoSampleDataset, std::vector<int>> simulate_design2(const Design2Params& p) {
    p.validate();
    const int nodes = p.K + 1;
    std::vector<int> shifted;
    if (p.shift_fraction > 0.0) {
        long count = std::lround(p.shift_fraction * nodes);
        if (count < 1) count = 1;  // a zero-mechanism draw carries no signal
        std::vector<int> pool(static_cast<std::size_t>(nodes));
        std::iota(pool.begin(), pool.end(), 1);
        Rng rng(p.seed, Rng::substream(p.seed, /*tag=*/0x5e1eULL));
        for (long i = 0; i < count; ++i) {
            std::size_t j = static_cast<std::size_t>(rng.uniform_int(pool.size() - static_cast<std::size_t>(i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(i) + j]);
            shifted.push_back(pool[static_cast<std::size_t>(i)]);
        }
        std::sort(shifted.begin(), shifted.end());
    }
    std::vector<char> shift_node(static_cast<std::size_t>(nodes + 1), 0);
    for (int k : shifted) shift_node[static_cast<std::size_t>(k)] = 1;

    const double sd = std::sqrt(0.75);
    const long n = 2 * p.n;
    Eigen::MatrixXd x(n, p.K);
    Eigen::VectorXd y(n);
    std::vector<int> t(static_cast<std::size_t>(n));
    long row = 0;
    for (int s = 0; s <= 1; ++s) {
        Rng rng(p.seed, Rng::substream(p.seed, /*tag=*/0xde52ULL, static_cast<uint64_t>(s)));
        for (long i = 0; i < p.n; ++i, ++row) {
            double prev = 0.0;
            for (int node = 1; node <= nodes; ++node) {
                double mean = node == 1 ? 0.0 : 0.5 * prev;
                if (s == 1 && shift_node[static_cast<std::size_t>(node)]) mean += p.shift_size;
                double v = node == 1 ? rng.normal(mean, 1.0) : rng.normal(mean, sd);
                if (node <= p.K) x(row, node - 1) = v;
                else y[row] = v;
                prev = v;
            }
            t[static_cast<std::size_t>(row)] = s;
        }
    }
    std::vector<std::string> names(static_cast<std::size_t>(p.K));
    for (int k = 0; k < p.K; ++k) names[static_cast<std::size_t>(k)] = "x" + std::to_string(k + 1);
    return {TwoSampleDataset::make(std::move(names), std::move(x), std::move(y), std::move(t)),
            shifted};
}

inline CausalStructure design2_structure(int K) {
    CausalStructure s;
    s.ordering.resize(static_cast<std::size_t>(K));
    s.parents.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        s.ordering[static_cast<std::size_t>(k)] = "x" + std::to_string(k + 1);
        s.parents[static_cast<std::size_t>(k)] =
            k == 0 ? std::vector<int>{} : std::vector<int>{k - 1};
    }
    return s;
}

// True path attribution on the line DAG: a mean shift at mechanism k
// propagates to Y through the remaining 0.5-slope links.
inline std::vector<double> oracle_path_design2(const Design2Params& p,
                                               const std::vector<int>& shifted) {
    std::vector<double> path(static_cast<std::size_t>(p.K + 1), 0.0);
    for (int k : shifted)
        path[static_cast<std::size_t>(k - 1)] = p.shift_size * std::pow(0.5, p.K + 1 - k);
    return path;
}

// ---------------------------------------------------------------------------
// Replication harness.
// ---------------------------------------------------------------------------

enum class Design1Scenario { Correct, MisspecifiedWeights, MisspecifiedRegression, MisspecifiedBoth };

inline std::string scenario_name(Design1Scenario s) {
    switch (s) {
        case Design1Scenario::Correct: return "correct";
        case Design1Scenario::MisspecifiedWeights: return "mis_weights";
        case Design1Scenario::MisspecifiedRegression: return "mis_regression";
        case Design1Scenario::MisspecifiedBoth: return "mis_both";
    }
    return "?";
}

inline EstimatorSettings design1_settings(Design1Scenario sc) {
    EstimatorSettings s;
    const bool reg_ok = sc == Design1Scenario::Correct || sc == Design1Scenario::MisspecifiedWeights;
    const bool clf_ok =
        sc == Design1Scenario::Correct || sc == Design1Scenario::MisspecifiedRegression;
    s.regression = RegressorSpec::ols(reg_ok ? 2 : 1);
    s.classifier = ClassifierSpec::logistic(clf_ok ? 2 : 1, 0.0);
    return s;
}

inline EstimatorSettings design2_settings() {
    EstimatorSettings s;
    s.regression = RegressorSpec::lasso(std::nullopt, 1);
    s.classifier = ClassifierSpec::logit_lasso(std::nullopt, 1);
    return s;
}

struct MonteCarloConfig {
    int design = 1;
    int draws = 100;
    uint64_t seed = 1;
    int threads = 1;
    Design1Params d1;
    Design1Scenario scenario = Design1Scenario::Correct;
    Design2Params d2;
    std::vector<Method> methods = {Method::RegressionOnly, Method::ReweightingOnly,
                                   Method::MultiplyRobust};
    int crossfit_folds = 2;
};

struct MCResult {
    std::vector<std::string> target_names;  // rows
    std::vector<std::string> method_names;  // columns
    Eigen::MatrixXd mae;                    // mean absolute error per (target, method)
    Eigen::MatrixXd mae_se;                 // std. err. = sd / sqrt(draws)
    int draws = 0;
    int failures = 0;
};

namespace detail {

inline std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct DrawErrors {
    Eigen::MatrixXd abs_err;  // targets x methods
    bool ok = false;
    std::string error;
};

inline DrawErrors design1_draw(const MonteCarloConfig& cfg, int draw) {
    DrawErrors out;
    Design1Params p = cfg.d1;
    p.seed = Rng::substream(cfg.seed, /*tag=*/0xd7a301ULL, static_cast<uint64_t>(draw));
    TwoSampleDataset data = simulate_design1(p);
    ValidatedModel model = validate_structure(std::move(data), design1_structure());
    SplitSpec split;
    split.folds = cfg.crossfit_folds;
    split.seed = Rng::substream(p.seed, /*tag=*/0x5b11ULL);
    ThetaEngine engine(model, design1_settings(cfg.scenario), split);

    // 6 counterfactual theta targets + 3 Shapley mechanisms
    std::vector<uint64_t> theta_masks;
    for (uint64_t m = 1; m < 7; ++m) theta_masks.push_back(m);
    const std::size_t n_targets = theta_masks.size() + 3;
    out.abs_err.resize(static_cast<long>(n_targets), static_cast<long>(cfg.methods.size()));

    ThetaTable oracle_table(3);
    for (uint64_t m = 0; m < 8; ++m)
        oracle_table.set(m, oracle_theta_design1(ChangeVector::from_mask(m, 3), p));
    std::vector<double> oracle_shap = shapley_values(oracle_table);

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        ThetaTable table(3);
        for (uint64_t m = 0; m < 8; ++m)
            table.set(m, engine.estimate(ChangeVector::from_mask(m, 3), cfg.methods[mi]).theta);
        for (std::size_t ti = 0; ti < theta_masks.size(); ++ti)
            out.abs_err(static_cast<long>(ti), static_cast<long>(mi)) =
                std::fabs(table.at(theta_masks[ti]) - oracle_table.at(theta_masks[ti]));
        std::vector<double> shap = shapley_values(table);
        for (int k = 0; k < 3; ++k)
            out.abs_err(static_cast<long>(theta_masks.size()) + k, static_cast<long>(mi)) =
                std::fabs(shap[static_cast<std::size_t>(k)] - oracle_shap[static_cast<std::size_t>(k)]);
    }
    out.ok = true;
    return out;
}

inline DrawErrors design2_draw(const MonteCarloConfig& cfg, int draw) {
    DrawErrors out;
    Design2Params p = cfg.d2;
    p.seed = Rng::substream(cfg.seed, /*tag=*/0xd7a302ULL, static_cast<uint64_t>(draw));
    auto [data, shifted] = simulate_design2(p);
    ValidatedModel model = validate_structure(std::move(data), design2_structure(p.K));
    SplitSpec split;
    split.folds = cfg.crossfit_folds;
    split.seed = Rng::substream(p.seed, /*tag=*/0x5b11ULL);
    ThetaEngine engine(model, design2_settings(), split);

    const int M = p.K + 1;
    std::vector<double> oracle = oracle_path_design2(p, shifted);
    out.abs_err.resize(1, static_cast<long>(cfg.methods.size()));
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        std::vector<double> chain(static_cast<std::size_t>(M + 1));
        for (int k = 0; k <= M; ++k)
            chain[static_cast<std::size_t>(k)] =
                engine.estimate(ChangeVector::path_vector(k, M), cfg.methods[mi]).theta;
        std::vector<double> path = path_values(chain);
        double worst = 0.0;
        for (int k = 0; k < M; ++k)
            worst = std::max(worst, std::fabs(path[static_cast<std::size_t>(k)] -
                                              oracle[static_cast<std::size_t>(k)]));
        out.abs_err(0, static_cast<long>(mi)) = worst;
    }
    out.ok = true;
    return out;
}

}  // namespace detail

// Seeded, draw-parallel replication run. Each draw lives on its own RNG
// substream and lands in its own result slot, so the aggregate is identical
// for any thread count.
inline MCResult run_monte_carlo(const MonteCarloConfig& cfg) {
    if (cfg.draws < 2) throw InputError("monte carlo needs at least 2 draws");
    std::vector<detail::DrawErrors> results(static_cast<std::size_t>(cfg.draws));
    auto worker = [&](int draw) {
        try {
            results[static_cast<std::size_t>(draw)] =
                cfg.design == 1 ? detail::design1_draw(cfg, draw) : detail::design2_draw(cfg, draw);
        } catch (const std::exception& e) {
            results[static_cast<std::size_t>(draw)].ok = false;
            results[static_cast<std::size_t>(draw)].error = e.what();
        }
    };
    const int threads = std::max(1, cfg.threads);
    if (threads == 1) {
        for (int d = 0; d < cfg.draws; ++d) worker(d);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    int d = next.fetch_add(1);
                    if (d >= cfg.draws) return;
                    worker(d);
                }
            });
        for (auto& th : pool) th.join();
    }

    MCResult res;
    res.draws = cfg.draws;
    for (Method m : cfg.methods) res.method_names.push_back(method_name(m));
    if (cfg.design == 1) {
        for (uint64_t m = 1; m < 7; ++m)
            res.target_names.push_back("theta_" + ChangeVector::from_mask(m, 3).to_string());
        for (int k = 1; k <= 3; ++k) res.target_names.push_back("shap_" + std::to_string(k));
    } else {
        res.target_names.push_back("worst_case_ae");
    }
    const long T = static_cast<long>(res.target_names.size());
    const long Mn = static_cast<long>(res.method_names.size());
    res.mae = Eigen::MatrixXd::Zero(T, Mn);
    res.mae_se = Eigen::MatrixXd::Zero(T, Mn);

    std::vector<Eigen::MatrixXd> ok_draws;
    for (const auto& r : results) {
        if (r.ok) ok_draws.push_back(r.abs_err);
        else ++res.failures;
    }
    if (ok_draws.empty()) throw NumericalError("all monte carlo draws failed");
    const double n = static_cast<double>(ok_draws.size());
    for (long t = 0; t < T; ++t) {
        for (long m = 0; m < Mn; ++m) {
            KahanSum s;
            for (const auto& d : ok_draws) s.add(d(t, m));
            const double mean = s.value() / n;
            KahanSum v;
            for (const auto& d : ok_draws) v.add((d(t, m) - mean) * (d(t, m) - mean));
            res.mae(t, m) = mean;
            res.mae_se(t, m) = ok_draws.size() > 1
                                   ? std::sqrt(v.value() / (n - 1.0)) / std::sqrt(n)
                                   : 0.0;
        }
    }
    return res;
}

// CSV layout mirroring the benchmark tables: rows are targets, columns are
// methods, each cell "mae ± se" at 6 significant digits.
inline std::string mc_result_csv(const MCResult& r) {
    std::string out = "target";
    for (const auto& m : r.method_names) out += "," + m;
    out += "\n";
    for (std::size_t t = 0; t < r.target_names.size(); ++t) {
        out += r.target_names[t];
        for (std::size_t m = 0; m < r.method_names.size(); ++m)
            out += "," + detail::format_sig6(r.mae(static_cast<long>(t), static_cast<long>(m))) +
                   " ± " +
                   detail::format_sig6(r.mae_se(static_cast<long>(t), static_cast<long>(m)));
        out += "\n";
    }
    return out;
}

}  // namespace mrattrib
