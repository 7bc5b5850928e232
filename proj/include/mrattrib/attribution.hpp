#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mrattrib/estimator.hpp"
#include "mrattrib/inference.hpp"

namespace mrattrib {

// Table of theta values over change vectors, indexed by bit mask (bit i is
// entry i of the change vector).
struct ThetaTable {
    int mechanisms = 0;  // K+1
    std::vector<double> values;
    std::vector<char> present;

    explicit ThetaTable(int mechanisms_ = 0)
        : mechanisms(mechanisms_),
          values(static_cast<std::size_t>(1) << mechanisms_, 0.0),
          present(static_cast<std::size_t>(1) << mechanisms_, 0) {}

    void set(uint64_t mask, double v) {
        values[mask] = v;
        present[mask] = 1;
    }
    double at(uint64_t mask) const {
        if (!present[mask])
            throw InputError("theta table is missing change vector " +
                             ChangeVector::from_mask(mask, mechanisms).to_string());
        return values[mask];
    }
    bool complete() const {
        for (char p : present)
            if (!p) return false;
        return true;
    }
};

namespace detail {

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double v = 1.0;
    for (int i = 1; i <= k; ++i) v = v * static_cast<double>(n - k + i) / static_cast<double>(i);
    return v;
}

}  // namespace detail

// Exact Shapley values over the complete theta table: the marginal effect of
// switching mechanism k, averaged over coalitions with the hypergeometric
// weights 1 / ((M) * C(M-1, |c|)).
inline std::vector<double> shapley_values(const ThetaTable& table) {
    const int M = table.mechanisms;
    if (!table.complete()) {
        std::string missing;
        for (uint64_t m = 0; m < table.values.size(); ++m)
            if (!table.present[m]) {
                if (!missing.empty()) missing += ", ";
                missing += ChangeVector::from_mask(m, M).to_string();
                if (missing.size() > 120) break;
            }
        throw InputError("theta table incomplete; missing: " + missing);
    }
    std::vector<double> shap(static_cast<std::size_t>(M), 0.0);
    const uint64_t full = (1ULL << M);
    for (int k = 0; k < M; ++k) {
        KahanSum acc;
        for (uint64_t mask = 0; mask < full; ++mask) {
            if (mask & (1ULL << k)) continue;
            int size = __builtin_popcountll(mask);
            double w = 1.0 / (static_cast<double>(M) * detail::binomial(M - 1, size));
            acc.add(w * (table.at(mask | (1ULL << k)) - table.at(mask)));
        }
        shap[static_cast<std::size_t>(k)] = acc.value();
    }
    return shap;
}

// Shapley values approximated by averaging marginal contributions over
// mechanism permutations (exact when all M! permutations are supplied).
inline std::vector<double> shapley_from_permutations(
    const std::vector<std::vector<int>>& permutations,
    const std::function<double(uint64_t)>& theta_of_mask, int mechanisms) {
    if (permutations.empty()) throw InputError("need at least one permutation");
    std::vector<KahanSum> acc(static_cast<std::size_t>(mechanisms));
    for (const auto& perm : permutations) {
        uint64_t mask = 0;
        for (int k : perm) {
            double before = theta_of_mask(mask);
            mask |= (1ULL << k);
            double after = theta_of_mask(mask);
            acc[static_cast<std::size_t>(k)].add(after - before);
        }
    }
    std::vector<double> shap(static_cast<std::size_t>(mechanisms));
    for (int k = 0; k < mechanisms; ++k)
        shap[static_cast<std::size_t>(k)] =
            acc[static_cast<std::size_t>(k)].value() / static_cast<double>(permutations.size());
    return shap;
}

inline std::vector<std::vector<int>> all_permutations(int mechanisms) {
    std::vector<int> base(static_cast<std::size_t>(mechanisms));
    std::iota(base.begin(), base.end(), 0);
    std::vector<std::vector<int>> out;
    do {
        out.push_back(base);
    } while (std::next_permutation(base.begin(), base.end()));
    return out;
}

inline std::vector<std::vector<int>> sampled_permutations(int mechanisms, int count, uint64_t seed) {
    std::vector<std::vector<int>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        Rng rng(seed, Rng::substream(seed, /*tag=*/0x5a3fULL, static_cast<uint64_t>(s)));
        std::vector<int> perm(static_cast<std::size_t>(mechanisms));
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(i))]);
        out.push_back(std::move(perm));
    }
    return out;
}

// Contributions along the causal ordering: consecutive differences of the
// theta values at the path vectors b_0 (all zeros) ... b_{K+1} (all ones).
inline std::vector<double> path_values(const std::vector<double>& theta_on_path) {
    if (theta_on_path.size() < 2)
        throw InputError("path attribution needs the full b_0..b_{K+1} sequence");
    std::vector<double> out(theta_on_path.size() - 1);
    for (std::size_t k = 0; k + 1 < theta_on_path.size(); ++k)
        out[k] = theta_on_path[k + 1] - theta_on_path[k];
    return out;
}

// ---------------------------------------------------------------------------
// Report orchestration.
// ---------------------------------------------------------------------------

enum class AttributionMode { Shapley, Path, Both };

struct AttributionConfig {
    AttributionMode mode = AttributionMode::Both;
    Method method = Method::MultiplyRobust;
    int bootstrap_draws = 1000;
    Multiplier multiplier = Multiplier::BayesianExponential;
    uint64_t seed = 1;
    int exact_cap = kDefaultEnumerationCap;  // max K+1 for the exact table
    bool allow_sampling = true;
    int sample_permutations = 200;
    double ci_level = 0.95;
};

struct AttributionEntry {
    std::string mechanism;  // variable name or "y|x"
    double value = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

struct ThetaRow {
    ChangeVector c;
    double theta = 0.0;
    double se = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
};

struct AttributionReport {
    std::vector<ThetaRow> theta_rows;
    std::vector<AttributionEntry> shap;  // empty unless requested
    std::vector<AttributionEntry> path;
    double total_change = 0.0;
    double total_change_se = 0.0;
    bool approximate_shapley = false;
    uint64_t seed = 0;
    std::string mode;
    EstimateDiagnostics diagnostics;
    std::vector<std::pair<long, long>> fold_sizes;
};

namespace detail {

inline std::string mechanism_label(const CausalStructure& s, int k) {
    if (k < s.K()) return s.ordering[static_cast<std::size_t>(k)];
    return "y|x";
}

}  // namespace detail

// Estimate every required theta^c, bootstrap jointly, and assemble Shapley /
// path attributions with standard errors and normal-approximation p-values.
inline AttributionReport attribute(const ValidatedModel& model, const Functional& h,
                                   const EstimatorSettings& settings, const SplitSpec& split,
                                   const AttributionConfig& cfg) {
    const int M = model.K() + 1;
    const bool want_shap =
        cfg.mode == AttributionMode::Shapley || cfg.mode == AttributionMode::Both;
    const bool want_path = cfg.mode == AttributionMode::Path || cfg.mode == AttributionMode::Both;
    const bool exact = M <= cfg.exact_cap;
    if (want_shap && !exact && !cfg.allow_sampling)
        throw CapacityError("exact Shapley over 2^" + std::to_string(M) +
                            " change vectors exceeds the cap; enable permutation sampling");

    ThetaEngine engine(model, settings, split);
    engine.set_functional(h);

    // Masks to estimate: the whole cube when exact Shapley is feasible,
    // otherwise the path chain plus lazily discovered permutation masks.
    std::map<uint64_t, ThetaEstimate> estimates;
    auto ensure = [&](uint64_t mask) -> const ThetaEstimate& {
        auto it = estimates.find(mask);
        if (it != estimates.end()) return it->second;
        ChangeVector c = ChangeVector::from_mask(mask, M);
        return estimates.emplace(mask, engine.estimate(c, cfg.method)).first->second;
    };

    std::vector<std::vector<int>> permutations;
    AttributionReport report;
    report.seed = cfg.seed;
    report.mode = cfg.mode == AttributionMode::Shapley ? "shapley"
                  : cfg.mode == AttributionMode::Path  ? "path"
                                                       : "both";

    if (want_shap && exact) {
        for (uint64_t mask = 0; mask < (1ULL << M); ++mask) ensure(mask);
    } else if (want_shap) {
        permutations = sampled_permutations(M, cfg.sample_permutations, cfg.seed);
        report.approximate_shapley = true;
        for (const auto& perm : permutations) {
            uint64_t mask = 0;
            ensure(mask);
            for (int k : perm) {
                mask |= (1ULL << k);
                ensure(mask);
            }
        }
    }
    for (int k = 0; k <= M; ++k) ensure(ChangeVector::path_vector(k, M).mask());

    // Joint bootstrap across every estimated target.
    std::vector<uint64_t> masks;
    std::vector<ThetaEstimate> targets;
    for (auto& [mask, est] : estimates) {
        masks.push_back(mask);
        targets.push_back(est);
    }
    BootstrapDraws draws =
        multiplier_bootstrap(targets, cfg.bootstrap_draws, cfg.multiplier, cfg.seed);
    std::map<uint64_t, int> column_of;
    for (std::size_t i = 0; i < masks.size(); ++i) column_of[masks[i]] = static_cast<int>(i);

    const double z = normal_quantile(1.0 - (1.0 - cfg.ci_level) / 2.0);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        ThetaRow row;
        row.c = ChangeVector::from_mask(masks[i], M);
        row.theta = targets[i].theta;
        row.se = estimate_variance_ci(targets[i], cfg.ci_level).se;
        row.ci_lo = row.theta - z * row.se;
        row.ci_hi = row.theta + z * row.se;
        report.theta_rows.push_back(row);
        report.diagnostics.merge(targets[i].diagnostics);
    }
    report.fold_sizes = engine.fold_sizes();

    const uint64_t full_mask = (1ULL << M) - 1;
    report.total_change = estimates.at(full_mask).theta - estimates.at(0).theta;
    {
        Eigen::VectorXd diff =
            draws.draws.col(column_of.at(full_mask)) - draws.draws.col(column_of.at(0));
        std::vector<double> d(diff.data(), diff.data() + diff.size());
        report.total_change_se = std::sqrt(sample_variance(d));
    }

    // Helper: per bootstrap draw, a theta lookup by mask.
    auto theta_at_draw = [&](int b, uint64_t mask) {
        return draws.draws(b, column_of.at(mask));
    };

    if (want_shap) {
        std::vector<double> point;
        if (exact) {
            ThetaTable table(M);
            for (uint64_t mask = 0; mask < (1ULL << M); ++mask)
                table.set(mask, estimates.at(mask).theta);
            point = shapley_values(table);
        } else {
            point = shapley_from_permutations(
                permutations, [&](uint64_t mask) { return estimates.at(mask).theta; }, M);
        }
        // bootstrap distribution
        std::vector<std::vector<double>> draws_k(static_cast<std::size_t>(M));
        for (int b = 0; b < draws.B(); ++b) {
            std::vector<double> sb;
            if (exact) {
                ThetaTable table(M);
                for (uint64_t mask = 0; mask < (1ULL << M); ++mask)
                    table.set(mask, theta_at_draw(b, mask));
                sb = shapley_values(table);
            } else {
                sb = shapley_from_permutations(
                    permutations, [&](uint64_t mask) { return theta_at_draw(b, mask); }, M);
            }
            for (int k = 0; k < M; ++k) draws_k[static_cast<std::size_t>(k)].push_back(sb[static_cast<std::size_t>(k)]);
        }
        for (int k = 0; k < M; ++k) {
            AttributionEntry e;
            e.mechanism = detail::mechanism_label(model.structure, k);
            e.value = point[static_cast<std::size_t>(k)];
            e.se = std::sqrt(sample_variance(draws_k[static_cast<std::size_t>(k)]));
            e.p_value = normal_two_sided_p(e.value, e.se);
            report.shap.push_back(std::move(e));
        }
    }

    if (want_path) {
        std::vector<double> chain(static_cast<std::size_t>(M + 1));
        for (int k = 0; k <= M; ++k)
            chain[static_cast<std::size_t>(k)] = estimates.at(ChangeVector::path_vector(k, M).mask()).theta;
        std::vector<double> point = path_values(chain);
        std::vector<std::vector<double>> draws_k(static_cast<std::size_t>(M));
        for (int b = 0; b < draws.B(); ++b) {
            std::vector<double> cb(static_cast<std::size_t>(M + 1));
            for (int k = 0; k <= M; ++k)
                cb[static_cast<std::size_t>(k)] =
                    theta_at_draw(b, ChangeVector::path_vector(k, M).mask());
            std::vector<double> pb = path_values(cb);
            for (int k = 0; k < M; ++k) draws_k[static_cast<std::size_t>(k)].push_back(pb[static_cast<std::size_t>(k)]);
        }
        for (int k = 0; k < M; ++k) {
            AttributionEntry e;
            e.mechanism = detail::mechanism_label(model.structure, k);
            e.value = point[static_cast<std::size_t>(k)];
            e.se = std::sqrt(sample_variance(draws_k[static_cast<std::size_t>(k)]));
            e.p_value = normal_two_sided_p(e.value, e.se);
            report.path.push_back(std::move(e));
        }
    }
    return report;
}

}  // namespace mrattrib
