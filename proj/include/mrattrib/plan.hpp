#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "mrattrib/core.hpp"

namespace mrattrib {

// One surviving debiasing stage of the estimating equation, in plan (possibly
// reordered) variable indexing.
struct WeightFactorSpec {
    int prefix = 0;            // j: conditional ratio for variable j given the first j-1
    int numerator_sample = 0;  // which sample's mechanism the counterfactual follows for j
    int denominator_sample = 0;
};

struct PlanStage {
    int prefix = 0;             // k: regression conditions on the first k plan variables
    int regression_sample = 0;  // sample carrying the regression (bit k+1)
    std::vector<WeightFactorSpec> weight_factors;
};

struct EstimationPlan {
    ChangeVector c;              // original change vector
    std::vector<int> order;      // order[i] = dataset column at plan position i
    std::vector<uint8_t> plan_bits;  // change bits in plan order, length K+1
    std::vector<PlanStage> stages;   // strictly increasing prefix
    int lead_sample = 0;         // sample averaged in the leading term
    int outcome_sample = 0;      // bit K+1
    bool collapsed = false;      // no stages: theta is a plain sample mean of h(Y)
    std::vector<WeightFactorSpec> full_weight_factors;  // product weight for re-weighting baseline

    int K() const { return static_cast<int>(order.size()); }
};

namespace detail {

inline int count_boundaries(const std::vector<uint8_t>& bits) {
    int c = 0;
    for (std::size_t k = 0; k + 1 < bits.size(); ++k)
        if (bits[k] != bits[k + 1]) ++c;
    return c;
}

}  // namespace detail

// Build the minimal stage list for estimating theta^c. Consecutive equal bits
// collapse by the tower rule; declared independencies (or explicit parent
// sets) allow reordering variables to group equal bits before collapsing.
inline EstimationPlan plan_estimation(const ChangeVector& c, const CausalStructure& s) {
    s.validate();
    const int K = s.K();
    if (c.size() != K + 1)
        throw InputError("change vector length " + std::to_string(c.size()) +
                         " does not match K+1 = " + std::to_string(K + 1));

    EstimationPlan plan;
    plan.c = c;
    plan.order.resize(static_cast<std::size_t>(K));
    std::iota(plan.order.begin(), plan.order.end(), 0);
    plan.outcome_sample = c[K];

    if (s.all_independent) {
        // Group the variables whose mechanism differs from the outcome's
        // sample first; everything after collapses into the outcome stage.
        std::stable_sort(plan.order.begin(), plan.order.end(), [&](int a, int b) {
            return (c[a] != c[K]) > (c[b] != c[K]);
        });
    } else {
        // Greedy adjacent transpositions: swap neighboring variables when the
        // structure allows it and the number of bit boundaries strictly drops.
        std::vector<uint8_t> bits(static_cast<std::size_t>(K + 1));
        auto refresh = [&] {
            for (int i = 0; i < K; ++i)
                bits[static_cast<std::size_t>(i)] = c[plan.order[static_cast<std::size_t>(i)]];
            bits[static_cast<std::size_t>(K)] = c[K];
        };
        refresh();
        bool improved = true;
        int guard = K * K + 1;
        while (improved && guard-- > 0) {
            improved = false;
            for (int i = 0; i + 1 < K; ++i) {
                int a = plan.order[static_cast<std::size_t>(i)];
                int b = plan.order[static_cast<std::size_t>(i + 1)];
                if (c[a] == c[b] || !s.swappable(a, b)) continue;
                int before = detail::count_boundaries(bits);
                std::swap(plan.order[static_cast<std::size_t>(i)],
                          plan.order[static_cast<std::size_t>(i + 1)]);
                refresh();
                if (detail::count_boundaries(bits) < before) {
                    improved = true;
                } else {
                    std::swap(plan.order[static_cast<std::size_t>(i)],
                              plan.order[static_cast<std::size_t>(i + 1)]);
                    refresh();
                }
            }
        }
    }

    plan.plan_bits.resize(static_cast<std::size_t>(K + 1));
    for (int i = 0; i < K; ++i)
        plan.plan_bits[static_cast<std::size_t>(i)] = c[plan.order[static_cast<std::size_t>(i)]];
    plan.plan_bits[static_cast<std::size_t>(K)] = c[K];
    plan.lead_sample = plan.plan_bits[0];

    for (int k = 1; k <= K; ++k) {
        const uint8_t ck = plan.plan_bits[static_cast<std::size_t>(k - 1)];
        const uint8_t cnext = plan.plan_bits[static_cast<std::size_t>(k)];
        if (ck == cnext) continue;  // tower rule: stage skipped
        PlanStage st;
        st.prefix = k;
        st.regression_sample = cnext;
        for (int j = 1; j <= k; ++j) {
            const uint8_t cj = plan.plan_bits[static_cast<std::size_t>(j - 1)];
            if (cj == cnext) continue;  // factor cancels
            st.weight_factors.push_back({j, cj, cnext});
        }
        plan.stages.push_back(std::move(st));
    }
    plan.collapsed = plan.stages.empty();

    for (int j = 1; j <= K; ++j) {
        const uint8_t cj = plan.plan_bits[static_cast<std::size_t>(j - 1)];
        if (cj == plan.outcome_sample) continue;
        plan.full_weight_factors.push_back({j, cj, plan.outcome_sample});
    }
    return plan;
}

}  // namespace mrattrib
