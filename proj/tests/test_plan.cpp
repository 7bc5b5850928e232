#include <catch2/catch_amalgamated.hpp>

#include "mrattrib/plan.hpp"

using namespace mrattrib;

namespace {

CausalStructure chain(int K) {
    CausalStructure s;
    for (int k = 0; k < K; ++k) {
        s.ordering.push_back("x" + std::to_string(k + 1));
        s.parents.push_back(k == 0 ? std::vector<int>{} : std::vector<int>{k - 1});
    }
    return s;
}

CausalStructure independent(int K) {
    CausalStructure s;
    for (int k = 0; k < K; ++k) {
        s.ordering.push_back("x" + std::to_string(k + 1));
        s.parents.push_back(std::vector<int>{});
    }
    s.all_independent = true;
    return s;
}

}  // namespace

TEST_CASE("all-zeros collapses to a sample mean") {
    EstimationPlan p = plan_estimation(ChangeVector::from_string("000"), chain(2));
    CHECK(p.collapsed);
    CHECK(p.stages.empty());
    CHECK(p.lead_sample == 0);
    CHECK(p.full_weight_factors.empty());
}

TEST_CASE("all-ones collapses to a sample mean") {
    EstimationPlan p = plan_estimation(ChangeVector::from_string("111"), chain(2));
    CHECK(p.collapsed);
    CHECK(p.lead_sample == 1);
}

TEST_CASE("mediation example plan (c = 010)") {
    EstimationPlan p = plan_estimation(ChangeVector::from_string("010"), chain(2));
    REQUIRE(p.stages.size() == 2);
    // gamma_1 regressed on sample 1, gamma_2 on sample 0
    CHECK(p.stages[0].prefix == 1);
    CHECK(p.stages[0].regression_sample == 1);
    CHECK(p.stages[1].prefix == 2);
    CHECK(p.stages[1].regression_sample == 0);
    // alpha_1: dP0/dP1 for X1; alpha_2: dP1/dP0 for X2 | X1
    REQUIRE(p.stages[0].weight_factors.size() == 1);
    CHECK(p.stages[0].weight_factors[0].prefix == 1);
    CHECK(p.stages[0].weight_factors[0].numerator_sample == 0);
    CHECK(p.stages[0].weight_factors[0].denominator_sample == 1);
    REQUIRE(p.stages[1].weight_factors.size() == 1);
    CHECK(p.stages[1].weight_factors[0].prefix == 2);
    CHECK(p.stages[1].weight_factors[0].numerator_sample == 1);
    CHECK(p.stages[1].weight_factors[0].denominator_sample == 0);
    CHECK(p.lead_sample == 0);
}

TEST_CASE("path vector b_1 needs one regression and one weight") {
    const int K = 4;
    EstimationPlan p = plan_estimation(ChangeVector::path_vector(1, K + 1), chain(K));
    REQUIRE(p.stages.size() == 1);
    CHECK(p.stages[0].prefix == 1);
    CHECK(p.stages[0].regression_sample == 0);
    REQUIRE(p.stages[0].weight_factors.size() == 1);
    CHECK(p.stages[0].weight_factors[0].numerator_sample == 1);
    CHECK(p.stages[0].weight_factors[0].denominator_sample == 0);
    CHECK(p.lead_sample == 1);
}

TEST_CASE("every path vector has a single stage on a chain") {
    const int K = 5;
    for (int k = 1; k <= K; ++k) {
        EstimationPlan p = plan_estimation(ChangeVector::path_vector(k, K + 1), chain(K));
        REQUIRE(p.stages.size() == 1);
        CHECK(p.stages[0].prefix == k);
        // joint prefix ratio: one conditional factor per shifted coordinate
        CHECK(p.stages[0].weight_factors.size() == static_cast<std::size_t>(k));
    }
}

TEST_CASE("tower rule skips the inner stage for c = 001") {
    EstimationPlan p = plan_estimation(ChangeVector::from_string("001"), chain(2));
    REQUIRE(p.stages.size() == 1);
    CHECK(p.stages[0].prefix == 2);
    CHECK(p.stages[0].regression_sample == 1);
    CHECK(p.stages[0].weight_factors.size() == 2);  // both X1 and X2 shifted vs sample 1
    CHECK(p.lead_sample == 0);
}

TEST_CASE("independent variables reduce to one regression and one weight") {
    const int K = 6;
    // c shifts mechanisms 2 and 5 (0-based 1 and 4), outcome unshifted
    std::vector<uint8_t> bits(K + 1, 0);
    bits[1] = bits[4] = 1;
    EstimationPlan p = plan_estimation(ChangeVector(bits), independent(K));
    REQUIRE(p.stages.size() == 1);
    CHECK(p.stages[0].prefix == 2);  // the two shifted variables, reordered first
    CHECK(p.stages[0].regression_sample == 0);
    CHECK(p.lead_sample == 1);
    // reordered set is exactly the shifted variables
    std::vector<int> first_two{p.order[0], p.order[1]};
    std::sort(first_two.begin(), first_two.end());
    CHECK(first_two == std::vector<int>{1, 4});
}

TEST_CASE("independent variables with shifted outcome flip the roles") {
    const int K = 4;
    std::vector<uint8_t> bits(K + 1, 1);
    bits[2] = 0;  // only x3 stays at sample 0
    EstimationPlan p = plan_estimation(ChangeVector(bits), independent(K));
    REQUIRE(p.stages.size() == 1);
    CHECK(p.stages[0].prefix == 1);
    CHECK(p.stages[0].regression_sample == 1);
    CHECK(p.order[0] == 2);
    CHECK(p.lead_sample == 0);
}

TEST_CASE("default parents forbid reordering") {
    CausalStructure s;
    s.ordering = {"x1", "x2", "x3"};
    // parents unset: all predecessors
    EstimationPlan p = plan_estimation(ChangeVector::from_string("0101"), s);
    CHECK(p.order == std::vector<int>{0, 1, 2});
    CHECK(p.stages.size() == 3);
}

TEST_CASE("declared independence enables the swap") {
    // X2 and X3 share only X1 as parent; swapping groups the shifted pair
    CausalStructure s;
    s.ordering = {"x1", "x2", "x3"};
    s.parents = {std::vector<int>{}, std::vector<int>{0}, std::vector<int>{0}};
    EstimationPlan p = plan_estimation(ChangeVector::from_string("1010"), s);
    REQUIRE(p.stages.size() == 1);  // grouped (1,1,0,0) after swapping x2/x3
    CHECK(p.stages[0].prefix == 2);
    EstimationPlan q = plan_estimation(ChangeVector::from_string("1010"), chain(3));
    CHECK(q.stages.size() == 3);  // chain forbids the swap
}

TEST_CASE("length mismatch is an input error") {
    CHECK_THROWS_AS(plan_estimation(ChangeVector::from_string("01"), chain(2)), InputError);
}
