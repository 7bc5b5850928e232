#include <catch2/catch_amalgamated.hpp>

#include "mrattrib/core.hpp"
#include "mrattrib/rng.hpp"

using namespace mrattrib;

namespace {

TwoSampleDataset tiny_dataset() {
    Eigen::MatrixXd x(4, 2);
    x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8;
    Eigen::VectorXd y(4);
    y << 1.0, 2.0, 3.0, 4.0;
    return TwoSampleDataset::make({"x1", "x2"}, x, y, {0, 0, 1, 1});
}

}  // namespace

TEST_CASE("functional_eval") {
    CHECK(functional_eval(Functional::mean(), 3.2) == 3.2);
    CHECK(functional_eval(Functional::second_moment(), 2.0) == 4.0);
    CHECK(functional_eval(Functional::cdf_at(0.0), -1.0) == 1.0);
    CHECK(functional_eval(Functional::cdf_at(0.0), 0.5) == 0.0);
    CHECK(functional_eval(Functional::cdf_at(0.0), 0.0) == 1.0);
    CHECK_THROWS_AS(functional_eval(Functional::mean(), std::nan("")), InputError);
}

TEST_CASE("change vector basics") {
    ChangeVector c = ChangeVector::from_string("010");
    CHECK(c.size() == 3);
    CHECK(c[1] == 1);
    CHECK(c.to_string() == "010");
    CHECK(ChangeVector::from_mask(c.mask(), 3) == c);
    CHECK(ChangeVector::path_vector(2, 3).to_string() == "110");
    CHECK(ChangeVector::path_vector(0, 3).all_zero());
    CHECK(ChangeVector::path_vector(3, 3).all_one());
    CHECK_THROWS_AS(ChangeVector::from_string("01x"), SchemaError);
}

TEST_CASE("enumerate_change_vectors") {
    CHECK(enumerate_change_vectors(1).size() == 4);
    auto v = enumerate_change_vectors(2);
    REQUIRE(v.size() == 8);
    // endpoints present
    bool has_zero = false, has_one = false;
    for (const auto& c : v) {
        has_zero |= c.all_zero();
        has_one |= c.all_one();
    }
    CHECK(has_zero);
    CHECK(has_one);
    // lexicographic, no duplicates
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i - 1].to_string() < v[i].to_string());
    CHECK_THROWS_AS(enumerate_change_vectors(12), CapacityError);
}

TEST_CASE("validate_structure accepts a chain") {
    CausalStructure s;
    s.ordering = {"x1", "x2"};
    s.parents = {std::vector<int>{}, std::vector<int>{0}};
    ValidatedModel m = validate_structure(tiny_dataset(), s);
    CHECK(m.K() == 2);
    CHECK(m.rows0.size() == 2);
    CHECK(m.rows1.size() == 2);
    CHECK(m.row_ids == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("validate_structure rejects forward parents") {
    CausalStructure s;
    s.ordering = {"x1", "x2"};
    s.parents = {std::vector<int>{1}, std::vector<int>{}};
    CHECK_THROWS_AS(validate_structure(tiny_dataset(), s), StructureError);
}

TEST_CASE("validate_structure rejects name mismatches") {
    CausalStructure s;
    s.ordering = {"a", "b"};
    CHECK_THROWS_AS(validate_structure(tiny_dataset(), s), SchemaError);
}

TEST_CASE("degenerate one-sample dataset is rejected") {
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1.0;
    Eigen::VectorXd y(2);
    y << 0.0, 1.0;
    CHECK_THROWS_WITH(TwoSampleDataset::make({"x1"}, x, y, {0, 0}),
                      Catch::Matchers::ContainsSubstring("empty sample 1"));
}

TEST_CASE("non-finite values are rejected") {
    Eigen::MatrixXd x(2, 1);
    x << 0.0, std::nan("");
    Eigen::VectorXd y(2);
    y << 0.0, 1.0;
    CHECK_THROWS_AS(TwoSampleDataset::make({"x1"}, x, y, {0, 1}), InputError);
}

TEST_CASE("subset_model keeps original row ids") {
    ValidatedModel m = validate_structure(tiny_dataset(), CausalStructure{{"x1", "x2"}, {}, {}, false});
    ValidatedModel sub = subset_model(m, {1, 3});
    CHECK(sub.row_ids == std::vector<int>{1, 3});
    CHECK(sub.data.n0 == 1);
    CHECK(sub.data.n1 == 1);
    CHECK(sub.data.y[0] == 2.0);
}

TEST_CASE("rng determinism and moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng r(7);
    double sum = 0.0, sumsq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        sum += z;
        sumsq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sumsq / n - 1.0) < 0.03);
    // recentered exponential multiplier: mean 0, variance 1
    Rng e(9);
    sum = sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = e.exponential() - 1.0;
        sum += z;
        sumsq += z * z;
    }
    CHECK(std::fabs(sum / n) < 0.02);
    CHECK(std::fabs(sumsq / n - 1.0) < 0.03);
}

TEST_CASE("normal quantile and cdf") {
    CHECK(std::fabs(normal_quantile(0.975) - 1.959963984540054) < 1e-8);
    CHECK(std::fabs(normal_cdf(1.959963984540054) - 0.975) < 1e-12);
    CHECK(std::fabs(normal_quantile(0.5)) < 1e-12);
}
