#include <catch2/catch_amalgamated.hpp>

#include "mrattrib/learners.hpp"
#include "mrattrib/rng.hpp"

using namespace mrattrib;

TEST_CASE("exact linear targets are interpolated") {
    Rng rng(1);
    const long n = 50;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        y[i] = 2.0 - 1.5 * X(i, 0) + 0.75 * X(i, 1);
    }
    FittedModel m = fit_linear_regressor(RegressorSpec::ols(1), X, y);
    REQUIRE(m.coef.size() == 2);
    CHECK(std::fabs(m.intercept - 2.0) < 1e-8);
    CHECK(std::fabs(m.coef[0] + 1.5) < 1e-8);
    CHECK(std::fabs(m.coef[1] - 0.75) < 1e-8);
    Eigen::Vector2d x(0.3, -0.2);
    CHECK(std::fabs(m.predict(x) - (2.0 - 1.5 * 0.3 + 0.75 * -0.2)) < 1e-8);
}

TEST_CASE("huge ridge penalty shrinks slopes to zero") {
    Rng rng(2);
    const long n = 200;
    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        y[i] = 1.0 + X(i, 0) + rng.normal();
    }
    FittedModel m = fit_linear_regressor(RegressorSpec::ridge(1e9, 1), X, y);
    CHECK(std::fabs(m.coef[0]) < 1e-6);
    CHECK(std::fabs(m.coef[1]) < 1e-6);
    CHECK(std::fabs(m.intercept - y.mean()) < 1e-6);
}

TEST_CASE("lasso on an orthonormal design soft-thresholds the ols fit") {
    // columns with mean 0, (1/n) z'z = 1, (1/n) z1'z2 = 0
    const long n = 8;
    Eigen::MatrixXd X(n, 2);
    X.col(0) << 1, -1, 1, -1, 1, -1, 1, -1;
    X.col(1) << 1, 1, -1, -1, 1, 1, -1, -1;
    Eigen::VectorXd y(n);
    y << 2.3, -0.7, 1.9, -1.1, 2.7, -0.5, 1.5, -1.5;
    const double lambda = 0.4;
    Eigen::Vector2d b_ols(X.col(0).dot(y) / n, X.col(1).dot(y) / n);
    auto soft = [&](double v) {
        return v > lambda ? v - lambda : (v < -lambda ? v + lambda : 0.0);
    };
    FittedModel m = fit_linear_regressor(RegressorSpec::lasso(lambda, 1), X, y);
    CHECK(std::fabs(m.coef[0] - soft(b_ols[0])) < 1e-9);
    CHECK(std::fabs(m.coef[1] - soft(b_ols[1])) < 1e-9);
    CHECK(std::fabs(m.intercept - y.mean()) < 1e-9);
}

TEST_CASE("lasso coordinate descent objective is monotone and restart-consistent") {
    Rng rng(3);
    const long n = 120, p = 6;
    Eigen::MatrixXd Z(n, p);
    for (long i = 0; i < n; ++i) {
        double common = rng.normal();
        for (long j = 0; j < p; ++j) Z(i, j) = 0.6 * common + rng.normal();
    }
    Standardizer st = Standardizer::fit(Z);
    Eigen::MatrixXd Zs = st.apply(Z);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) y[i] = Zs(i, 0) - 0.5 * Zs(i, 2) + rng.normal();
    Eigen::VectorXd yc = y.array() - y.mean();

    std::vector<double> objs;
    Eigen::VectorXd b1 = detail::lasso_cd(Zs, yc, 0.1, Eigen::VectorXd::Zero(p), &objs);
    for (std::size_t s = 1; s < objs.size(); ++s) CHECK(objs[s] <= objs[s - 1] + 1e-12);

    Eigen::VectorXd warm(p);
    for (long j = 0; j < p; ++j) warm[j] = rng.normal();
    Eigen::VectorXd b2 = detail::lasso_cd(Zs, yc, 0.1, warm);
    CHECK(std::fabs(detail::lasso_objective(Zs, yc, b1, 0.1) -
                    detail::lasso_objective(Zs, yc, b2, 0.1)) < 1e-6);
}

TEST_CASE("singular unpenalized design reports a numerical error") {
    Eigen::MatrixXd X(10, 2);
    for (long i = 0; i < 10; ++i) {
        X(i, 0) = static_cast<double>(i);
        X(i, 1) = 2.0 * static_cast<double>(i);  // collinear
    }
    Eigen::VectorXd y = X.col(0);
    CHECK_THROWS_AS(fit_linear_regressor(RegressorSpec::ols(1), X, y), NumericalError);
}

TEST_CASE("constant targets short-circuit to a constant model") {
    Eigen::MatrixXd X(5, 1);
    X << 1, 2, 3, 4, 5;
    Eigen::VectorXd y = Eigen::VectorXd::Constant(5, 3.25);
    FittedModel m = fit_linear_regressor(RegressorSpec::ols(2), X, y);
    Eigen::VectorXd x(1);
    x << 10.0;
    CHECK(m.predict(x) == 3.25);
}

TEST_CASE("cv penalty selection is invariant to row order") {
    Rng rng(4);
    const long n = 160;
    Eigen::MatrixXd X(n, 4);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < 4; ++j) X(i, j) = rng.normal();
        y[i] = 1.2 * X(i, 0) + rng.normal();
    }
    RegressorSpec spec = RegressorSpec::lasso(std::nullopt, 1);
    spec.cv_grid = {1e-3, 1e-2, 1e-1, 1.0};
    spec.cv_folds = 4;
    spec.cv_seed = 11;
    FittedModel a = fit_linear_regressor(spec, X, y);
    Eigen::MatrixXd Xr = X.colwise().reverse();
    Eigen::VectorXd yr = y.reverse();
    FittedModel b = fit_linear_regressor(spec, Xr, yr);
    CHECK(a.penalty_used == b.penalty_used);
}

TEST_CASE("label-independent features give the base rate") {
    Rng rng(5);
    const long n = 2000;
    Eigen::MatrixXd X(n, 1);
    std::vector<int> lab(n);
    long n1 = 0;
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        lab[static_cast<std::size_t>(i)] = rng.uniform() < 0.3 ? 1 : 0;
        n1 += lab[static_cast<std::size_t>(i)];
    }
    FittedModel m = fit_logistic_classifier(ClassifierSpec::logistic(1, 0.0), X, lab);
    const double base = static_cast<double>(n1) / static_cast<double>(n);
    const double tol = 2.0 / std::sqrt(static_cast<double>(n));
    for (double x : {-1.0, 0.0, 1.0}) {
        Eigen::VectorXd xx(1);
        xx << x;
        CHECK(std::fabs(m.predict(xx) - base) < tol);
    }
}

TEST_CASE("symmetric gaussian classes cross at one half") {
    Rng rng(6);
    const long n = 10000;
    Eigen::MatrixXd X(n, 1);
    std::vector<int> lab(n);
    for (long i = 0; i < n; ++i) {
        int t = i < n / 2 ? 0 : 1;
        lab[static_cast<std::size_t>(i)] = t;
        X(i, 0) = rng.normal(t == 0 ? -1.0 : 1.0, 1.0);
    }
    FittedModel m = fit_logistic_classifier(ClassifierSpec::logistic(1, 0.0), X, lab);
    Eigen::VectorXd mid(1);
    mid << 0.0;
    CHECK(std::fabs(m.predict(mid) - 0.5) < 0.02);
}

TEST_CASE("quadratic logistic recovers the gaussian log-density ratio") {
    // x | t=0 ~ N(1, 1), x | t=1 ~ N(1, 1.21): the true log-odds is the
    // quadratic -log(1.1) + (x-1)^2 (1 - 1/1.21) / 2 (equal class sizes)
    Rng rng(7);
    const long half = 20000;
    Eigen::MatrixXd X(2 * half, 1);
    std::vector<int> lab(2 * half);
    for (long i = 0; i < half; ++i) {
        X(i, 0) = rng.normal(1.0, 1.0);
        lab[static_cast<std::size_t>(i)] = 0;
        X(half + i, 0) = rng.normal(1.0, 1.1);
        lab[static_cast<std::size_t>(half + i)] = 1;
    }
    FittedModel m = fit_logistic_classifier(ClassifierSpec::logistic(2, 0.0), X, lab);
    auto true_log_odds = [](double x) {
        return -std::log(1.1) + (x - 1.0) * (x - 1.0) * (1.0 - 1.0 / 1.21) / 2.0;
    };
    for (double x : {-1.0, 0.0, 1.0, 2.0, 3.0}) {
        Eigen::VectorXd xx(1);
        xx << x;
        double p = m.predict(xx);
        double fitted = std::log(p / (1.0 - p));
        CHECK(std::fabs(fitted - true_log_odds(x)) < 0.08);
    }
}

TEST_CASE("single-class labels are rejected") {
    Eigen::MatrixXd X(4, 1);
    X << 1, 2, 3, 4;
    CHECK_THROWS_AS(fit_logistic_classifier(ClassifierSpec::logistic(1, 0.0), X, {1, 1, 1, 1}),
                    InputError);
}

TEST_CASE("separation under zero penalty raises a warning") {
    Eigen::MatrixXd X(40, 1);
    std::vector<int> lab(40);
    for (long i = 0; i < 40; ++i) {
        X(i, 0) = static_cast<double>(i) - 19.5;
        lab[static_cast<std::size_t>(i)] = X(i, 0) > 0 ? 1 : 0;
    }
    FittedModel m = fit_logistic_classifier(ClassifierSpec::logistic(1, 0.0), X, lab);
    CHECK_FALSE(m.warning.empty());
    FittedModel p = fit_logistic_classifier(ClassifierSpec::logistic(1, 0.1), X, lab);
    CHECK(p.warning.empty());
}

TEST_CASE("logit-lasso matches plain logistic at tiny penalty") {
    Rng rng(8);
    const long n = 4000;
    Eigen::MatrixXd X(n, 2);
    std::vector<int> lab(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        double eta = 0.5 + 1.0 * X(i, 0) - 0.5 * X(i, 1);
        lab[static_cast<std::size_t>(i)] = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
    }
    FittedModel l2 = fit_logistic_classifier(ClassifierSpec::logistic(1, 0.0), X, lab);
    FittedModel l1 = fit_logistic_classifier(ClassifierSpec::logit_lasso(1e-6, 1), X, lab);
    for (double x : {-1.0, 0.0, 1.0}) {
        Eigen::Vector2d xx(x, -x);
        CHECK(std::fabs(l1.predict(xx) - l2.predict(xx)) < 0.01);
    }
}

namespace {

FittedModel constant_score_classifier(double p) {
    FittedModel m;
    m.kind = FittedModel::Kind::Classifier;
    m.map = PolynomialMap::make(1, 1);
    m.coef = Eigen::VectorXd::Zero(1);
    m.intercept = std::log(p / (1.0 - p));
    return m;
}

}  // namespace

TEST_CASE("single-block isotonic calibration returns the holdout base rate") {
    FittedModel m = constant_score_classifier(0.9);
    Eigen::MatrixXd X(10, 1);
    X.setZero();
    std::vector<int> lab = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    FittedModel cal = calibrate_probabilities(m, X, lab, Calibration::Isotonic);
    Eigen::VectorXd x(1);
    x << 0.0;
    CHECK(std::fabs(cal.predict(x) - 0.5) < 1e-12);
}

TEST_CASE("isotonic calibration is the identity on already-calibrated bins") {
    // raw scores 0.2/0.4/0.6/0.8, label frequency in each bin equals the score
    FittedModel m;
    m.kind = FittedModel::Kind::Classifier;
    m.map = PolynomialMap::make(1, 1);
    m.coef = Eigen::VectorXd::Ones(1);
    m.intercept = 0.0;  // raw prob = sigmoid(x)
    std::vector<double> bins = {0.2, 0.4, 0.6, 0.8};
    const int per_bin = 10;
    Eigen::MatrixXd X(static_cast<long>(bins.size()) * per_bin, 1);
    std::vector<int> lab;
    long r = 0;
    for (double b : bins) {
        for (int i = 0; i < per_bin; ++i, ++r) {
            X(r, 0) = std::log(b / (1.0 - b));
            lab.push_back(i < static_cast<int>(std::lround(b * per_bin)) ? 1 : 0);
        }
    }
    FittedModel cal = calibrate_probabilities(m, X, lab, Calibration::Isotonic);
    REQUIRE(cal.calibrator.has_value());
    for (double b : bins) CHECK(std::fabs(cal.calibrator->apply(b) - b) < 1e-9);
}

TEST_CASE("isotonic calibration is nondecreasing and clipped") {
    Rng rng(9);
    FittedModel m;
    m.kind = FittedModel::Kind::Classifier;
    m.map = PolynomialMap::make(1, 1);
    m.coef = Eigen::VectorXd::Ones(1);
    m.intercept = 0.0;
    const long n = 300;
    Eigen::MatrixXd X(n, 1);
    std::vector<int> lab(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        lab[static_cast<std::size_t>(i)] = rng.uniform() < detail::sigmoid(0.7 * X(i, 0)) ? 1 : 0;
    }
    FittedModel cal = calibrate_probabilities(m, X, lab, Calibration::Isotonic);
    REQUIRE(cal.calibrator.has_value());
    double prev = -1.0;
    for (double s = 0.0; s <= 1.0; s += 0.01) {
        double v = cal.calibrator->apply(s);
        CHECK(v >= prev - 1e-15);
        CHECK(v >= 1e-3);
        CHECK(v <= 1.0 - 1e-3);
        prev = v;
    }
}

TEST_CASE("sigmoid calibration pulls an offset score back") {
    Rng rng(10);
    FittedModel m;
    m.kind = FittedModel::Kind::Classifier;
    m.map = PolynomialMap::make(1, 1);
    m.coef = Eigen::VectorXd::Ones(1);
    m.intercept = 2.0;  // systematically overconfident scores
    const long n = 2000;
    Eigen::MatrixXd X(n, 1);
    std::vector<int> lab(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = rng.normal();
        lab[static_cast<std::size_t>(i)] = rng.uniform() < detail::sigmoid(X(i, 0)) ? 1 : 0;
    }
    FittedModel cal = calibrate_probabilities(m, X, lab, Calibration::Sigmoid);
    Eigen::VectorXd x(1);
    x << 0.0;
    CHECK(std::fabs(m.predict(x) - detail::sigmoid(2.0)) < 1e-12);
    // the two-parameter recalibration cannot be exact here; it must still pull
    // the overconfident raw score most of the way back to 1/2
    CHECK(std::fabs(cal.predict(x) - 0.5) < 0.12);
}

TEST_CASE("single-class calibration holdout is rejected") {
    FittedModel m = constant_score_classifier(0.7);
    Eigen::MatrixXd X(3, 1);
    X.setZero();
    CHECK_THROWS_AS(calibrate_probabilities(m, X, {1, 1, 1}, Calibration::Isotonic), InputError);
}

TEST_CASE("precomputed learner predicts by original row id") {
    auto table = std::make_shared<PrecomputedTable>();
    table->values = {1.5, 2.5, -3.0};
    RegressorSpec spec;
    spec.family = RegressorFamily::Precomputed;
    spec.precomputed = table;
    FittedModel m = fit_linear_regressor(spec, Eigen::MatrixXd(), Eigen::VectorXd());
    Eigen::VectorXd x(1);
    x << 99.0;  // features are ignored
    CHECK(m.predict(x, 0) == 1.5);
    CHECK(m.predict(x, 2) == -3.0);
    CHECK_THROWS_AS(m.predict(x, 3), InputError);
    CHECK_THROWS_AS(m.predict(x, -1), InputError);
}

TEST_CASE("predictions are deterministic") {
    Rng rng(11);
    Eigen::MatrixXd X(30, 2);
    Eigen::VectorXd y(30);
    for (long i = 0; i < 30; ++i) {
        X(i, 0) = rng.normal();
        X(i, 1) = rng.normal();
        y[i] = X(i, 0) + rng.normal();
    }
    FittedModel a = fit_linear_regressor(RegressorSpec::ols(2), X, y);
    FittedModel b = fit_linear_regressor(RegressorSpec::ols(2), X, y);
    Eigen::Vector2d x(0.123, -4.56);
    CHECK(a.predict(x) == b.predict(x));
}

TEST_CASE("polynomial map covers interactions") {
    PolynomialMap m = PolynomialMap::make(2, 2);
    CHECK(m.size() == 5);  // x1, x2, x1^2, x1 x2, x2^2
    Eigen::Vector2d x(2.0, 3.0);
    Eigen::VectorXd f = m.expand_one(x);
    std::vector<double> got(f.data(), f.data() + f.size());
    std::sort(got.begin(), got.end());
    std::vector<double> want = {2.0, 3.0, 4.0, 6.0, 9.0};
    CHECK(got == want);
}
