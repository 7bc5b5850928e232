#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "mrattrib/core.hpp"
#include "mrattrib/learners.hpp"

namespace mrattrib {

struct WeightConfig {
    double w_lo = 1e-3;       // weight clip lower bound (> 0)
    double w_hi = 1e3;        // weight clip upper bound
    double prob_clip = 1e-3;  // classifier probability clip before the density-ratio map
    double automatic_penalty = 1e-8;
    int automatic_degree = 2;  // shared polynomial map default

    void validate() const {
        if (!(w_lo > 0.0) || !(w_hi > w_lo)) throw ConfigError("weight clip bounds must satisfy 0 < lo < hi");
        if (!(prob_clip > 0.0 && prob_clip < 0.5)) throw ConfigError("prob_clip must be in (0, 0.5)");
        if (automatic_penalty < 0.0) throw ConfigError("automatic penalty must be >= 0");
    }
};

// Plug-in density ratio dP1/dP0 from a posterior probability and the sample
// counts standing in for the prior odds.
inline double bayes_weight(double beta, long n0, long n1) {
    if (!(beta > 0.0 && beta < 1.0)) throw InputError("bayes_weight: probability must be in (0,1)");
    if (n0 < 1 || n1 < 1) throw InputError("bayes_weight: sample counts must be positive");
    return beta / (1.0 - beta) * (static_cast<double>(n0) / static_cast<double>(n1));
}

// Density-ratio model for a joint variable prefix. Classification route keeps
// a T-classifier plus training counts; automatic route keeps a linear model in
// expanded features minimizing E_den[m^2] - 2 E_num[m].
struct WeightModel {
    enum class Route { Classification, Automatic };
    Route route = Route::Classification;
    int numerator_sample = 1;
    int denominator_sample = 0;
    int prefix = 0;  // number of leading (plan-ordered) columns consumed
    WeightConfig cfg;

    FittedModel classifier;  // classification route: P(T=1 | prefix)
    long n0 = 0, n1 = 0;

    PolynomialMap auto_map;  // automatic route
    Eigen::VectorXd auto_coef;
    double auto_intercept = 0.0;

    // Clipped weight at a prefix point. The caller may track how often the
    // clip binds via *clipped.
    double eval(const Eigen::Ref<const Eigen::VectorXd>& xprefix, int row_id = -1,
                bool* clipped = nullptr) const {
        double w;
        if (prefix == 0) {
            w = 1.0;  // empty conditioning set
        } else if (route == Route::Classification) {
            double beta = classifier.predict(xprefix, row_id);
            beta = clip(beta, cfg.prob_clip, 1.0 - cfg.prob_clip);
            w = numerator_sample == 1 ? bayes_weight(beta, n0, n1)
                                      : bayes_weight(1.0 - beta, n1, n0);
        } else {
            w = auto_intercept;
            if (auto_map.size() > 0) w += auto_map.expand_one(xprefix).dot(auto_coef);
        }
        double clipped_w = clip(w, cfg.w_lo, cfg.w_hi);
        if (clipped && clipped_w != w) *clipped = true;
        return clipped_w;
    }
};

// Classification route for the density ratio of a variable prefix: train a
// T-classifier on the concatenated samples, map probabilities through the
// Bayes ratio. prefix_columns lists dataset column indices in plan order.
inline WeightModel fit_rn_classification(const ValidatedModel& train,
                                         const std::vector<int>& prefix_columns, int numerator_sample,
                                         const ClassifierSpec& spec, const WeightConfig& cfg,
                                         const std::vector<int>* calibration_rows = nullptr) {
    cfg.validate();
    WeightModel w;
    w.route = WeightModel::Route::Classification;
    w.numerator_sample = numerator_sample;
    w.denominator_sample = 1 - numerator_sample;
    w.prefix = static_cast<int>(prefix_columns.size());
    w.cfg = cfg;
    if (prefix_columns.empty()) return w;  // constant weight 1

    const long n = train.n();
    std::vector<char> is_cal(static_cast<std::size_t>(n), 0);
    if (calibration_rows)
        for (int r : *calibration_rows) is_cal[static_cast<std::size_t>(r)] = 1;

    std::vector<long> fit_rows;
    for (long i = 0; i < n; ++i)
        if (!is_cal[static_cast<std::size_t>(i)]) fit_rows.push_back(i);

    auto gather = [&](const std::vector<long>& rows, Eigen::MatrixXd& X, std::vector<int>& lab,
                      std::vector<int>& rid) {
        X.resize(static_cast<long>(rows.size()), static_cast<long>(prefix_columns.size()));
        lab.resize(rows.size());
        rid.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < prefix_columns.size(); ++j)
                X(static_cast<long>(i), static_cast<long>(j)) =
                    train.data.x(rows[i], prefix_columns[j]);
            lab[i] = train.data.t[static_cast<std::size_t>(rows[i])];
            rid[i] = train.row_ids[static_cast<std::size_t>(rows[i])];
        }
    };

    Eigen::MatrixXd Xf;
    std::vector<int> labf, ridf;
    gather(fit_rows, Xf, labf, ridf);
    w.classifier = fit_logistic_classifier(spec, Xf, labf);
    w.n0 = 0;
    w.n1 = 0;
    for (int l : labf) (l == 0 ? w.n0 : w.n1)++;

    if (spec.calibration != Calibration::None && calibration_rows && !calibration_rows->empty()) {
        std::vector<long> cal(calibration_rows->begin(), calibration_rows->end());
        Eigen::MatrixXd Xc;
        std::vector<int> labc, ridc;
        gather(cal, Xc, labc, ridc);
        w.classifier =
            calibrate_probabilities(w.classifier, Xc, labc, spec.calibration, cfg.prob_clip, &ridc);
    }
    return w;
}

// Automatic route: closed-form minimizer of E_den[m^2] - 2 E_num[m] over
// linear functions of the given features, intercept unpenalized. The feature
// matrices are already expanded; callers wanting the shared polynomial map use
// fit_rn_automatic_raw below.
inline WeightModel fit_rn_automatic(const Eigen::MatrixXd& features_den,
                                    const Eigen::MatrixXd& features_num, double penalty,
                                    const WeightConfig& cfg = {}) {
    cfg.validate();
    if (features_den.rows() < 1 || features_num.rows() < 1)
        throw InputError("automatic weights: both samples must be nonempty");
    if (features_den.cols() != features_num.cols())
        throw InputError("automatic weights: feature width mismatch");
    const long p = features_den.cols();
    const double n_den = static_cast<double>(features_den.rows());
    const double n_num = static_cast<double>(features_num.rows());

    Eigen::MatrixXd G(p + 1, p + 1);
    G(0, 0) = 1.0;
    Eigen::VectorXd mean_den = features_den.colwise().mean();
    G.block(0, 1, 1, p) = mean_den.transpose();
    G.block(1, 0, p, 1) = mean_den;
    G.block(1, 1, p, p) = features_den.transpose() * features_den / n_den;
    G.block(1, 1, p, p).diagonal().array() += penalty;  // intercept unpenalized

    Eigen::VectorXd rhs(p + 1);
    rhs[0] = 1.0;
    rhs.tail(p) = features_num.colwise().mean();
    (void)n_num;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    Eigen::VectorXd b = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !b.allFinite() ||
        (G * b - rhs).lpNorm<Eigen::Infinity>() > 1e-6 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))
        throw NumericalError("singular Gram matrix in automatic weight fit; use a positive penalty");

    WeightModel w;
    w.route = WeightModel::Route::Automatic;
    w.cfg = cfg;
    w.prefix = static_cast<int>(p);  // caller overrides when using a feature map
    w.auto_intercept = b[0];
    w.auto_coef = b.tail(p);
    w.auto_map = PolynomialMap::make(static_cast<int>(p), 1);
    return w;
}

// Automatic route on raw prefix columns through the shared polynomial map.
inline WeightModel fit_rn_automatic_raw(const ValidatedModel& train,
                                        const std::vector<int>& prefix_columns, int numerator_sample,
                                        const WeightConfig& cfg) {
    WeightModel w;
    w.route = WeightModel::Route::Automatic;
    w.numerator_sample = numerator_sample;
    w.denominator_sample = 1 - numerator_sample;
    w.prefix = static_cast<int>(prefix_columns.size());
    w.cfg = cfg;
    if (prefix_columns.empty()) return w;

    PolynomialMap map = PolynomialMap::make(static_cast<int>(prefix_columns.size()),
                                            cfg.automatic_degree);
    auto gather = [&](const std::vector<int>& rows) {
        Eigen::MatrixXd X(static_cast<long>(rows.size()), static_cast<long>(prefix_columns.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < prefix_columns.size(); ++j)
                X(static_cast<long>(i), static_cast<long>(j)) =
                    train.data.x(rows[i], prefix_columns[j]);
        return map.expand(X);
    };
    const std::vector<int>& num_rows = numerator_sample == 1 ? train.rows1 : train.rows0;
    const std::vector<int>& den_rows = numerator_sample == 1 ? train.rows0 : train.rows1;
    WeightModel fitted = fit_rn_automatic(gather(den_rows), gather(num_rows),
                                          cfg.automatic_penalty, cfg);
    w.auto_intercept = fitted.auto_intercept;
    w.auto_coef = fitted.auto_coef;
    w.auto_map = map;
    return w;
}

// Conditional density ratio for one variable given the preceding prefix,
// formed as the ratio of two joint-prefix models; the denominator model is
// floored at w_lo before dividing.
struct ConditionalWeight {
    std::shared_ptr<const WeightModel> joint;      // prefix j
    std::shared_ptr<const WeightModel> preceding;  // prefix j-1; null for j = 1

    double eval(const Eigen::Ref<const Eigen::VectorXd>& xplan, int row_id = -1,
                bool* clipped = nullptr) const {
        double num = joint->eval(xplan.head(joint->prefix), row_id, clipped);
        double den = 1.0;
        if (preceding && preceding->prefix > 0)
            den = std::max(preceding->eval(xplan.head(preceding->prefix), row_id, clipped),
                           preceding->cfg.w_lo);
        return num / den;
    }
};

// Product weight for one debiasing stage: clipped product of conditional
// factors.
struct StageWeight {
    std::vector<ConditionalWeight> factors;
    WeightConfig cfg;

    double eval(const Eigen::Ref<const Eigen::VectorXd>& xplan, int row_id = -1,
                bool* clipped = nullptr) const {
        double w = 1.0;
        for (const auto& f : factors) w *= f.eval(xplan, row_id, clipped);
        double out = clip(w, cfg.w_lo, cfg.w_hi);
        if (clipped && out != w) *clipped = true;
        return out;
    }
};

}  // namespace mrattrib
