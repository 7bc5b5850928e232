#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrattrib/common.hpp"
#include "mrattrib/features.hpp"
#include "mrattrib/rng.hpp"

namespace mrattrib {

enum class RegressorFamily { OlsPoly, RidgePoly, Lasso, Precomputed };
enum class ClassifierFamily { LogisticL2, LogisticL1, Precomputed };
enum class Calibration { None, Isotonic, Sigmoid };

inline std::vector<double> default_cv_grid() {
    // 20 log-spaced penalties from 1e-4 to 1e2.
    std::vector<double> g(20);
    for (int i = 0; i < 20; ++i)
        g[static_cast<std::size_t>(i)] = std::pow(10.0, -4.0 + 6.0 * i / 19.0);
    return g;
}

// External predictions keyed by original row position (file-backed learner).
struct PrecomputedTable {
    std::vector<double> values;
};

struct RegressorSpec {
    RegressorFamily family = RegressorFamily::OlsPoly;
    int degree = 2;
    std::optional<double> penalty = 0.0;  // nullopt -> select by cross-validation
    std::vector<double> cv_grid = default_cv_grid();
    int cv_folds = 5;
    uint64_t cv_seed = 0;
    std::shared_ptr<const PrecomputedTable> precomputed;

    static RegressorSpec ols(int degree = 2) { return {RegressorFamily::OlsPoly, degree, 0.0}; }
    static RegressorSpec ridge(std::optional<double> lambda, int degree = 2) {
        RegressorSpec s;
        s.family = RegressorFamily::RidgePoly;
        s.degree = degree;
        s.penalty = lambda;
        return s;
    }
    static RegressorSpec lasso(std::optional<double> lambda = std::nullopt, int degree = 1) {
        RegressorSpec s;
        s.family = RegressorFamily::Lasso;
        s.degree = degree;
        s.penalty = lambda;
        return s;
    }

    void validate() const {
        if (degree < 1) throw ConfigError("regression degree must be >= 1");
        if (penalty && *penalty < 0.0) throw ConfigError("regression penalty must be >= 0");
        if (!penalty && cv_grid.empty()) throw ConfigError("cv penalty selection needs a nonempty grid");
        if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
        if (family == RegressorFamily::Precomputed && !precomputed)
            throw ConfigError("precomputed regressor needs a prediction table");
    }
};

struct ClassifierSpec {
    ClassifierFamily family = ClassifierFamily::LogisticL2;
    int degree = 2;
    std::optional<double> penalty = 0.0;
    std::vector<double> cv_grid = default_cv_grid();
    int cv_folds = 5;
    uint64_t cv_seed = 0;
    Calibration calibration = Calibration::None;
    double calibration_fraction = 0.2;
    std::shared_ptr<const PrecomputedTable> precomputed;

    static ClassifierSpec logistic(int degree = 2, std::optional<double> lambda = 0.0) {
        ClassifierSpec s;
        s.degree = degree;
        s.penalty = lambda;
        return s;
    }
    static ClassifierSpec logit_lasso(std::optional<double> lambda = std::nullopt, int degree = 1) {
        ClassifierSpec s;
        s.family = ClassifierFamily::LogisticL1;
        s.degree = degree;
        s.penalty = lambda;
        return s;
    }

    void validate() const {
        if (degree < 1) throw ConfigError("classifier degree must be >= 1");
        if (penalty && *penalty < 0.0) throw ConfigError("classifier penalty must be >= 0");
        if (!penalty && cv_grid.empty()) throw ConfigError("cv penalty selection needs a nonempty grid");
        if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
        if (calibration_fraction <= 0.0 || calibration_fraction >= 1.0)
            throw ConfigError("calibration_fraction must be in (0,1)");
        if (family == ClassifierFamily::Precomputed && !precomputed)
            throw ConfigError("precomputed classifier needs a prediction table");
    }
};

// Monotone recalibration map on [0,1].
struct MonotoneMap {
    enum class Type { Isotonic, Sigmoid };
    Type type = Type::Isotonic;
    std::vector<double> xs, ys;  // isotonic knots, xs ascending
    double a = 1.0, b = 0.0;     // sigmoid: sigma(a*s + b)
    double clip_eps = 1e-3;

    double apply(double s) const {
        double v;
        if (type == Type::Sigmoid) {
            double eta = clip(a * s + b, -30.0, 30.0);
            v = 1.0 / (1.0 + std::exp(-eta));
        } else {
            if (xs.empty()) throw NumericalError("empty isotonic map");
            if (s <= xs.front()) v = ys.front();
            else if (s >= xs.back()) v = ys.back();
            else {
                auto it = std::upper_bound(xs.begin(), xs.end(), s);
                std::size_t hi = static_cast<std::size_t>(it - xs.begin());
                std::size_t lo = hi - 1;
                double span = xs[hi] - xs[lo];
                double w = span > 0.0 ? (s - xs[lo]) / span : 0.0;
                v = ys[lo] + w * (ys[hi] - ys[lo]);
            }
        }
        return clip(v, clip_eps, 1.0 - clip_eps);
    }
};

// Fitted regression or classification model. Prediction is a pure function of
// the inputs; coefficients are reported on the original (unexpanded) scale.
struct FittedModel {
    enum class Kind { Regressor, Classifier };
    Kind kind = Kind::Regressor;
    PolynomialMap map;
    Eigen::VectorXd coef;  // expanded-feature coefficients, original units
    double intercept = 0.0;
    std::optional<MonotoneMap> calibrator;
    std::shared_ptr<const PrecomputedTable> precomputed;  // overrides the linear part
    double penalty_used = 0.0;
    uint64_t cv_seed = 0;
    std::string warning;

    double linear_value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        return intercept + map.expand_one(x).dot(coef);
    }

    double raw_probability(const Eigen::Ref<const Eigen::VectorXd>& x, int row_id = -1) const {
        double eta;
        if (precomputed) {
            return clip(precomputed_value(row_id), 0.0, 1.0);
        }
        eta = clip(linear_value(x), -30.0, 30.0);
        return 1.0 / (1.0 + std::exp(-eta));
    }

    // Regressors return the fitted value; classifiers the (calibrated)
    // probability of sample 1.
    double predict(const Eigen::Ref<const Eigen::VectorXd>& x, int row_id = -1) const {
        if (kind == Kind::Regressor) {
            if (precomputed) return precomputed_value(row_id);
            return linear_value(x);
        }
        double p = raw_probability(x, row_id);
        if (calibrator) p = calibrator->apply(p);
        return p;
    }

    Eigen::VectorXd predict_many(const Eigen::MatrixXd& X, const std::vector<int>* row_ids = nullptr) const {
        Eigen::VectorXd out(X.rows());
        for (long i = 0; i < X.rows(); ++i) {
            int rid = row_ids ? (*row_ids)[static_cast<std::size_t>(i)] : -1;
            out[i] = predict(X.row(i).transpose(), rid);
        }
        return out;
    }

private:
    double precomputed_value(int row_id) const {
        if (row_id < 0 || row_id >= static_cast<int>(precomputed->values.size()))
            throw InputError("precomputed learner: row id " + std::to_string(row_id) +
                             " outside the prediction table");
        return precomputed->values[static_cast<std::size_t>(row_id)];
    }
};

namespace detail {

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

struct CoreFit {
    double intercept = 0.0;
    Eigen::VectorXd slopes;  // standardized scale
    std::string warning;
};

// Lasso objective (1/(2n))||yc - Z b||^2 + lambda ||b||_1 on standardized Z.
inline double lasso_objective(const Eigen::MatrixXd& Z, const Eigen::VectorXd& yc,
                              const Eigen::VectorXd& b, double lambda) {
    double rss = (yc - Z * b).squaredNorm();
    return rss / (2.0 * static_cast<double>(Z.rows())) + lambda * b.lpNorm<1>();
}

inline Eigen::VectorXd lasso_cd(const Eigen::MatrixXd& Z, const Eigen::VectorXd& yc, double lambda,
                                Eigen::VectorXd b, std::vector<double>* sweep_objectives = nullptr,
                                double tol = 1e-10, int max_sweeps = 2000) {
    const long n = Z.rows(), p = Z.cols();
    Eigen::VectorXd colsq(p);
    for (long j = 0; j < p; ++j) colsq[j] = Z.col(j).squaredNorm() / static_cast<double>(n);
    Eigen::VectorXd r = yc - Z * b;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (long j = 0; j < p; ++j) {
            if (colsq[j] <= 0.0) continue;
            double rho = Z.col(j).dot(r) / static_cast<double>(n) + colsq[j] * b[j];
            double bj = soft_threshold(rho, lambda) / colsq[j];
            double delta = bj - b[j];
            if (delta != 0.0) {
                r -= Z.col(j) * delta;
                b[j] = bj;
                max_delta = std::max(max_delta, std::fabs(delta));
            }
        }
        if (sweep_objectives) sweep_objectives->push_back(lasso_objective(Z, yc, b, lambda));
        if (max_delta < tol) break;
    }
    return b;
}

// Linear-family fit on expanded features. Standardizes internally, returns
// coefficients still on the standardized scale plus the centered intercept.
inline CoreFit fit_linear_std(RegressorFamily family, double lambda, const Eigen::MatrixXd& Zs,
                              const Eigen::VectorXd& yc, const Eigen::VectorXd* warm = nullptr,
                              std::vector<double>* sweep_objectives = nullptr) {
    const long p = Zs.cols();
    CoreFit fit;
    fit.slopes = Eigen::VectorXd::Zero(p);
    if (p == 0) return fit;
    switch (family) {
        case RegressorFamily::OlsPoly: {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Zs);
            if (qr.rank() < p)
                throw NumericalError(
                    "singular design in unpenalized regression; use ridge_poly or reduce the degree");
            fit.slopes = qr.solve(yc);
            break;
        }
        case RegressorFamily::RidgePoly: {
            const double n = static_cast<double>(Zs.rows());
            Eigen::MatrixXd G = Zs.transpose() * Zs / n;
            G.diagonal().array() += lambda;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
            if (ldlt.info() != Eigen::Success)
                throw NumericalError("ridge normal equations failed to factorize");
            fit.slopes = ldlt.solve(Zs.transpose() * yc / n);
            break;
        }
        case RegressorFamily::Lasso: {
            Eigen::VectorXd b0 = warm ? *warm : Eigen::VectorXd::Zero(p);
            fit.slopes = lasso_cd(Zs, yc, lambda, b0, sweep_objectives);
            break;
        }
        case RegressorFamily::Precomputed:
            throw InputError("precomputed family has no linear fit");
    }
    return fit;
}

inline double sigmoid(double eta) { return 1.0 / (1.0 + std::exp(-clip(eta, -30.0, 30.0))); }

inline double logistic_nll(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
    const long n = eta.size();
    KahanSum s;
    for (long i = 0; i < n; ++i) {
        double e = clip(eta[i], -30.0, 30.0);
        // log(1+exp(e)) - y*e, stable form
        double l = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        s.add(l - y[i] * e);
    }
    return s.value() / static_cast<double>(n);
}

// Ridge-penalized logistic regression by Newton steps (intercept unpenalized).
inline CoreFit fit_logistic_l2_std(const Eigen::MatrixXd& Zs, const Eigen::VectorXd& y,
                                   double lambda, double grad_tol = 1e-8, int max_iter = 100) {
    const long n = Zs.rows(), p = Zs.cols();
    CoreFit fit;
    double b0 = 0.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    double obj_prev = std::numeric_limits<double>::infinity();
    double max_abs_eta = 0.0;
    bool converged = false;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, b0) + Zs * b;
        max_abs_eta = eta.lpNorm<Eigen::Infinity>();
        Eigen::VectorXd prob(n), w(n);
        for (long i = 0; i < n; ++i) {
            prob[i] = sigmoid(eta[i]);
            w[i] = std::max(prob[i] * (1.0 - prob[i]), 1e-10);
        }
        Eigen::VectorXd resid = y - prob;
        Eigen::VectorXd g(p + 1);
        g[0] = resid.mean();
        g.tail(p) = Zs.transpose() * resid / static_cast<double>(n) - lambda * b;
        if (g.lpNorm<Eigen::Infinity>() <= grad_tol) {
            converged = true;
            break;
        }
        Eigen::MatrixXd H(p + 1, p + 1);
        H(0, 0) = w.mean();
        Eigen::VectorXd wz = Zs.transpose() * w / static_cast<double>(n);
        H.block(0, 1, 1, p) = wz.transpose();
        H.block(1, 0, p, 1) = wz;
        H.block(1, 1, p, p) = Zs.transpose() * w.asDiagonal() * Zs / static_cast<double>(n);
        H.block(1, 1, p, p).diagonal().array() += lambda;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        Eigen::VectorXd step = ldlt.solve(g);
        // step-halving safeguard
        double obj0 = logistic_nll(eta, y) + 0.5 * lambda * b.squaredNorm();
        double scale = 1.0;
        for (int h = 0; h < 30; ++h) {
            double nb0 = b0 + scale * step[0];
            Eigen::VectorXd nb = b + scale * step.tail(p);
            Eigen::VectorXd neta = Eigen::VectorXd::Constant(n, nb0) + Zs * nb;
            double obj = logistic_nll(neta, y) + 0.5 * lambda * nb.squaredNorm();
            if (obj <= obj0 + 1e-14) {
                b0 = nb0;
                b = nb;
                obj_prev = obj;
                break;
            }
            scale *= 0.5;
            if (h == 29) {  // no descent direction left
                b0 += scale * step[0];
                b += scale * step.tail(p);
            }
        }
        (void)obj_prev;
    }
    if (lambda == 0.0 && !converged &&
        (b.lpNorm<Eigen::Infinity>() > 1e3 || max_abs_eta > 25.0))
        fit.warning = "possible separation (diverging coefficients); consider a positive penalty";
    fit.intercept = b0;
    fit.slopes = b;
    return fit;
}

// L1-penalized logistic regression, IRLS outer loop with coordinate-descent
// inner solver on the weighted quadratic approximation.
inline CoreFit fit_logistic_l1_std(const Eigen::MatrixXd& Zs, const Eigen::VectorXd& y,
                                   double lambda, const Eigen::VectorXd* warm = nullptr,
                                   int max_outer = 50) {
    const long n = Zs.rows(), p = Zs.cols();
    CoreFit fit;
    double b0 = 0.0;
    Eigen::VectorXd b = warm && warm->size() == p ? *warm : Eigen::VectorXd::Zero(p);
    for (int outer = 0; outer < max_outer; ++outer) {
        Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, b0) + Zs * b;
        Eigen::VectorXd w(n), z(n);
        for (long i = 0; i < n; ++i) {
            double pr = sigmoid(eta[i]);
            double wi = std::max(pr * (1.0 - pr), 1e-5);
            w[i] = wi;
            z[i] = eta[i] + (y[i] - pr) / wi;
        }
        Eigen::VectorXd nu(p);
        for (long j = 0; j < p; ++j)
            nu[j] = (Zs.col(j).array().square() * w.array()).sum() / static_cast<double>(n);
        Eigen::VectorXd r = z - Eigen::VectorXd::Constant(n, b0) - Zs * b;
        double max_outer_delta = 0.0;
        for (int sweep = 0; sweep < 100; ++sweep) {
            double max_delta = 0.0;
            double num = (w.array() * r.array()).sum();
            double den = w.sum();
            double nb0 = b0 + num / den;
            double d0 = nb0 - b0;
            if (d0 != 0.0) {
                r.array() -= d0;
                b0 = nb0;
                max_delta = std::max(max_delta, std::fabs(d0));
            }
            for (long j = 0; j < p; ++j) {
                if (nu[j] <= 0.0) continue;
                double rho = (w.array() * Zs.col(j).array() * r.array()).sum() / static_cast<double>(n) +
                             nu[j] * b[j];
                double bj = soft_threshold(rho, lambda) / nu[j];
                double delta = bj - b[j];
                if (delta != 0.0) {
                    r -= Zs.col(j) * delta;
                    b[j] = bj;
                    max_delta = std::max(max_delta, std::fabs(delta));
                }
            }
            max_outer_delta = std::max(max_outer_delta, max_delta);
            if (max_delta < 1e-9) break;
        }
        if (max_outer_delta < 1e-7) break;
    }
    fit.intercept = b0;
    fit.slopes = b;
    return fit;
}

// Order-invariant fold assignment: each row's fold is a content hash, so CV
// penalty selection does not depend on row order.
inline int content_fold(const Eigen::MatrixXd& X, long row, double target, uint64_t seed,
                        int folds) {
    uint64_t h = mix_u64(seed);
    for (long j = 0; j < X.cols(); ++j) {
        uint64_t bits;
        double v = X(row, j);
        std::memcpy(&bits, &v, sizeof(double));
        h = hash_combine(h, bits);
    }
    uint64_t tb;
    std::memcpy(&tb, &target, sizeof(double));
    h = hash_combine(h, tb);
    return static_cast<int>(h % static_cast<uint64_t>(folds));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// fit_linear_regressor
// ---------------------------------------------------------------------------

inline FittedModel fit_linear_regressor(const RegressorSpec& spec, const Eigen::MatrixXd& X,
                                        const Eigen::VectorXd& y) {
    spec.validate();
    if (spec.family == RegressorFamily::Precomputed) {
        FittedModel m;
        m.kind = FittedModel::Kind::Regressor;
        m.precomputed = spec.precomputed;
        return m;
    }
    if (X.rows() != y.size()) throw InputError("regressor: feature/target row mismatch");
    if (X.rows() < 2) throw InputError("regressor: need at least 2 rows");
    if (!X.allFinite() || !y.allFinite()) throw InputError("regressor: non-finite inputs");

    FittedModel m;
    m.kind = FittedModel::Kind::Regressor;
    m.map = PolynomialMap::make(static_cast<int>(X.cols()), spec.degree);

    const double ybar = y.mean();
    const double yvar = (y.array() - ybar).square().sum();
    if (yvar == 0.0) {  // constant outcome short-circuits to a constant model
        m.coef = Eigen::VectorXd::Zero(m.map.size());
        m.intercept = ybar;
        return m;
    }

    Eigen::MatrixXd Zexp = m.map.expand(X);
    Standardizer st = Standardizer::fit(Zexp);
    Eigen::MatrixXd Zs = st.apply(Zexp);
    Eigen::VectorXd yc = y.array() - ybar;

    double lambda = 0.0;
    if (spec.family != RegressorFamily::OlsPoly) {
        if (spec.penalty) {
            lambda = *spec.penalty;
        } else {
            // k-fold CV minimizing mean squared error; descending-lambda path
            // with warm starts for the lasso.
            std::vector<double> grid = spec.cv_grid;
            std::sort(grid.begin(), grid.end(), std::greater<double>());
            std::vector<int> fold(static_cast<std::size_t>(X.rows()));
            for (long i = 0; i < X.rows(); ++i)
                fold[static_cast<std::size_t>(i)] =
                    detail::content_fold(X, i, y[i], spec.cv_seed, spec.cv_folds);
            std::vector<double> cv_mse(grid.size(), 0.0);
            std::vector<long> cv_n(grid.size(), 0);
            for (int f = 0; f < spec.cv_folds; ++f) {
                std::vector<long> tr, te;
                for (long i = 0; i < X.rows(); ++i)
                    (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
                if (te.empty() || tr.size() < 2) continue;
                Eigen::MatrixXd Ztr(static_cast<long>(tr.size()), Zexp.cols());
                Eigen::VectorXd ytr(static_cast<long>(tr.size()));
                for (std::size_t i = 0; i < tr.size(); ++i) {
                    Ztr.row(static_cast<long>(i)) = Zexp.row(tr[i]);
                    ytr[static_cast<long>(i)] = y[tr[i]];
                }
                Standardizer stf = Standardizer::fit(Ztr);
                Eigen::MatrixXd Ztrs = stf.apply(Ztr);
                double ybf = ytr.mean();
                Eigen::VectorXd ycf = ytr.array() - ybf;
                Eigen::VectorXd warm = Eigen::VectorXd::Zero(Zexp.cols());
                for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                    detail::CoreFit cf =
                        detail::fit_linear_std(spec.family, grid[gi], Ztrs, ycf, &warm);
                    warm = cf.slopes;
                    for (long i : te) {
                        Eigen::VectorXd zs =
                            (Zexp.row(i).transpose() - stf.mean).array() / stf.scale.array();
                        double pred = ybf + zs.dot(cf.slopes);
                        double err = y[i] - pred;
                        cv_mse[gi] += err * err;
                        ++cv_n[gi];
                    }
                }
            }
            std::size_t best = 0;
            double best_loss = std::numeric_limits<double>::infinity();
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                if (cv_n[gi] == 0) continue;
                double loss = cv_mse[gi] / static_cast<double>(cv_n[gi]);
                if (loss < best_loss - 1e-12) {  // ties keep the larger penalty
                    best_loss = loss;
                    best = gi;
                }
            }
            lambda = grid[best];
            m.cv_seed = spec.cv_seed;
        }
    }

    detail::CoreFit cf = detail::fit_linear_std(spec.family, lambda, Zs, yc);
    m.penalty_used = lambda;
    m.warning = cf.warning;
    m.coef = cf.slopes.array() / st.scale.array();
    m.intercept = ybar - m.coef.dot(st.mean);
    return m;
}

// ---------------------------------------------------------------------------
// fit_logistic_classifier
// ---------------------------------------------------------------------------

inline FittedModel fit_logistic_classifier(const ClassifierSpec& spec, const Eigen::MatrixXd& X,
                                           const std::vector<int>& labels) {
    spec.validate();
    if (spec.family == ClassifierFamily::Precomputed) {
        FittedModel m;
        m.kind = FittedModel::Kind::Classifier;
        m.precomputed = spec.precomputed;
        return m;
    }
    if (X.rows() != static_cast<long>(labels.size()))
        throw InputError("classifier: feature/label row mismatch");
    if (!X.allFinite()) throw InputError("classifier: non-finite inputs");
    long pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw InputError("classifier labels must be 0/1");
        pos += l;
    }
    if (pos == 0 || pos == static_cast<long>(labels.size()))
        throw InputError("classifier needs both classes present");

    FittedModel m;
    m.kind = FittedModel::Kind::Classifier;
    m.map = PolynomialMap::make(static_cast<int>(X.cols()), spec.degree);
    Eigen::MatrixXd Zexp = m.map.expand(X);
    Standardizer st = Standardizer::fit(Zexp);
    Eigen::MatrixXd Zs = st.apply(Zexp);
    Eigen::VectorXd yv(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) yv[static_cast<long>(i)] = labels[i];

    auto fit_at = [&](double lambda, const Eigen::MatrixXd& Z, const Eigen::VectorXd& yy,
                      const Eigen::VectorXd* warm) {
        return spec.family == ClassifierFamily::LogisticL2
                   ? detail::fit_logistic_l2_std(Z, yy, lambda)
                   : detail::fit_logistic_l1_std(Z, yy, lambda, warm);
    };

    double lambda = 0.0;
    if (spec.penalty) {
        lambda = *spec.penalty;
    } else {
        std::vector<double> grid = spec.cv_grid;
        std::sort(grid.begin(), grid.end(), std::greater<double>());
        std::vector<int> fold(static_cast<std::size_t>(X.rows()));
        for (long i = 0; i < X.rows(); ++i)
            fold[static_cast<std::size_t>(i)] = detail::content_fold(
                X, i, static_cast<double>(labels[static_cast<std::size_t>(i)]), spec.cv_seed,
                spec.cv_folds);
        std::vector<double> cv_nll(grid.size(), 0.0);
        std::vector<long> cv_n(grid.size(), 0);
        for (int f = 0; f < spec.cv_folds; ++f) {
            std::vector<long> tr, te;
            for (long i = 0; i < X.rows(); ++i)
                (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
            if (te.empty() || tr.size() < 2) continue;
            long trpos = 0;
            for (long i : tr) trpos += labels[static_cast<std::size_t>(i)];
            if (trpos == 0 || trpos == static_cast<long>(tr.size())) continue;
            Eigen::MatrixXd Ztr(static_cast<long>(tr.size()), Zexp.cols());
            Eigen::VectorXd ytr(static_cast<long>(tr.size()));
            for (std::size_t i = 0; i < tr.size(); ++i) {
                Ztr.row(static_cast<long>(i)) = Zexp.row(tr[i]);
                ytr[static_cast<long>(i)] = yv[tr[i]];
            }
            Standardizer stf = Standardizer::fit(Ztr);
            Eigen::MatrixXd Ztrs = stf.apply(Ztr);
            Eigen::VectorXd warm = Eigen::VectorXd::Zero(Zexp.cols());
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                detail::CoreFit cf = fit_at(grid[gi], Ztrs, ytr, &warm);
                warm = cf.slopes;
                for (long i : te) {
                    Eigen::VectorXd zs =
                        (Zexp.row(i).transpose() - stf.mean).array() / stf.scale.array();
                    double eta = clip(cf.intercept + zs.dot(cf.slopes), -30.0, 30.0);
                    double l = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
                    cv_nll[gi] += l - yv[i] * eta;
                    ++cv_n[gi];
                }
            }
        }
        std::size_t best = 0;
        double best_loss = std::numeric_limits<double>::infinity();
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            if (cv_n[gi] == 0) continue;
            double loss = cv_nll[gi] / static_cast<double>(cv_n[gi]);
            if (loss < best_loss - 1e-12) {
                best_loss = loss;
                best = gi;
            }
        }
        lambda = grid[best];
        m.cv_seed = spec.cv_seed;
    }

    detail::CoreFit cf = fit_at(lambda, Zs, yv, nullptr);
    m.penalty_used = lambda;
    m.warning = cf.warning;
    m.coef = cf.slopes.array() / st.scale.array();
    m.intercept = cf.intercept - m.coef.dot(st.mean);
    return m;
}

// ---------------------------------------------------------------------------
// calibrate_probabilities
// ---------------------------------------------------------------------------

namespace detail {

inline MonotoneMap fit_isotonic(std::vector<double> scores, std::vector<double> targets,
                                double clip_eps) {
    // Weighted pool-adjacent-violators on unique sorted scores (ties are
    // aggregated first so their within-group order cannot matter).
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    struct Block {
        double xmin, xmax, sum, weight;
        double mean() const { return sum / weight; }
    };
    std::vector<Block> points;
    for (std::size_t idx : order) {
        if (!points.empty() && points.back().xmax == scores[idx]) {
            points.back().sum += targets[idx];
            points.back().weight += 1.0;
        } else {
            points.push_back({scores[idx], scores[idx], targets[idx], 1.0});
        }
    }
    std::vector<Block> blocks;
    for (const Block& nb : points) {
        blocks.push_back(nb);
        while (blocks.size() > 1 &&
               blocks[blocks.size() - 2].mean() >= blocks.back().mean()) {
            Block b = blocks.back();
            blocks.pop_back();
            blocks.back().xmax = b.xmax;
            blocks.back().sum += b.sum;
            blocks.back().weight += b.weight;
        }
    }
    MonotoneMap map;
    map.type = MonotoneMap::Type::Isotonic;
    map.clip_eps = clip_eps;
    for (const Block& b : blocks) {
        if (map.xs.empty() || b.xmin > map.xs.back()) {
            map.xs.push_back(b.xmin);
            map.ys.push_back(b.mean());
        }
        if (b.xmax > map.xs.back()) {
            map.xs.push_back(b.xmax);
            map.ys.push_back(b.mean());
        }
    }
    return map;
}

inline MonotoneMap fit_sigmoid(const std::vector<double>& scores, const std::vector<double>& targets,
                               double clip_eps) {
    // Two-parameter logistic recalibration p = sigma(a*s + b), Newton steps.
    double a = 1.0, b = 0.0;
    const std::size_t n = scores.size();
    for (int it = 0; it < 100; ++it) {
        double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double p = sigmoid(a * scores[i] + b);
            double d = p - targets[i];
            double w = std::max(p * (1.0 - p), 1e-10);
            g0 += d * scores[i];
            g1 += d;
            h00 += w * scores[i] * scores[i];
            h01 += w * scores[i];
            h11 += w;
        }
        double det = h00 * h11 - h01 * h01;
        if (std::fabs(det) < 1e-14) break;
        double da = (h11 * g0 - h01 * g1) / det;
        double db = (h00 * g1 - h01 * g0) / det;
        a -= da;
        b -= db;
        if (std::fabs(da) + std::fabs(db) < 1e-10) break;
    }
    MonotoneMap map;
    map.type = MonotoneMap::Type::Sigmoid;
    map.a = a;
    map.b = b;
    map.clip_eps = clip_eps;
    return map;
}

}  // namespace detail

inline FittedModel calibrate_probabilities(const FittedModel& model, const Eigen::MatrixXd& X,
                                           const std::vector<int>& labels, Calibration method,
                                           double clip_eps = 1e-3,
                                           const std::vector<int>* row_ids = nullptr) {
    if (model.kind != FittedModel::Kind::Classifier)
        throw InputError("calibration requires a classifier");
    if (method == Calibration::None) return model;
    if (X.rows() != static_cast<long>(labels.size()) || labels.empty())
        throw InputError("calibration: empty or misaligned holdout");
    long pos = 0;
    for (int l : labels) pos += l;
    if (pos == 0 || pos == static_cast<long>(labels.size()))
        throw InputError("calibration holdout needs both classes present");

    std::vector<double> scores(labels.size()), targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int rid = row_ids ? (*row_ids)[i] : -1;
        scores[i] = model.raw_probability(X.row(static_cast<long>(i)).transpose(), rid);
        targets[i] = labels[i];
    }
    FittedModel out = model;
    out.calibrator = method == Calibration::Isotonic
                         ? detail::fit_isotonic(std::move(scores), std::move(targets), clip_eps)
                         : detail::fit_sigmoid(scores, targets, clip_eps);
    return out;
}

}  // namespace mrattrib
