#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mrattrib/core.hpp"
#include "mrattrib/learners.hpp"
#include "mrattrib/plan.hpp"
#include "mrattrib/rng.hpp"
#include "mrattrib/weights.hpp"

namespace mrattrib {

enum class Method { MultiplyRobust, RegressionOnly, ReweightingOnly };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::MultiplyRobust: return "MR";
        case Method::RegressionOnly: return "regression";
        case Method::ReweightingOnly: return "reweighting";
    }
    return "?";
}

enum class WeightRoute { Classification, Automatic };

struct StageSummary {
    int prefix = 0;
    int sample = 0;
    std::string role;  // "regression" or "weight"
    double penalty = 0.0;
    std::string warning;
};

struct EstimateDiagnostics {
    long weight_evaluations = 0;
    long clipped_evaluations = 0;
    std::vector<StageSummary> learners;

    double clipped_fraction() const {
        return weight_evaluations > 0
                   ? static_cast<double>(clipped_evaluations) / static_cast<double>(weight_evaluations)
                   : 0.0;
    }
    void merge(const EstimateDiagnostics& o) {
        weight_evaluations += o.weight_evaluations;
        clipped_evaluations += o.clipped_evaluations;
        learners.insert(learners.end(), o.learners.begin(), o.learners.end());
    }
};

// Point estimate with its per-observation contributions, split by sample.
// theta is mean(psi0) + mean(psi1) by construction.
struct ThetaEstimate {
    ChangeVector c;
    Method method = Method::MultiplyRobust;
    double theta = 0.0;
    std::vector<double> psi0, psi1;    // aligned with rows0/rows1
    std::vector<int> rows0, rows1;     // original row ids of the evaluation rows
    double v_hat = 0.0;
    long n0 = 0, n1 = 0;
    EstimateDiagnostics diagnostics;

    void finalize() {
        n0 = static_cast<long>(psi0.size());
        n1 = static_cast<long>(psi1.size());
        if (n0 < 1 || n1 < 1) throw InputError("evaluation sample empty on a required side");
        theta = mean_of(psi0) + mean_of(psi1);
        const double n = static_cast<double>(n0 + n1);
        v_hat = (n / static_cast<double>(n0)) * sample_variance(psi0) +
                (n / static_cast<double>(n1)) * sample_variance(psi1);
    }
};

// Nuisance functions consumed by the sample-analog evaluation. Production
// code fits them from the learner modules; tests may inject exact or
// deliberately corrupted versions.
using GammaFn = std::function<double(const Eigen::VectorXd& xplan, int row_id)>;
using AlphaFn = std::function<double(const Eigen::VectorXd& xplan, int row_id, bool* clipped)>;

struct PlanNuisances {
    std::vector<GammaFn> gamma;  // one per plan stage, ascending prefix
    std::vector<AlphaFn> alpha;  // one per plan stage
    AlphaFn full_weight;         // product weight for the re-weighting baseline
    EstimateDiagnostics diagnostics;
};

namespace detail {

inline Eigen::VectorXd plan_row(const EstimationPlan& plan, const ValidatedModel& m, int row) {
    Eigen::VectorXd x(plan.K());
    for (int i = 0; i < plan.K(); ++i) x[i] = m.data.x(row, plan.order[static_cast<std::size_t>(i)]);
    return x;
}

}  // namespace detail

// Evaluate the estimating equation on the evaluation split given fitted (or
// injected) nuisances.
inline ThetaEstimate execute_plan(const EstimationPlan& plan, const Functional& h,
                                  const ValidatedModel& eval, const PlanNuisances& nu,
                                  Method method) {
    const std::size_t m = plan.stages.size();
    if (method == Method::MultiplyRobust && (nu.gamma.size() != m || nu.alpha.size() != m))
        throw InputError("nuisance count does not match plan stages");
    if (method == Method::RegressionOnly && nu.gamma.size() != m)
        throw InputError("nuisance count does not match plan stages");

    ThetaEstimate est;
    est.c = plan.c;
    est.method = method;
    est.diagnostics = nu.diagnostics;
    est.psi0.assign(eval.rows0.size(), 0.0);
    est.psi1.assign(eval.rows1.size(), 0.0);
    est.rows0.reserve(eval.rows0.size());
    est.rows1.reserve(eval.rows1.size());
    for (int r : eval.rows0) est.rows0.push_back(eval.row_ids[static_cast<std::size_t>(r)]);
    for (int r : eval.rows1) est.rows1.push_back(eval.row_ids[static_cast<std::size_t>(r)]);

    auto psi_at = [&](int t, std::size_t idx) -> double& {
        return t == 0 ? est.psi0[idx] : est.psi1[idx];
    };

    long weight_evals = 0, clipped = 0;
    for (int t = 0; t <= 1; ++t) {
        const std::vector<int>& rows = t == 0 ? eval.rows0 : eval.rows1;
        for (std::size_t idx = 0; idx < rows.size(); ++idx) {
            const int row = rows[idx];
            const int rid = eval.row_ids[static_cast<std::size_t>(row)];
            const Eigen::VectorXd x = detail::plan_row(plan, eval, row);
            const double hy = functional_eval(h, eval.data.y[row]);
            double psi = 0.0;

            if (method == Method::ReweightingOnly) {
                if (t == plan.outcome_sample) {
                    bool clip_flag = false;
                    double w = nu.full_weight ? nu.full_weight(x, rid, &clip_flag) : 1.0;
                    ++weight_evals;
                    if (clip_flag) ++clipped;
                    psi = w * hy;
                }
                psi_at(t, idx) = psi;
                continue;
            }

            // leading term
            if (t == plan.lead_sample)
                psi += plan.collapsed ? hy : nu.gamma[0](x, rid);

            if (method == Method::MultiplyRobust) {
                for (std::size_t i = 0; i < m; ++i) {
                    const PlanStage& st = plan.stages[i];
                    if (t != st.regression_sample) continue;
                    double g_next = (i + 1 < m) ? nu.gamma[i + 1](x, rid) : hy;
                    double g_here = nu.gamma[i](x, rid);
                    bool clip_flag = false;
                    double w = nu.alpha[i](x, rid, &clip_flag);
                    ++weight_evals;
                    if (clip_flag) ++clipped;
                    psi += w * (g_next - g_here);
                }
            }
            psi_at(t, idx) = psi;
        }
    }
    est.diagnostics.weight_evaluations += weight_evals;
    est.diagnostics.clipped_evaluations += clipped;
    est.finalize();
    return est;
}

// ---------------------------------------------------------------------------
// Fitting the nuisances from training data.
// ---------------------------------------------------------------------------

// Caches shared across change vectors estimated on the same training split.
struct NuisanceCache {
    std::map<std::vector<int>, std::shared_ptr<const WeightModel>> classification;  // by prefix cols
    std::map<std::pair<std::vector<int>, int>, std::shared_ptr<const WeightModel>> automatic;
    std::map<std::string, std::shared_ptr<const FittedModel>> regressions;  // by chain key
};

struct EstimatorSettings {
    RegressorSpec regression;
    ClassifierSpec classifier;
    WeightConfig weights;
    WeightRoute route = WeightRoute::Classification;
};

namespace detail {

inline std::vector<int> prefix_columns(const EstimationPlan& plan, int j) {
    return {plan.order.begin(), plan.order.begin() + j};
}

inline std::shared_ptr<const WeightModel> prefix_weight_model(
    const EstimationPlan& plan, const ValidatedModel& train, int j, int numerator,
    const EstimatorSettings& cfg, NuisanceCache* cache, const std::vector<int>* calibration_rows,
    EstimateDiagnostics* diag) {
    const std::vector<int> cols = prefix_columns(plan, j);
    if (cfg.route == WeightRoute::Classification) {
        // the classifier is orientation-free; cache it once per prefix
        if (cache) {
            auto it = cache->classification.find(cols);
            if (it != cache->classification.end()) {
                if (it->second->numerator_sample == numerator) return it->second;
                auto flipped = std::make_shared<WeightModel>(*it->second);
                flipped->numerator_sample = numerator;
                flipped->denominator_sample = 1 - numerator;
                return flipped;
            }
        }
        auto model = std::make_shared<WeightModel>(fit_rn_classification(
            train, cols, numerator, cfg.classifier, cfg.weights, calibration_rows));
        if (diag && j > 0)
            diag->learners.push_back({j, -1, "weight", model->classifier.penalty_used,
                                      model->classifier.warning});
        if (cache) {
            auto canonical = model;
            if (numerator != 1) {
                canonical = std::make_shared<WeightModel>(*model);
                canonical->numerator_sample = 1;
                canonical->denominator_sample = 0;
            }
            cache->classification.emplace(cols, canonical);
        }
        return model;
    }
    const auto key = std::make_pair(cols, numerator);
    if (cache) {
        auto it = cache->automatic.find(key);
        if (it != cache->automatic.end()) return it->second;
    }
    auto model = std::make_shared<WeightModel>(
        fit_rn_automatic_raw(train, cols, numerator, cfg.weights));
    if (diag && j > 0)
        diag->learners.push_back({j, numerator, "weight", cfg.weights.automatic_penalty, ""});
    if (cache) cache->automatic.emplace(key, model);
    return model;
}

inline AlphaFn make_stage_weight(const EstimationPlan& plan, const ValidatedModel& train,
                                 const std::vector<WeightFactorSpec>& factors,
                                 const EstimatorSettings& cfg, NuisanceCache* cache,
                                 const std::vector<int>* calibration_rows,
                                 EstimateDiagnostics* diag) {
    auto sw = std::make_shared<StageWeight>();
    sw->cfg = cfg.weights;
    for (const WeightFactorSpec& f : factors) {
        ConditionalWeight cw;
        cw.joint = prefix_weight_model(plan, train, f.prefix, f.numerator_sample, cfg, cache,
                                       calibration_rows, diag);
        if (f.prefix > 1)
            cw.preceding = prefix_weight_model(plan, train, f.prefix - 1, f.numerator_sample, cfg,
                                               cache, calibration_rows, diag);
        sw->factors.push_back(std::move(cw));
    }
    return [sw](const Eigen::VectorXd& x, int rid, bool* clipped) {
        return sw->eval(x, rid, clipped);
    };
}

// Chain key identifying a nested regression (sample, prefix columns, and the
// identity of its regressand) for memoization.
inline std::string regression_key(const EstimationPlan& plan, const Functional& h,
                                  std::size_t stage_index) {
    std::string key = "h:" + h.name();
    if (h.kind == FunctionalKind::CdfAt) key += "@" + std::to_string(h.u);
    for (std::size_t i = plan.stages.size(); i-- > stage_index;) {
        const PlanStage& st = plan.stages[i];
        key += "|g:s" + std::to_string(st.regression_sample) + ":";
        for (int j = 0; j < st.prefix; ++j)
            key += std::to_string(plan.order[static_cast<std::size_t>(j)]) + ",";
    }
    return key;
}

}  // namespace detail

// Recursive nested regressions for the surviving plan stages, outermost first.
// Each stage regresses the next stage's fitted values (outcome functional for
// the innermost) on its variable prefix, over the sample the plan assigns.
inline std::vector<FittedModel> fit_nested_regressions(const EstimationPlan& plan,
                                                       const Functional& h,
                                                       const ValidatedModel& train,
                                                       const RegressorSpec& spec,
                                                       NuisanceCache* cache = nullptr,
                                                       EstimateDiagnostics* diag = nullptr) {
    const std::size_t m = plan.stages.size();
    std::vector<std::shared_ptr<const FittedModel>> fitted(m);
    for (std::size_t i = m; i-- > 0;) {
        const PlanStage& st = plan.stages[i];
        const std::string key = detail::regression_key(plan, h, i);
        if (cache) {
            auto it = cache->regressions.find(key);
            if (it != cache->regressions.end()) {
                fitted[i] = it->second;
                continue;
            }
        }
        const std::vector<int>& rows = st.regression_sample == 0 ? train.rows0 : train.rows1;
        if (rows.empty())
            throw InputError("training sample " + std::to_string(st.regression_sample) +
                             " empty at stage " + std::to_string(st.prefix));
        Eigen::MatrixXd X(static_cast<long>(rows.size()), st.prefix);
        Eigen::VectorXd target(static_cast<long>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const int row = rows[r];
            const Eigen::VectorXd x = detail::plan_row(plan, train, row);
            X.row(static_cast<long>(r)) = x.head(st.prefix).transpose();
            if (i + 1 < m) {
                const PlanStage& nx = plan.stages[i + 1];
                target[static_cast<long>(r)] = fitted[i + 1]->predict(
                    x.head(nx.prefix), train.row_ids[static_cast<std::size_t>(row)]);
            } else {
                target[static_cast<long>(r)] = functional_eval(h, train.data.y[row]);
            }
        }
        FittedModel model;
        try {
            model = fit_linear_regressor(spec, X, target);
        } catch (const std::exception& e) {
            throw NumericalError("stage " + std::to_string(st.prefix) +
                                 " regression failed: " + e.what());
        }
        if (diag)
            diag->learners.push_back(
                {st.prefix, st.regression_sample, "regression", model.penalty_used, model.warning});
        fitted[i] = std::make_shared<const FittedModel>(std::move(model));
        if (cache) cache->regressions.emplace(key, fitted[i]);
    }
    std::vector<FittedModel> out;
    out.reserve(m);
    for (auto& f : fitted) out.push_back(*f);
    return out;
}

inline PlanNuisances fit_plan_nuisances(const EstimationPlan& plan, const Functional& h,
                                        const ValidatedModel& train, const EstimatorSettings& cfg,
                                        NuisanceCache* cache = nullptr,
                                        const std::vector<int>* calibration_rows = nullptr,
                                        bool need_full_weight = false) {
    PlanNuisances nu;
    std::vector<FittedModel> regs =
        fit_nested_regressions(plan, h, train, cfg.regression, cache, &nu.diagnostics);
    for (std::size_t i = 0; i < regs.size(); ++i) {
        auto model = std::make_shared<const FittedModel>(std::move(regs[i]));
        const int prefix = plan.stages[i].prefix;
        nu.gamma.push_back([model, prefix](const Eigen::VectorXd& x, int rid) {
            return model->predict(x.head(prefix), rid);
        });
    }
    for (const PlanStage& st : plan.stages)
        nu.alpha.push_back(detail::make_stage_weight(plan, train, st.weight_factors, cfg, cache,
                                                     calibration_rows, &nu.diagnostics));
    if (need_full_weight)
        nu.full_weight = detail::make_stage_weight(plan, train, plan.full_weight_factors, cfg,
                                                   cache, calibration_rows, &nu.diagnostics);
    return nu;
}

// Single-split estimation: nuisances from the training split, sample analog on
// the evaluation split.
inline ThetaEstimate estimate_theta(const EstimationPlan& plan, const Functional& h,
                                    const ValidatedModel& train, const ValidatedModel& eval,
                                    const EstimatorSettings& cfg, Method method,
                                    NuisanceCache* cache = nullptr,
                                    const std::vector<int>* calibration_rows = nullptr) {
    PlanNuisances nu = fit_plan_nuisances(plan, h, train, cfg, cache, calibration_rows,
                                          method == Method::ReweightingOnly);
    return execute_plan(plan, h, eval, nu, method);
}

// ---------------------------------------------------------------------------
// Split orchestration: cross-fitting (default) or a single train/calibrate/
// evaluate partition.
// ---------------------------------------------------------------------------

struct SplitSpec {
    enum class Mode { CrossFit, SingleSplit, InSample } mode = Mode::CrossFit;
    int folds = 2;
    double train_fraction = 0.4;        // single-split mode
    double calibration_fraction = 0.1;  // single-split mode, carved between train and eval
    uint64_t seed = 1;

    void validate() const {
        if (mode == Mode::CrossFit && folds < 2) throw ConfigError("cross-fitting needs >= 2 folds");
        if (mode == Mode::SingleSplit) {
            if (train_fraction <= 0.0 || calibration_fraction < 0.0 ||
                train_fraction + calibration_fraction >= 1.0)
                throw ConfigError("single-split fractions must leave a nonempty evaluation set");
        }
    }
};

// Shared-fold estimator for a family of change vectors on one dataset. All
// estimates share fold assignments and per-fold nuisance caches, so their psi
// vectors stay row-aligned for joint bootstrap draws.
class ThetaEngine {
public:
    ThetaEngine(const ValidatedModel& model, EstimatorSettings settings, SplitSpec split)
        : model_(model), settings_(std::move(settings)), split_(split) {
        split_.validate();
        settings_.regression.validate();
        settings_.classifier.validate();
        settings_.weights.validate();
        build_folds();
    }

    const ValidatedModel& model() const { return model_; }
    const EstimatorSettings& settings() const { return settings_; }

    ThetaEstimate estimate(const ChangeVector& c, Method method) {
        EstimationPlan plan = plan_estimation(c, model_.structure);
        std::vector<ThetaEstimate> parts;
        parts.reserve(folds_.size());
        for (Fold& f : folds_)
            parts.push_back(estimate_theta(plan, h_, f.train, f.eval, settings_, method, &f.cache,
                                           f.calibration_rows.empty() ? nullptr
                                                                      : &f.calibration_rows));
        return merge_parts(parts, c, method);
    }

    void set_functional(const Functional& h) { h_ = h; }
    const Functional& functional() const { return h_; }

    std::vector<std::pair<long, long>> fold_sizes() const {
        std::vector<std::pair<long, long>> out;
        for (const Fold& f : folds_) out.emplace_back(f.train.n(), f.eval.n());
        return out;
    }

private:
    struct Fold {
        ValidatedModel train;
        ValidatedModel eval;
        std::vector<int> calibration_rows;  // indices into train
        NuisanceCache cache;
    };

    static std::vector<int> shuffled(const std::vector<int>& rows, Rng& rng) {
        std::vector<int> out = rows;
        for (std::size_t i = out.size(); i > 1; --i)
            std::swap(out[i - 1], out[static_cast<std::size_t>(rng.uniform_int(i))]);
        return out;
    }

    void build_folds() {
        Rng rng(split_.seed, Rng::substream(split_.seed, /*tag=*/0x5f01dULL));
        std::vector<int> r0 = shuffled(model_.rows0, rng);
        std::vector<int> r1 = shuffled(model_.rows1, rng);
        const bool want_cal = settings_.classifier.calibration != Calibration::None;

        if (split_.mode == SplitSpec::Mode::InSample) {
            Fold f;
            f.train = model_;
            f.eval = model_;
            folds_.push_back(std::move(f));
            return;
        }
        if (split_.mode == SplitSpec::Mode::SingleSplit) {
            auto take = [](const std::vector<int>& v, double lo, double hi) {
                std::size_t a = static_cast<std::size_t>(lo * static_cast<double>(v.size()));
                std::size_t b = static_cast<std::size_t>(hi * static_cast<double>(v.size()));
                return std::vector<int>(v.begin() + static_cast<long>(a),
                                        v.begin() + static_cast<long>(b));
            };
            const double tf = split_.train_fraction, cf = split_.calibration_fraction;
            std::vector<int> train_rows, cal_rows, eval_rows;
            for (const auto* rs : {&r0, &r1}) {
                auto tr = take(*rs, 0.0, tf);
                auto ca = take(*rs, tf, tf + cf);
                auto ev = take(*rs, tf + cf, 1.0);
                train_rows.insert(train_rows.end(), tr.begin(), tr.end());
                cal_rows.insert(cal_rows.end(), ca.begin(), ca.end());
                eval_rows.insert(eval_rows.end(), ev.begin(), ev.end());
            }
            Fold f;
            std::vector<int> train_all = train_rows;
            train_all.insert(train_all.end(), cal_rows.begin(), cal_rows.end());
            f.train = subset_model(model_, train_all);
            for (std::size_t i = train_rows.size(); i < train_all.size(); ++i)
                f.calibration_rows.push_back(static_cast<int>(i));
            f.eval = subset_model(model_, eval_rows);
            folds_.push_back(std::move(f));
            return;
        }

        // Cross-fitting: stratified fold assignment, evaluate each fold with
        // nuisances trained on its complement; calibration rows (when needed)
        // carved from the training side.
        const int F = split_.folds;
        std::vector<std::vector<int>> fold_rows(static_cast<std::size_t>(F));
        for (std::size_t i = 0; i < r0.size(); ++i)
            fold_rows[i % static_cast<std::size_t>(F)].push_back(r0[i]);
        for (std::size_t i = 0; i < r1.size(); ++i)
            fold_rows[i % static_cast<std::size_t>(F)].push_back(r1[i]);
        for (int f = 0; f < F; ++f) {
            std::vector<int> train_rows;
            for (int g = 0; g < F; ++g)
                if (g != f)
                    train_rows.insert(train_rows.end(), fold_rows[static_cast<std::size_t>(g)].begin(),
                                      fold_rows[static_cast<std::size_t>(g)].end());
            Fold fold;
            fold.train = subset_model(model_, train_rows);
            fold.eval = subset_model(model_, fold_rows[static_cast<std::size_t>(f)]);
            if (want_cal) {
                // stratified carve of the configured fraction, deterministic in
                // the (already shuffled) train order
                const double frac = settings_.classifier.calibration_fraction;
                std::vector<int> cal;
                for (int t = 0; t <= 1; ++t) {
                    const auto& rows = t == 0 ? fold.train.rows0 : fold.train.rows1;
                    std::size_t ncal = static_cast<std::size_t>(frac * static_cast<double>(rows.size()));
                    for (std::size_t i = 0; i < ncal; ++i) cal.push_back(rows[i]);
                }
                fold.calibration_rows = std::move(cal);
            }
            folds_.push_back(std::move(fold));
        }
    }

    ThetaEstimate merge_parts(const std::vector<ThetaEstimate>& parts, const ChangeVector& c,
                              Method method) const {
        if (parts.size() == 1) return parts.front();
        std::vector<std::pair<int, double>> all0, all1;
        ThetaEstimate out;
        out.c = c;
        out.method = method;
        for (const ThetaEstimate& p : parts) {
            for (std::size_t i = 0; i < p.psi0.size(); ++i) all0.emplace_back(p.rows0[i], p.psi0[i]);
            for (std::size_t i = 0; i < p.psi1.size(); ++i) all1.emplace_back(p.rows1[i], p.psi1[i]);
            out.diagnostics.merge(p.diagnostics);
        }
        std::sort(all0.begin(), all0.end());
        std::sort(all1.begin(), all1.end());
        for (auto& [rid, v] : all0) {
            out.rows0.push_back(rid);
            out.psi0.push_back(v);
        }
        for (auto& [rid, v] : all1) {
            out.rows1.push_back(rid);
            out.psi1.push_back(v);
        }
        out.finalize();
        return out;
    }

    ValidatedModel model_;
    EstimatorSettings settings_;
    SplitSpec split_;
    Functional h_ = Functional::mean();
    std::vector<Fold> folds_;
};

}  // namespace mrattrib
