#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mrattrib/common.hpp"
#include "mrattrib/estimator.hpp"
#include "mrattrib/rng.hpp"

namespace mrattrib {

struct ConfidenceInterval {
    double level = 0.95;
    double lo = 0.0, hi = 0.0;
    double se = 0.0;
};

// Asymptotic variance and normal confidence interval from the per-observation
// contributions: V = (n/n0) var(psi0) + (n/n1) var(psi1), se = sqrt(V/n).
inline ConfidenceInterval estimate_variance_ci(const ThetaEstimate& est, double level = 0.95) {
    if (est.psi0.empty() || est.psi1.empty())
        throw InputError("variance needs nonempty contribution vectors for both samples");
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must be in (0,1)");
    const double n = static_cast<double>(est.n0 + est.n1);
    const double v = (n / static_cast<double>(est.n0)) * sample_variance(est.psi0) +
                     (n / static_cast<double>(est.n1)) * sample_variance(est.psi1);
    ConfidenceInterval ci;
    ci.level = level;
    ci.se = std::sqrt(v / n);
    const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    ci.lo = est.theta - z * ci.se;
    ci.hi = est.theta + z * ci.se;
    return ci;
}

enum class Multiplier { BayesianExponential, Gaussian };

struct BootstrapDraws {
    Eigen::MatrixXd draws;  // B x (number of theta targets)
    Multiplier multiplier = Multiplier::BayesianExponential;
    uint64_t seed = 0;

    int B() const { return static_cast<int>(draws.rows()); }
    int targets() const { return static_cast<int>(draws.cols()); }

    double se(int target) const {
        Eigen::VectorXd col = draws.col(target);
        std::vector<double> v(col.data(), col.data() + col.size());
        return std::sqrt(sample_variance(v));
    }
};

// Multiplier bootstrap: per draw, one mean-zero unit-variance multiplier
// vector per sample is applied jointly across all targets on the recentered
// contributions. No nuisance refitting. Draw b uses substream (seed, b), so
// results do not depend on evaluation order.
inline BootstrapDraws multiplier_bootstrap(const std::vector<ThetaEstimate>& estimates, int B,
                                           Multiplier multiplier, uint64_t seed) {
    if (B < 1) throw InputError("bootstrap needs B >= 1");
    if (estimates.empty()) throw InputError("bootstrap needs at least one estimate");
    const long n0 = estimates.front().n0;
    const long n1 = estimates.front().n1;
    const std::size_t J = estimates.size();
    for (const ThetaEstimate& e : estimates) {
        if (e.n0 != n0 || e.n1 != n1 || e.rows0 != estimates.front().rows0 ||
            e.rows1 != estimates.front().rows1)
            throw InputError("bootstrap estimates must share evaluation row alignment");
    }

    // Recentered contributions, one column per target.
    Eigen::MatrixXd psi0(n0, J), psi1(n1, J);
    Eigen::VectorXd base(J);
    for (std::size_t j = 0; j < J; ++j) {
        const ThetaEstimate& e = estimates[j];
        const double m0 = mean_of(e.psi0), m1 = mean_of(e.psi1);
        for (long i = 0; i < n0; ++i) psi0(i, static_cast<long>(j)) = e.psi0[static_cast<std::size_t>(i)] - m0;
        for (long i = 0; i < n1; ++i) psi1(i, static_cast<long>(j)) = e.psi1[static_cast<std::size_t>(i)] - m1;
        base[static_cast<long>(j)] = e.theta;
    }

    BootstrapDraws out;
    out.multiplier = multiplier;
    out.seed = seed;
    out.draws.resize(B, static_cast<long>(J));
    Eigen::VectorXd xi0(n0), xi1(n1);
    for (int b = 0; b < B; ++b) {
        Rng rng(seed, Rng::substream(seed, /*tag=*/0xb007ULL, static_cast<uint64_t>(b)));
        auto draw = [&](Eigen::VectorXd& xi) {
            for (long i = 0; i < xi.size(); ++i)
                xi[i] = multiplier == Multiplier::Gaussian ? rng.normal()
                                                           : rng.exponential() - 1.0;
        };
        draw(xi0);
        draw(xi1);
        Eigen::VectorXd bump = (xi0.transpose() * psi0).transpose() / static_cast<double>(n0) +
                               (xi1.transpose() * psi1).transpose() / static_cast<double>(n1);
        out.draws.row(b) = (base + bump).transpose();
    }
    return out;
}

}  // namespace mrattrib
