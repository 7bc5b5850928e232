#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mrattrib/common.hpp"

namespace mrattrib {

// Polynomial expansion: all monomials of total degree 1..degree over the
// inputs, including interactions, graded-lexicographic order. No constant
// column; intercepts live in the fitters.
struct PolynomialMap {
    int inputs = 0;
    int degree = 1;
    std::vector<std::vector<int>> exponents;  // one exponent vector per feature

    static PolynomialMap make(int inputs, int degree) {
        if (inputs < 0) throw InputError("polynomial map: negative input width");
        if (degree < 1) throw InputError("polynomial map: degree must be >= 1");
        PolynomialMap m;
        m.inputs = inputs;
        m.degree = degree;
        std::vector<int> e(static_cast<std::size_t>(inputs), 0);
        for (int total = 1; total <= degree; ++total) emit(m.exponents, e, 0, total);
        return m;
    }

    int size() const { return static_cast<int>(exponents.size()); }

    void expand_row(const double* x, double* out) const {
        for (std::size_t f = 0; f < exponents.size(); ++f) {
            double v = 1.0;
            const auto& e = exponents[f];
            for (int i = 0; i < inputs; ++i)
                for (int r = 0; r < e[static_cast<std::size_t>(i)]; ++r) v *= x[i];
            out[f] = v;
        }
    }

    Eigen::MatrixXd expand(const Eigen::MatrixXd& X) const {
        if (X.cols() != inputs) throw InputError("polynomial map: input width mismatch");
        Eigen::MatrixXd Z(X.rows(), size());
        std::vector<double> row(static_cast<std::size_t>(inputs));
        std::vector<double> out(static_cast<std::size_t>(size()));
        for (long i = 0; i < X.rows(); ++i) {
            for (int j = 0; j < inputs; ++j) row[static_cast<std::size_t>(j)] = X(i, j);
            expand_row(row.data(), out.data());
            for (int f = 0; f < size(); ++f) Z(i, f) = out[static_cast<std::size_t>(f)];
        }
        return Z;
    }

    Eigen::VectorXd expand_one(const Eigen::Ref<const Eigen::VectorXd>& x) const {
        if (x.size() != inputs) throw InputError("polynomial map: input width mismatch");
        Eigen::VectorXd out(size());
        expand_row(x.data(), out.data());
        return out;
    }

    std::string describe() const {
        return "poly(p=" + std::to_string(inputs) + ",d=" + std::to_string(degree) + ")";
    }

private:
    static void emit(std::vector<std::vector<int>>& acc, std::vector<int>& e, int pos, int remaining) {
        const int p = static_cast<int>(e.size());
        if (pos == p) {
            if (remaining == 0) acc.push_back(e);
            return;
        }
        for (int take = remaining; take >= 0; --take) {
            e[static_cast<std::size_t>(pos)] = take;
            emit(acc, e, pos + 1, remaining - take);
        }
        e[static_cast<std::size_t>(pos)] = 0;
    }
};

// Column-wise standardization (training statistics). Zero-variance columns get
// unit scale so they standardize to exactly zero and drop out of the fit.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;  // population sd

    static Standardizer fit(const Eigen::MatrixXd& Z) {
        Standardizer s;
        const long n = Z.rows();
        if (n < 1) throw InputError("standardizer: empty matrix");
        s.mean = Z.colwise().mean();
        s.scale.resize(Z.cols());
        for (long j = 0; j < Z.cols(); ++j) {
            double ss = (Z.col(j).array() - s.mean[j]).square().sum() / static_cast<double>(n);
            s.scale[j] = ss > 0.0 ? std::sqrt(ss) : 1.0;
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& Z) const {
        return (Z.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

}  // namespace mrattrib
