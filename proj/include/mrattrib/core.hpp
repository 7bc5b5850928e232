#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mrattrib/common.hpp"

namespace mrattrib {

// ---------------------------------------------------------------------------
// Outcome functional h: theta(P_Y) = E[h(Y)].
// ---------------------------------------------------------------------------

enum class FunctionalKind { Mean, SecondMoment, CdfAt };

struct Functional {
    FunctionalKind kind = FunctionalKind::Mean;
    double u = 0.0;  // threshold, CdfAt only

    static Functional mean() { return {FunctionalKind::Mean, 0.0}; }
    static Functional second_moment() { return {FunctionalKind::SecondMoment, 0.0}; }
    static Functional cdf_at(double u) {
        if (!std::isfinite(u)) throw InputError("cdf_at threshold must be finite");
        return {FunctionalKind::CdfAt, u};
    }

    std::string name() const {
        switch (kind) {
            case FunctionalKind::Mean: return "mean";
            case FunctionalKind::SecondMoment: return "second_moment";
            case FunctionalKind::CdfAt: return "cdf_at";
        }
        return "?";
    }
};

inline double functional_eval(const Functional& h, double y) {
    if (!std::isfinite(y)) throw InputError("functional_eval: non-finite outcome");
    switch (h.kind) {
        case FunctionalKind::Mean: return y;
        case FunctionalKind::SecondMoment: return y * y;
        case FunctionalKind::CdfAt: return y <= h.u ? 1.0 : 0.0;
    }
    throw InputError("functional_eval: unknown functional");
}

// ---------------------------------------------------------------------------
// Change vector c in {0,1}^{K+1}; bit k selects which sample's mechanism the
// counterfactual follows for X_k (last bit: the outcome mechanism Y | X).
// ---------------------------------------------------------------------------

struct ChangeVector {
    std::vector<uint8_t> bits;  // length K+1

    ChangeVector() = default;
    explicit ChangeVector(std::vector<uint8_t> b) : bits(std::move(b)) {
        for (uint8_t v : bits)
            if (v > 1) throw InputError("change vector bits must be 0/1");
    }

    static ChangeVector from_string(const std::string& s) {
        std::vector<uint8_t> b;
        b.reserve(s.size());
        for (char ch : s) {
            if (ch == '0') b.push_back(0);
            else if (ch == '1') b.push_back(1);
            else throw SchemaError("change vector string must contain only 0/1: " + s);
        }
        if (b.empty()) throw SchemaError("empty change vector");
        return ChangeVector(std::move(b));
    }

    static ChangeVector from_mask(uint64_t mask, int len) {
        std::vector<uint8_t> b(static_cast<std::size_t>(len));
        for (int i = 0; i < len; ++i) b[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
        return ChangeVector(std::move(b));
    }

    // Path vector b_k: first k entries 1, rest 0.
    static ChangeVector path_vector(int k, int len) {
        std::vector<uint8_t> b(static_cast<std::size_t>(len), 0);
        for (int i = 0; i < k; ++i) b[static_cast<std::size_t>(i)] = 1;
        return ChangeVector(std::move(b));
    }

    int size() const { return static_cast<int>(bits.size()); }
    uint8_t operator[](int i) const { return bits[static_cast<std::size_t>(i)]; }

    uint64_t mask() const {
        uint64_t m = 0;
        for (int i = 0; i < size(); ++i)
            if (bits[static_cast<std::size_t>(i)]) m |= (1ULL << i);
        return m;
    }

    bool all_zero() const {
        for (uint8_t v : bits)
            if (v) return false;
        return true;
    }
    bool all_one() const {
        for (uint8_t v : bits)
            if (!v) return false;
        return true;
    }

    std::string to_string() const {
        std::string s;
        for (uint8_t v : bits) s.push_back(v ? '1' : '0');
        return s;
    }

    bool operator==(const ChangeVector& o) const { return bits == o.bits; }
};

inline constexpr int kDefaultEnumerationCap = 12;  // max K+1 for exact enumeration

inline std::vector<ChangeVector> enumerate_change_vectors(int K, int cap = kDefaultEnumerationCap) {
    if (K < 1) throw InputError("enumerate_change_vectors: K must be >= 1");
    const int len = K + 1;
    if (len > cap)
        throw CapacityError("exact enumeration of 2^" + std::to_string(len) +
                            " change vectors exceeds the cap; use path mode or sampled Shapley");
    std::vector<ChangeVector> out;
    out.reserve(1ULL << len);
    // Lexicographic over the bit string c_1 c_2 ... c_{K+1}.
    for (uint64_t i = 0; i < (1ULL << len); ++i) {
        std::vector<uint8_t> b(static_cast<std::size_t>(len));
        for (int j = 0; j < len; ++j)
            b[static_cast<std::size_t>(j)] = (i >> (len - 1 - j)) & 1u;
        out.emplace_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Causal structure: an ordering of the explanatory variables plus optional
// parent sets and independence declarations used by the plan simplifier.
// ---------------------------------------------------------------------------

struct CausalStructure {
    std::vector<std::string> ordering;  // K names, causal order
    // parents[k]: 0-based indices < k. Unset means "all predecessors".
    std::vector<std::optional<std::vector<int>>> parents;
    // Declared conditional independencies X_a _||_ X_b (given the variables
    // preceding both); lets the simplifier swap a and b when adjacent.
    std::vector<std::pair<int, int>> independence_flags;
    bool all_independent = false;  // shortcut: every parent set empty

    int K() const { return static_cast<int>(ordering.size()); }

    void validate() const {
        const int k = K();
        if (k < 1) throw StructureError("causal ordering must name at least one variable");
        if (!parents.empty() && static_cast<int>(parents.size()) != k)
            throw StructureError("parents list length must match ordering length");
        for (int i = 0; i < static_cast<int>(parents.size()); ++i) {
            if (!parents[static_cast<std::size_t>(i)]) continue;
            for (int p : *parents[static_cast<std::size_t>(i)]) {
                if (p < 0 || p >= k)
                    throw StructureError("parent index out of range for " + ordering[static_cast<std::size_t>(i)]);
                if (p >= i)
                    throw StructureError("parent of " + ordering[static_cast<std::size_t>(i)] +
                                         " must precede it in the causal ordering");
            }
        }
        for (auto [a, b] : independence_flags)
            if (a < 0 || b < 0 || a >= k || b >= k || a == b)
                throw StructureError("independence flag references invalid variable indices");
    }

    // Parent set with the "all predecessors" default applied.
    std::vector<int> resolved_parents(int k) const {
        if (all_independent) return {};
        if (k < static_cast<int>(parents.size()) && parents[static_cast<std::size_t>(k)])
            return *parents[static_cast<std::size_t>(k)];
        std::vector<int> all(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
        return all;
    }

    bool independence_declared(int a, int b) const {
        for (auto [x, y] : independence_flags)
            if ((x == a && y == b) || (x == b && y == a)) return true;
        return false;
    }

    // Whether variables a and b may be exchanged when adjacent in an ordering:
    // neither is a declared parent of the other, or an explicit independence
    // flag covers the pair.
    bool swappable(int a, int b) const {
        if (all_independent || independence_declared(a, b)) return true;
        auto pa = resolved_parents(std::max(a, b));
        for (int p : pa)
            if (p == std::min(a, b)) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Two-sample dataset: sample indicator t, K explanatory columns in causal
// order, outcome y. Immutable after construction.
// ---------------------------------------------------------------------------

struct TwoSampleDataset {
    std::vector<std::string> names;  // K column names
    Eigen::MatrixXd x;               // n x K
    Eigen::VectorXd y;               // n
    std::vector<int> t;              // n entries, 0/1
    long n0 = 0, n1 = 0;

    int K() const { return static_cast<int>(x.cols()); }
    long n() const { return static_cast<long>(x.rows()); }

    static TwoSampleDataset make(std::vector<std::string> names, Eigen::MatrixXd x,
                                 Eigen::VectorXd y, std::vector<int> t) {
        TwoSampleDataset d;
        d.names = std::move(names);
        d.x = std::move(x);
        d.y = std::move(y);
        d.t = std::move(t);
        if (d.x.rows() != d.y.size() || d.x.rows() != static_cast<long>(d.t.size()))
            throw InputError("dataset rows misaligned across t, x, y");
        if (static_cast<int>(d.names.size()) != d.K())
            throw InputError("dataset column names must match x width");
        for (int v : d.t) {
            if (v == 0) ++d.n0;
            else if (v == 1) ++d.n1;
            else throw InputError("sample indicator must be 0 or 1");
        }
        if (d.n0 < 1) throw InputError("empty sample 0");
        if (d.n1 < 1) throw InputError("empty sample 1");
        if (!d.x.allFinite() || !d.y.allFinite())
            throw InputError("dataset contains missing or non-finite values");
        return d;
    }
};

// Dataset bound to a validated causal structure. Keeps per-sample row index
// lists and the original row ids (stable across subsetting, used for
// cross-fitting alignment and file-backed learners).
struct ValidatedModel {
    TwoSampleDataset data;
    CausalStructure structure;
    std::vector<int> rows0, rows1;  // positions within data, per sample
    std::vector<int> row_ids;       // original dataset positions

    int K() const { return data.K(); }
    long n() const { return data.n(); }
};

inline ValidatedModel validate_structure(TwoSampleDataset data, CausalStructure s) {
    s.validate();
    if (static_cast<int>(s.ordering.size()) != data.K())
        throw SchemaError("causal ordering names " + std::to_string(s.ordering.size()) +
                          " variables but dataset has " + std::to_string(data.K()) + " columns");
    for (int k = 0; k < data.K(); ++k)
        if (s.ordering[static_cast<std::size_t>(k)] != data.names[static_cast<std::size_t>(k)])
            throw SchemaError("column '" + data.names[static_cast<std::size_t>(k)] +
                              "' does not match causal ordering entry '" +
                              s.ordering[static_cast<std::size_t>(k)] + "'");
    ValidatedModel m;
    m.data = std::move(data);
    m.structure = std::move(s);
    m.row_ids.resize(static_cast<std::size_t>(m.data.n()));
    for (long i = 0; i < m.data.n(); ++i) {
        m.row_ids[static_cast<std::size_t>(i)] = static_cast<int>(i);
        (m.data.t[static_cast<std::size_t>(i)] == 0 ? m.rows0 : m.rows1).push_back(static_cast<int>(i));
    }
    return m;
}

// Row subset preserving original row ids.
inline ValidatedModel subset_model(const ValidatedModel& m, const std::vector<int>& rows) {
    if (rows.empty()) throw InputError("subset_model: empty row selection");
    ValidatedModel out;
    out.structure = m.structure;
    out.data.names = m.data.names;
    out.data.x.resize(static_cast<long>(rows.size()), m.data.x.cols());
    out.data.y.resize(static_cast<long>(rows.size()));
    out.data.t.resize(rows.size());
    out.row_ids.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        out.data.x.row(static_cast<long>(i)) = m.data.x.row(r);
        out.data.y[static_cast<long>(i)] = m.data.y[r];
        out.data.t[i] = m.data.t[static_cast<std::size_t>(r)];
        out.row_ids[i] = m.row_ids[static_cast<std::size_t>(r)];
        if (out.data.t[i] == 0) {
            ++out.data.n0;
            out.rows0.push_back(static_cast<int>(i));
        } else {
            ++out.data.n1;
            out.rows1.push_back(static_cast<int>(i));
        }
    }
    return out;
}

}  // namespace mrattrib
