#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "moran/errors.hpp"

namespace moran {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Q + diag(fk): Q a conservative rate matrix (rows sum to zero), fk an optional
// Feynman-Kac potential (killing when negative).
template <typename Scalar>
struct GeneratorMatrix {
    using Sparse = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;
    Sparse Q;
    std::optional<Vec<Scalar>> fk;

    Eigen::Index size() const { return Q.rows(); }

    static GeneratorMatrix from_rates(Eigen::Index n, std::vector<Eigen::Triplet<Scalar>> offDiagonal) {
        Vec<Scalar> exit = Vec<Scalar>::Zero(n);
        for (const auto& t : offDiagonal) {
            if (t.row() == t.col()) throw ValidationError("generator: diagonal entry in off-diagonal list");
            if (t.value() < 0) throw ValidationError("generator: negative rate");
            exit(t.row()) += t.value();
        }
        for (Eigen::Index i = 0; i < n; ++i) offDiagonal.emplace_back(i, i, -exit(i));
        GeneratorMatrix g;
        g.Q.resize(n, n);
        g.Q.setFromTriplets(offDiagonal.begin(), offDiagonal.end());
        g.Q.makeCompressed();
        return g;
    }

    GeneratorMatrix transposed() const {
        GeneratorMatrix t;
        t.Q = Sparse(Q.transpose());
        t.fk = fk;
        return t;
    }

    Vec<Scalar> apply(const Vec<Scalar>& v) const {
        Vec<Scalar> r = Q * v;
        if (fk) r += fk->cwiseProduct(v);
        return r;
    }

    Scalar max_row_sum_error() const {
        Vec<Scalar> ones = Vec<Scalar>::Ones(size());
        return (Q * ones).cwiseAbs().maxCoeff();
    }
};

// e^{t(Q + diag fk)} v by uniformization. P = I + (M - c I)/q is nonnegative with
// row sums <= 1, so every Poisson term is a nonnegative combination and the
// truncated tail is bounded by tol * |v|_inf per step. Long horizons are split so
// the Poisson mean per step stays moderate.
template <typename Scalar>
Vec<Scalar> expm_apply(const GeneratorMatrix<Scalar>& G, const Vec<Scalar>& v, Scalar t, Scalar tol = Scalar(1e-13)) {
    if (t < 0) throw ValidationError("expm_apply: negative time");
    if (v.size() != G.size()) throw ValidationError("expm_apply: size mismatch");
    if (t == 0 || G.size() == 0) return v;
    const Eigen::Index n = G.size();
    Vec<Scalar> diag = G.Q.diagonal();
    Vec<Scalar> fk = G.fk ? *G.fk : Vec<Scalar>::Zero(n);
    const Scalar c = fk.maxCoeff();
    const Scalar q = (-(diag + fk).array() + c).maxCoeff();
    if (!(q > 0)) return v * std::exp(c * t);

    const Scalar maxMean = 30;
    const int steps = std::max(1, static_cast<int>(std::ceil(q * t / maxMean)));
    const Scalar h = t / steps;
    const Scalar lambda = q * h;
    // P v = v + (Q v + (fk - c) v) / q
    auto applyP = [&](const Vec<Scalar>& x) -> Vec<Scalar> {
        Vec<Scalar> y = G.Q * x;
        y += (fk.array() - c).matrix().cwiseProduct(x);
        return x + y / q;
    };
    Vec<Scalar> cur = v;
    for (int s = 0; s < steps; ++s) {
        Scalar w = std::exp(-lambda);
        Scalar mass = w;
        Vec<Scalar> term = cur;
        Vec<Scalar> acc = w * term;
        for (int k = 1; 1 - mass > tol || k <= lambda; ++k) {
            term = applyP(term);
            w *= lambda / k;
            mass += w;
            acc += w * term;
            if (k > 100000) throw NumericalError("expm_apply: Poisson truncation did not converge");
        }
        cur = acc * std::exp(c * h);
    }
    return cur;
}

}  // namespace moran
