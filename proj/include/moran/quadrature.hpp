#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <vector>

#include "moran/errors.hpp"

namespace moran {

template <typename Scalar>
struct QuadratureResult {
    Scalar value;
    Scalar error;
    int intervals;
};

namespace detail {

template <typename Scalar>
struct KronrodRule {
    // 15-point Kronrod nodes on [-1,1] (nonnegative half) with embedded 7-point Gauss weights.
    static constexpr double xk[8] = {
        0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
        0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
        0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
        0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
    static constexpr double wk[8] = {
        0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
        0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
        0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
        0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
    static constexpr double wg[4] = {
        0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
        0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
};

template <typename Scalar, typename F>
std::pair<Scalar, Scalar> kronrod15(F& f, Scalar a, Scalar b) {
    using R = KronrodRule<Scalar>;
    const Scalar c = (a + b) / 2, h = (b - a) / 2;
    const Scalar fc = f(c);
    Scalar k = fc * Scalar(R::wk[7]);
    Scalar g = fc * Scalar(R::wg[3]);
    for (int i = 0; i < 7; ++i) {
        const Scalar dx = h * Scalar(R::xk[i]);
        const Scalar s = f(c - dx) + f(c + dx);
        k += Scalar(R::wk[i]) * s;
        if (i % 2 == 1) g += Scalar(R::wg[i / 2]) * s;
    }
    return {k * h, std::abs((k - g) * h)};
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod (7/15) on [a,b]. Bisects the interval with the
// largest error estimate until the total estimate is below max(absTol, relTol*|I|).
template <typename Scalar, typename F>
QuadratureResult<Scalar> integrate_adaptive(F f, Scalar a, Scalar b, Scalar absTol, Scalar relTol,
                                            int maxIntervals = 4000) {
    struct Piece {
        Scalar a, b, value, error;
        bool operator<(const Piece& o) const { return error < o.error; }
    };
    std::priority_queue<Piece> heap;
    auto [v0, e0] = detail::kronrod15<Scalar>(f, a, b);
    heap.push({a, b, v0, e0});
    Scalar total = v0, err = e0;
    int count = 1;
    while (err > std::max(absTol, relTol * std::abs(total))) {
        if (count >= maxIntervals)
            throw NumericalError("quadrature did not converge within interval budget");
        Piece p = heap.top();
        heap.pop();
        const Scalar m = (p.a + p.b) / 2;
        auto [vl, el] = detail::kronrod15<Scalar>(f, p.a, m);
        auto [vr, er] = detail::kronrod15<Scalar>(f, m, p.b);
        total += vl + vr - p.value;
        err += el + er - p.error;
        heap.push({p.a, m, vl, el});
        heap.push({m, p.b, vr, er});
        ++count;
        if (!(err > 0)) break;
    }
    // re-sum to shed accumulated cancellation from the running updates
    Scalar sum = 0, esum = 0;
    while (!heap.empty()) {
        sum += heap.top().value;
        esum += heap.top().error;
        heap.pop();
    }
    return {sum, esum, count};
}

}  // namespace moran
