#pragma once

#include <utility>
#include <vector>

#include "moran/errors.hpp"

namespace moran {

// Right-continuous piecewise-constant path on [start, end].
template <typename Value>
struct CadlagPath {
    double start = 0;
    double end = 0;
    Value initial{};
    std::vector<std::pair<double, Value>> jumps;  // strictly increasing times in (start, end]

    const Value& at(double s) const {
        if (s < start || s > end) throw ValidationError("path evaluated outside its domain");
        const Value* v = &initial;
        for (const auto& [t, x] : jumps) {
            if (t > s) break;
            v = &x;
        }
        return *v;
    }

    void push(double t, const Value& v) {
        const Value& last = jumps.empty() ? initial : jumps.back().second;
        if (!(v == last)) jumps.emplace_back(t, v);
    }

    // Lebesgue measure of {s in [from,to] : pred(value at s)}.
    template <typename Pred>
    double occupation(double from, double to, Pred pred) const {
        double total = 0;
        double segStart = start;
        const Value* v = &initial;
        auto add = [&](double a, double b, const Value& x) {
            const double lo = std::max(a, from), hi = std::min(b, to);
            if (hi > lo && pred(x)) total += hi - lo;
        };
        for (const auto& [t, x] : jumps) {
            add(segStart, t, *v);
            segStart = t;
            v = &x;
        }
        add(segStart, end, *v);
        return total;
    }
};

// Time reversal onto [-end, -start], keeping right-continuity: the value at a
// reversed jump time is the left limit of the original path there.
template <typename Value>
CadlagPath<Value> reverse_path(const CadlagPath<Value>& p) {
    CadlagPath<Value> r;
    r.start = -p.end;
    r.end = -p.start;
    if (p.jumps.empty()) {
        r.initial = p.initial;
        return r;
    }
    r.initial = p.jumps.back().second;
    for (int k = static_cast<int>(p.jumps.size()) - 1; k >= 0; --k) {
        const Value& before = k == 0 ? p.initial : p.jumps[k - 1].second;
        r.jumps.emplace_back(-p.jumps[k].first, before);
    }
    return r;
}

}  // namespace moran
