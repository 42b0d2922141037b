#include "moran/exact.hpp"

#include <deque>

namespace moran {

std::vector<Type> TypeChain::config(long index) const {
    std::vector<Type> x(N);
    for (int i = 0; i < N; ++i, index /= d) x[i] = static_cast<Type>(index % d);
    return x;
}

long TypeChain::index(const std::vector<Type>& x) const {
    long r = 0;
    for (int i = N - 1; i >= 0; --i) r = r * d + x[i];
    return r;
}

TypeChain build_type_generator(const ModelParams& p, long cap) {
    validate_params(p);
    TypeChain c;
    c.N = p.N;
    c.d = p.d;
    double size = 1;
    for (int i = 0; i < p.N; ++i) size *= p.d;
    if (size > cap) throw NumericalError("type generator: d^N exceeds the state-space cap");
    c.size = static_cast<long>(size);
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<long> pow(p.N + 1, 1);
    for (int i = 1; i <= p.N; ++i) pow[i] = pow[i - 1] * p.d;
    for (long x = 0; x < c.size; ++x) {
        const auto cfg = c.config(x);
        for (Site i = 0; i < p.N; ++i) {
            for (Type u = 0; u < p.d; ++u) {
                if (u == cfg[i]) continue;
                const double r = p.B * p.b(cfg[i], u);
                if (r > 0) trip.emplace_back(x, x + (u - cfg[i]) * pow[i], r);
            }
            for (Site j = 0; j < p.N; ++j) {
                if (i == j || cfg[i] == cfg[j]) continue;
                const double r = p.resampling_rate(cfg[i], cfg[j]);
                if (r > 0) trip.emplace_back(x, x + (cfg[i] - cfg[j]) * pow[j], r);
            }
        }
    }
    c.gen = GeneratorMatrix<double>::from_rates(c.size, std::move(trip));
    return c;
}

int BpChain::find(const BpState& s) const {
    BpState t = s;
    t.canonicalize();
    auto it = index.find(t.key());
    return it == index.end() ? -1 : it->second;
}

BpChain build_bp_generator(const ModelParams& p, const std::vector<BpState>& starts, bool withV, long cap) {
    validate_params(p);
    BpChain c;
    std::deque<int> queue;
    auto intern = [&](BpState s) {
        s.canonicalize();
        auto key = s.key();
        auto it = c.index.find(key);
        if (it != c.index.end()) return it->second;
        const int id = static_cast<int>(c.states.size());
        if (id >= cap) throw NumericalError("BP generator: reachable state count exceeds the cap");
        c.index.emplace(std::move(key), id);
        c.states.push_back(std::move(s));
        queue.push_back(id);
        return id;
    };
    for (const auto& s : starts) {
        s.check();
        intern(s);
    }
    std::vector<Eigen::Triplet<double>> trip;
    while (!queue.empty()) {
        const int id = queue.front();
        queue.pop_front();
        auto tr = enumerate_transitions(c.states[id], p);
        for (auto& x : tr) {
            const int to = intern(std::move(x.target));
            if (to != id) trip.emplace_back(id, to, x.rate);
        }
    }
    const Eigen::Index n = static_cast<Eigen::Index>(c.states.size());
    c.gen = GeneratorMatrix<double>::from_rates(n, std::move(trip));
    if (withV) {
        Eigen::VectorXd V(n);
        for (Eigen::Index k = 0; k < n; ++k) V(k) = feynman_kac_V(c.states[k], p);
        c.gen.fk = V;
    }
    return c;
}

BpChain build_bp_generator(const ModelParams& p, const std::vector<Site>& J, bool withV, long cap) {
    std::vector<BpState> starts;
    long count = 1;
    for (std::size_t k = 0; k < J.size(); ++k) count *= p.d;
    std::vector<Type> xi(J.size());
    for (long x = 0; x < count; ++x) {
        long y = x;
        for (std::size_t k = 0; k < J.size(); ++k, y /= p.d) xi[k] = static_cast<Type>(y % p.d);
        starts.push_back(canonical_start(p, J, xi));
    }
    return build_bp_generator(p, starts, withV, cap);
}

Eigen::VectorXd duality_vector(const TypeChain& chain, const BpState& s) {
    const auto c = site_constraints(s);
    Eigen::VectorXd h(chain.size);
    for (long x = 0; x < chain.size; ++x) {
        long y = x;
        bool ok = true;
        for (int i = 0; i < chain.N && ok; ++i, y /= chain.d) ok = contains(c[i], static_cast<Type>(y % chain.d));
        h(x) = ok ? 1.0 : 0.0;
    }
    return h;
}

double expected_duality(const Eigen::VectorXd& mu, int N, int d, const BpState& s) {
    const auto c = site_constraints(s);
    double total = 0;
    for (long x = 0; x < mu.size(); ++x) {
        long y = x;
        bool ok = true;
        for (int i = 0; i < N && ok; ++i, y /= d) ok = contains(c[i], static_cast<Type>(y % d));
        if (ok) total += mu(x);
    }
    return total;
}

std::vector<DualityReport> check_duality(const ModelParams& p, const Eigen::VectorXd& muStar, const BpState& etaBar,
                                         const std::vector<double>& ts) {
    const TypeChain tc = build_type_generator(p);
    if (muStar.size() != tc.size) throw ValidationError("check_duality: initial law has the wrong length");
    BpState start = etaBar;
    start.canonicalize();
    const BpChain bc = build_bp_generator(p, std::vector<BpState>{start}, true);
    const Eigen::VectorXd H = duality_vector(tc, start);
    Eigen::VectorXd g(bc.states.size());
    for (std::size_t k = 0; k < bc.states.size(); ++k) g(k) = expected_duality(muStar, p.N, p.d, bc.states[k]);
    const int s0 = bc.find(start);
    std::vector<DualityReport> out;
    for (double t : ts) {
        DualityReport r;
        r.params = p;
        r.t = t;
        r.lhs = muStar.dot(expm_apply(tc.gen, H, t));
        r.rhs = expm_apply(bc.gen, g, t)(s0);
        r.absGap = std::abs(r.lhs - r.rhs);
        out.push_back(r);
    }
    return out;
}

DualityReport check_duality(const ModelParams& p, const Eigen::VectorXd& muStar, const BpState& etaBar, double t) {
    return check_duality(p, muStar, etaBar, std::vector<double>{t}).front();
}

double PotentialTable::at(const BpState& s) const {
    const int k = chain.find(s);
    if (k < 0) throw ValidationError("potential requested for an unreachable state");
    return h(k);
}

PotentialTable compute_h(const ModelParams& p, const std::vector<BpState>& starts, const Eigen::VectorXd& configLaw) {
    PotentialTable t;
    t.chain = build_bp_generator(p, starts, true);
    const Eigen::Index n = static_cast<Eigen::Index>(t.chain.states.size());
    t.h.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        t.h(k) = expected_duality(configLaw, p.N, p.d, t.chain.states[k]);
        if (t.h(k) <= 1e-14) throw NumericalError("positivity assumption violated: h vanishes on a reachable state");
    }
    t.residual = t.chain.gen.apply(t.h).cwiseAbs().maxCoeff();
    return t;
}

PotentialTable compute_h(const ModelParams& p, const std::vector<Site>& J, const StationaryTypeLaw& law) {
    std::vector<BpState> starts;
    long count = 1;
    for (std::size_t k = 0; k < J.size(); ++k) count *= p.d;
    std::vector<Type> xi(J.size());
    for (long x = 0; x < count; ++x) {
        long y = x;
        for (std::size_t k = 0; k < J.size(); ++k, y /= p.d) xi[k] = static_cast<Type>(y % p.d);
        starts.push_back(canonical_start(p, J, xi));
    }
    return compute_h(p, starts, law.configuration_law());
}

double compute_hT(const ModelParams& p, const Eigen::VectorXd& muStar, double T, double t, const BpState& etaBar) {
    if (t < 0 || t > T) throw ValidationError("compute_hT: need 0 <= t <= T");
    const TypeChain tc = build_type_generator(p);
    if (muStar.size() != tc.size) throw ValidationError("compute_hT: initial law has the wrong length");
    const double v = muStar.dot(expm_apply(tc.gen, duality_vector(tc, etaBar), T - t));
    if (!(v > 0)) throw NumericalError("positivity assumption violated: hT is not positive");
    return v;
}

}  // namespace moran
