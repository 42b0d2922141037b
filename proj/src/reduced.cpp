#include "moran/reduced.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "moran/bp.hpp"
#include "moran/exact.hpp"
#include "moran/transformed.hpp"

namespace moran {

namespace {

void check_two_type(const ModelParams& p) {
    if (p.d != 2) throw ValidationError("reduced chains require two types");
    if (!p.identical_rows()) throw ValidationError("reduced chains require identical rows of b");
    if (!(p.B * p.b0() > 0) || !(p.B * p.b1() > 0)) throw ValidationError("reduced chains require B b0 > 0 and B b1 > 0");
    if (p.S < 0) throw ValidationError("selection must be nonnegative");
}

double choose2(double n) { return n * (n - 1) / 2; }

Eigen::VectorXd solve_stationary(const Eigen::MatrixXd& Q) {
    const Eigen::Index n = Q.rows();
    Eigen::MatrixXd A = Q.transpose();
    A.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (!lu.isInvertible()) throw NumericalError("stationary solve: singular system");
    Eigen::VectorXd pi = lu.solve(rhs);
    if ((A * pi - rhs).cwiseAbs().maxCoeff() > 1e-8) throw NumericalError("stationary solve: inaccurate solution");
    return pi;
}

Eigen::MatrixXd dense(const GeneratorMatrix<double>& g) {
    Eigen::MatrixXd m = Eigen::MatrixXd(g.Q);
    if (g.fk) m.diagonal() += *g.fk;
    return m;
}

}  // namespace

const char* mode_name(ChainMode m) { return m == ChainMode::FiniteN ? "finite" : "limit"; }

// ---------------------------------------------------------------- CAT chain

CatChainSpec CatChainSpec::finite(const ModelParams& p, const StationaryTypeLaw& law) {
    check_two_type(p);
    CatChainSpec s;
    s.mode = ChainMode::FiniteN;
    s.params = p;
    s.moments = pn_table(law);
    s.nMax = p.N - 1;
    return s;
}

CatChainSpec CatChainSpec::finite(const ModelParams& p) { return finite(p, finite_stationary_law(p)); }

CatChainSpec CatChainSpec::limit(const ModelParams& p, int nMax) {
    check_two_type(p);
    if (nMax < 1) throw ValidationError("nMax must be at least 1");
    CatChainSpec s;
    s.mode = ChainMode::Limit;
    s.params = p;
    s.moments = wf_mixed_moments(p, nMax + 2, 1);
    s.nMax = nMax;
    return s;
}

double CatChainSpec::up(int u, int n) const {
    if (n >= nMax) return 0;
    const auto& p = params;
    const double factor = fearnheadVariant ? 1.0 : n + 1.0;
    double r = p.S * factor;
    if (mode == ChainMode::FiniteN) r *= (p.N - 1.0 - n) / p.N;
    if (r == 0) return 0;
    return r * moments(u, n + 2 - u) / moments(u, n + 1 - u);
}

double CatChainSpec::down(int u, int n) const {
    if (n < 1) return 0;
    const auto& p = params;
    const double g = mode == ChainMode::FiniteN ? (p.N - p.S) / p.N : 1.0;
    const double r = p.B * p.b0() * n + choose2(n + 1.0 - u) * g;
    if (r == 0) return 0;
    return r * moments(u, n - u) / moments(u, n + 1 - u);
}

double CatChainSpec::flip(int u, int n) const {
    const auto& p = params;
    const double r = p.B * (u == 1 ? p.b1() : p.b0());
    return r * moments(1 - u, n + u) / moments(u, n + 1 - u);
}

GeneratorMatrix<double> CatChainSpec::generator() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int u = 0; u < 2; ++u)
        for (int n = 0; n <= nMax; ++n) {
            const int i = index(u, n);
            if (double r = up(u, n); r > 0) t.emplace_back(i, index(u, n + 1), r);
            if (double r = down(u, n); r > 0) t.emplace_back(i, index(u, n - 1), r);
            if (double r = flip(u, n); r > 0) t.emplace_back(i, index(1 - u, n), r);
        }
    return GeneratorMatrix<double>::from_rates(2 * levels(), std::move(t));
}

CatEquilibrium cat_equilibrium(const CatChainSpec& spec) {
    CatEquilibrium e;
    e.pi = solve_stationary(dense(spec.generator()));
    if (e.pi.minCoeff() < -1e-10) throw NumericalError("stationary solve: negative mass");
    e.pi = e.pi.cwiseMax(0.0);
    e.pi /= e.pi.sum();
    const int L = spec.levels();
    e.marginal << e.pi.head(L).sum(), e.pi.tail(L).sum();
    e.nMax = spec.nMax;
    e.topMass = e.pi(spec.index(0, spec.nMax)) + e.pi(spec.index(1, spec.nMax));
    return e;
}

CatEquilibrium cat_equilibrium_limit(const ModelParams& p, int nStart, int nCap, double tailTol,
                                     bool fearnheadVariant) {
    for (int n = std::max(nStart, 1); n <= nCap; n *= 2) {
        CatChainSpec spec = CatChainSpec::limit(p, n);
        spec.fearnheadVariant = fearnheadVariant;
        CatEquilibrium e = cat_equilibrium(spec);
        if (e.topMass < tailTol) return e;
    }
    std::ostringstream os;
    os << "tail bound unmet at nMax cap " << nCap;
    throw NumericalError(os.str());
}

ChainVsBpReport cat_chain_vs_bp(const ModelParams& p, const std::vector<double>& ts) {
    const StationaryTypeLaw law = finite_stationary_law(p);
    const CatChainSpec spec = CatChainSpec::finite(p, law);
    const PotentialTable pt = compute_h(p, std::vector<Site>{0}, law);
    const GeneratorMatrix<double> bpT = transformed_generator(pt.chain, pt.h).transposed();
    const GeneratorMatrix<double> yT = spec.generator().transposed();

    // lump BP states into (mark, number of active sites with set {0})
    const int nStates = static_cast<int>(pt.chain.states.size());
    std::vector<int> lump(nStates);
    for (int k = 0; k < nStates; ++k) {
        const BpState& s = pt.chain.states[k];
        int zeros = 0;
        for (Site i : s.active_sites()) zeros += s.sets[i] == prefix_set(0);
        lump[k] = spec.index(s.marks[0].type, zeros);
    }

    ChainVsBpReport rep;
    rep.bpStates = nStates;
    for (double t : ts) {
        double gap = 0;
        for (int u = 0; u < 2; ++u) {
            Eigen::VectorXd y0 = Eigen::VectorXd::Zero(2 * spec.levels());
            y0(spec.index(u, 0)) = 1;
            const Eigen::VectorXd y = expm_apply(yT, y0, t);
            const int start = pt.chain.find(canonical_start(p, {0}, {u}));
            if (start < 0) throw NumericalError("canonical start missing from the BP chain");
            Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nStates);
            x0(start) = 1;
            const Eigen::VectorXd x = expm_apply(bpT, x0, t);
            Eigen::VectorXd lumped = Eigen::VectorXd::Zero(y.size());
            for (int k = 0; k < nStates; ++k) lumped(lump[k]) += x(k);
            gap = std::max(gap, (lumped - y).cwiseAbs().maxCoeff());
        }
        rep.t.push_back(t);
        rep.gap.push_back(gap);
        rep.maxGap = std::max(rep.maxGap, gap);
    }
    return rep;
}

// ---------------------------------------------------------------- distance chain

DistChainSpec DistChainSpec::finite(const ModelParams& p, const StationaryTypeLaw& law) {
    check_two_type(p);
    if (p.N < 2) throw ValidationError("distance chain requires N >= 2");
    DistChainSpec s;
    s.mode = ChainMode::FiniteN;
    s.params = p;
    s.moments = pn_table(law);
    s.nMax = p.N - 2;
    return s;
}

DistChainSpec DistChainSpec::finite(const ModelParams& p) { return finite(p, finite_stationary_law(p)); }

DistChainSpec DistChainSpec::limit(const ModelParams& p, int nMax) {
    check_two_type(p);
    if (nMax < 1) throw ValidationError("nMax must be at least 1");
    DistChainSpec s;
    s.mode = ChainMode::Limit;
    s.params = p;
    s.moments = wf_mixed_moments(p, nMax + 3, 2);
    s.nMax = nMax;
    return s;
}

double DistChainSpec::weight(int y, int n) const {
    switch (y) {
        case Open: return moments(0, n + 2);
        case Full: return moments(2, n);
        default: return moments(1, n + 1);
    }
}

double DistChainSpec::up(int y, int n) const {
    if (n >= nMax) return 0;
    const auto& p = params;
    double r = p.S * (n + 2.0);
    if (mode == ChainMode::FiniteN) r *= (p.N - 2.0 - n) / p.N;
    if (r == 0) return 0;
    return r * weight(y, n + 1) / weight(y, n);
}

double DistChainSpec::down(int y, int n) const {
    if (n < 1) return 0;
    const auto& p = params;
    const double g = mode == ChainMode::FiniteN ? (p.N - p.S) / p.N : 1.0;
    double pairs = 0;
    switch (y) {
        case Open: pairs = choose2(n + 2.0) - 1; break;
        case Full: pairs = choose2(n); break;
        default: pairs = choose2(n + 1.0); break;
    }
    const double r = p.B * p.b0() * n + pairs * g;
    if (r == 0) return 0;
    return r * weight(y, n - 1) / weight(y, n);
}

double DistChainSpec::switch_rate(int y, int z, int n) const {
    const auto& p = params;
    double r = 0;
    if (y == Open && z == Half) r = 2 * p.B * p.b0();
    else if (y == Full && z == Half) r = 2 * p.B * p.b1();
    else if (y == Half && z == Open) r = p.B * p.b1();
    else if (y == Half && z == Full) r = p.B * p.b0();
    if (r == 0) return 0;
    return r * weight(z, n) / weight(y, n);
}

double DistChainSpec::absorb(int y, int n) const {
    const auto& p = params;
    const bool fin = mode == ChainMode::FiniteN;
    if (y == Open) {
        const double g = fin ? (p.N - p.S) / p.N : 1.0;
        return g * moments(0, n + 1) / moments(0, n + 2) + (fin ? p.S / p.N : 0.0);
    }
    if (y == Full) {
        double r = moments(1, n) / moments(2, n);
        if (fin && p.S > 0) r += p.S / p.N * moments(1, n + 1) / moments(2, n);
        return r;
    }
    return 0;
}

GeneratorMatrix<double> DistChainSpec::generator() const {
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd kill(3 * levels());
    for (int y = 0; y < 3; ++y)
        for (int n = 0; n <= nMax; ++n) {
            const int i = index(y, n);
            if (double r = up(y, n); r > 0) t.emplace_back(i, index(y, n + 1), r);
            if (double r = down(y, n); r > 0) t.emplace_back(i, index(y, n - 1), r);
            for (int z = 0; z < 3; ++z)
                if (z != y)
                    if (double r = switch_rate(y, z, n); r > 0) t.emplace_back(i, index(z, n), r);
            kill(i) = -absorb(y, n);
        }
    auto g = GeneratorMatrix<double>::from_rates(3 * levels(), std::move(t));
    g.fk = kill;
    return g;
}

namespace {

void fill_pf(const DistChainSpec& spec, const Eigen::MatrixXd& f, Eigen::VectorXd& pf, Eigen::VectorXd& R) {
    const int L = spec.levels();
    const double S = spec.params.S;
    pf.resize(L);
    for (int n = 0; n < L; ++n)
        pf(n) = spec.weight(Open, n) * f(Open, n) + spec.weight(Full, n) * f(Full, n) +
                2 * spec.weight(Half, n) * f(Half, n);
    R.resize(L);
    for (int n = 0; n < L; ++n) {
        double r = 2 * S * spec.weight(Full, n) * f(Full, n) + 2 * S * spec.weight(Half, n) * f(Half, n);
        if (n >= 1)
            r += 2.0 * n * spec.moments(0, n + 1) * f(Open, n - 1) + 2.0 * n * spec.moments(1, n) * f(Half, n - 1);
        R(n) = r;
    }
}

}  // namespace

SurvivalTable dist_survival(const DistChainSpec& spec, const std::vector<double>& tGrid) {
    const GeneratorMatrix<double> G = spec.generator();
    const int L = spec.levels();
    SurvivalTable tab;
    tab.levels = L;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(3 * L);
    double last = 0;
    for (double t : tGrid) {
        if (t < last) throw ValidationError("time grid must be nondecreasing and nonnegative");
        v = expm_apply(G, v, t - last, 1e-14);
        last = t;
        Eigen::MatrixXd f(3, L);
        for (int y = 0; y < 3; ++y)
            for (int n = 0; n < L; ++n) f(y, n) = std::clamp(v(spec.index(y, n)), 0.0, 1.0);
        Eigen::VectorXd pf, R;
        fill_pf(spec, f, pf, R);
        tab.t.push_back(t);
        tab.f.push_back(std::move(f));
        tab.pf.push_back(std::move(pf));
        tab.remainder.push_back(std::move(R));
    }
    return tab;
}

SurvivalTable dist_survival_limit(const ModelParams& p, const std::vector<double>& tGrid, int nStart, int nCap,
                                  double tol) {
    SurvivalTable prev;
    bool have = false;
    for (int n = std::max(nStart, 1); n <= nCap; n *= 2) {
        SurvivalTable cur = dist_survival(DistChainSpec::limit(p, n), tGrid);
        if (have) {
            double change = 0;
            for (std::size_t k = 0; k < tGrid.size(); ++k)
                change = std::max(change, (cur.f[k].col(0) - prev.f[k].col(0)).cwiseAbs().maxCoeff());
            cur.truncationChange = change;
            if (change < tol) return cur;
        }
        prev = std::move(cur);
        have = true;
    }
    std::ostringstream os;
    os << "truncation error above budget at nMax " << nCap << "; try a larger nMax";
    throw NumericalError(os.str());
}

TaylorCoeffs dist_taylor_coeffs(const DistChainSpec& spec, int order) {
    if (order < 0) throw ValidationError("order must be nonnegative");
    if (spec.nMax < order + 1) throw ValidationError("nMax too small for the requested order");
    const GeneratorMatrix<double> G = spec.generator();
    TaylorCoeffs c;
    Eigen::VectorXd g = Eigen::VectorXd::Ones(3 * spec.levels());
    for (int k = 0; k <= order; ++k) {
        for (int y = 0; y < 3; ++y) c.f[y].push_back(g(spec.index(y, 0)));
        c.pf.push_back(spec.weight(Open, 0) * g(spec.index(Open, 0)) + spec.weight(Full, 0) * g(spec.index(Full, 0)) +
                       2 * spec.weight(Half, 0) * g(spec.index(Half, 0)));
        g = G.apply(g);
    }
    return c;
}

double LemmaResidual::max() const { return std::max({open, full, half, pf}); }

LemmaResidual lemma_ode_residual(const DistChainSpec& spec, const SurvivalTable& table) {
    const auto& p = spec.params;
    const double B = p.B, b0 = p.b0(), b1 = p.b1(), S = p.S;
    const auto& E = spec.moments;
    const GeneratorMatrix<double> G = spec.generator();
    const int L = spec.levels();
    LemmaResidual res;
    for (std::size_t k = 0; k < table.t.size(); ++k) {
        const Eigen::MatrixXd& f = table.f[k];
        Eigen::VectorXd v(3 * L);
        for (int y = 0; y < 3; ++y)
            for (int n = 0; n < L; ++n) v(spec.index(y, n)) = f(y, n);
        const Eigen::VectorXd df = G.apply(v);
        auto F = [&](int y, int n) { return n < 0 ? 0.0 : f(y, n); };
        auto D = [&](int y, int n) { return df(spec.index(y, n)); };
        const Eigen::VectorXd& pf = table.pf[k];
        auto PF = [&](int n) { return n < 0 ? 0.0 : pf(n); };
        for (int n = 0; n + 1 < L; ++n) {
            const double lead = (2.0 + n) * (n + 1 + 2 * B + 2 * S) / 2;
            const double open = (n * B * b0 + (n + 2.0) * (n + 1) / 2 - 1) * (n ? E(0, n + 1) : 0.0) * F(Open, n - 1) +
                                2 * B * b0 * E(1, n + 1) * F(Half, n) + (2.0 + n) * S * E(0, n + 3) * F(Open, n + 1) -
                                (lead - 2 * B + 2 * B * b1) * E(0, n + 2) * F(Open, n);
            res.open = std::max(res.open, std::abs(E(0, n + 2) * D(Open, n) - open));
            const double full = (n * B * b0 + n * (n - 1.0) / 2) * (n ? E(2, n - 1) : 0.0) * F(Full, n - 1) +
                                2 * B * b1 * E(1, n + 1) * F(Half, n) + (n + 2.0) * S * E(2, n + 1) * F(Full, n + 1) -
                                (lead - 2 * S - 2 * B + 2 * B * b0) * E(2, n) * F(Full, n);
            res.full = std::max(res.full, std::abs(E(2, n) * D(Full, n) - full));
            const double half = (n * B * b0 + n * (n + 1.0) / 2) * E(1, n) * F(Half, n - 1) +
                                B * b1 * E(0, n + 2) * F(Open, n) + B * b0 * E(2, n) * F(Full, n) +
                                (n + 2.0) * S * E(1, n + 2) * F(Half, n + 1) -
                                (lead - S - B) * E(1, n + 1) * F(Half, n);
            res.half = std::max(res.half, std::abs(E(1, n + 1) * D(Half, n) - half));

            const double dpf = spec.weight(Open, n) * D(Open, n) + spec.weight(Full, n) * D(Full, n) +
                               2 * spec.weight(Half, n) * D(Half, n);
            const double rhs = n / 2.0 * (n - 1 + 2 * B * b0) * PF(n - 1) - ((n + 2.0) / 2 * (n + 1 + 2 * B + 2 * S) - 2 * B) * PF(n) +
                               (n + 2.0) * S * PF(n + 1) + table.remainder[k](n);
            res.pf = std::max(res.pf, std::abs(dpf - rhs));
        }
    }
    return res;
}

ChainVsBpReport dist_chain_vs_bp(const ModelParams& p, const std::vector<double>& ts) {
    const StationaryTypeLaw law = finite_stationary_law(p);
    const DistChainSpec spec = DistChainSpec::finite(p, law);
    const GeneratorMatrix<double> Y = spec.generator();
    const PotentialTable pt = compute_h(p, std::vector<Site>{0, 1}, law);
    const GeneratorMatrix<double> T = transformed_generator(pt.chain, pt.h);

    // restrict to states where the two members sit in different blocks
    const int nStates = static_cast<int>(pt.chain.states.size());
    std::vector<int> alive(nStates, -1);
    int m = 0;
    for (int k = 0; k < nStates; ++k)
        if (pt.chain.states[k].blocks().size() == 2) alive[k] = m++;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd kill = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < nStates; ++k) {
        if (alive[k] < 0) continue;
        for (GeneratorMatrix<double>::Sparse::InnerIterator it(T.Q, k); it; ++it) {
            if (it.col() == k) continue;
            if (alive[it.col()] >= 0) trip.emplace_back(alive[k], alive[it.col()], it.value());
            else kill(alive[k]) -= it.value();
        }
    }
    auto A = GeneratorMatrix<double>::from_rates(m, std::move(trip));
    A.fk = kill;

    const std::array<std::pair<DistKind, std::vector<Type>>, 3> starts{
        {{Open, {0, 0}}, {Full, {1, 1}}, {Half, {0, 1}}}};
    ChainVsBpReport rep;
    rep.bpStates = nStates;
    const Eigen::VectorXd onesY = Eigen::VectorXd::Ones(Y.size());
    const Eigen::VectorXd onesA = Eigen::VectorXd::Ones(m);
    for (double t : ts) {
        const Eigen::VectorXd fy = expm_apply(Y, onesY, t);
        const Eigen::VectorXd fa = expm_apply(A, onesA, t);
        double gap = 0;
        for (const auto& [y, xi] : starts) {
            const int k = pt.chain.find(canonical_start(p, {0, 1}, xi));
            if (k < 0 || alive[k] < 0) throw NumericalError("canonical start missing from the BP chain");
            gap = std::max(gap, std::abs(fy(spec.index(y, 0)) - fa(alive[k])));
        }
        rep.t.push_back(t);
        rep.gap.push_back(gap);
        rep.maxGap = std::max(rep.maxGap, gap);
    }
    return rep;
}

double closed_form_f(const ModelParams& p, DistKind y, double t) {
    if (p.S != 0) throw ValidationError("closed forms require S = 0");
    const double B = p.B, b0 = p.b0(), b1 = p.b1();
    const double e = std::exp(-2 * B * t) - 1;
    switch (y) {
        case Open: return std::exp(-t) * (1 + b1 * e / (1 + 2 * B * b0));
        case Full: return std::exp(-t) * (1 + b0 * e / (1 + 2 * B * b1));
        default: return std::exp(-t) * (1 - e / (2 * B));
    }
}

}  // namespace moran
