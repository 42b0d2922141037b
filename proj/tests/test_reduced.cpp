#include <array>
#include <cmath>

#include "doctest.h"
#include "moran/reduced.hpp"
#include "moran/rng.hpp"

using namespace moran;

namespace {

double choose2(double n) { return n * (n - 1) / 2; }

std::vector<double> grid(double from, double to, double step) {
    std::vector<double> t;
    for (double x = from; x <= to + 1e-12; x += step) t.push_back(x);
    return t;
}

// neutral two-type closed forms, written as mixtures of e^{-t} and e^{-(1+2B)t}
double open_oracle(double B, double b0, double b1, double t) {
    return ((1 + 2 * B) * b0 * std::exp(-t) + b1 * std::exp(-(1 + 2 * B) * t)) / (1 + 2 * B * b0);
}
double full_oracle(double B, double b0, double b1, double t) { return open_oracle(B, b1, b0, t); }
double half_oracle(double B, double t) {
    return (1 + 2 * B) / (2 * B) * std::exp(-t) - std::exp(-(1 + 2 * B) * t) / (2 * B);
}

}  // namespace

TEST_CASE("CAT chain rate table") {
    for (ChainMode mode : {ChainMode::FiniteN, ChainMode::Limit}) {
        const ModelParams p = ModelParams::two_type(6, 1.2, 0.35, 2.0);
        const CatChainSpec s = mode == ChainMode::FiniteN ? CatChainSpec::finite(p) : CatChainSpec::limit(p, 8);
        const auto& M = s.moments;
        const bool fin = mode == ChainMode::FiniteN;
        const double g = fin ? (6 - 2.0) / 6 : 1.0;
        for (int u = 0; u < 2; ++u)
            for (int n = 0; n <= s.nMax; ++n) {
                const double norm = M(u, n + 1 - u);
                const double up = n == s.nMax ? 0.0 : 2.0 * (n + 1) * (fin ? (5.0 - n) / 6 : 1.0) * M(u, n + 2 - u) / norm;
                const double down = n == 0 ? 0.0 : (1.2 * 0.35 * n + choose2(n + 1 - u) * g) * M(u, n - u) / norm;
                const double flip = 1.2 * (u ? 0.65 : 0.35) * M(1 - u, n + u) / norm;
                CHECK(s.up(u, n) == doctest::Approx(up).epsilon(1e-13));
                CHECK(s.down(u, n) == doctest::Approx(down).epsilon(1e-13));
                CHECK(s.flip(u, n) == doctest::Approx(flip).epsilon(1e-13));
            }
        CHECK(s.generator().max_row_sum_error() < 1e-12);
        CHECK(s.generator().size() == 2 * s.levels());
    }
    CatChainSpec f = CatChainSpec::limit(ModelParams::two_type(6, 1.2, 0.35, 2.0), 8);
    f.fearnheadVariant = true;
    CHECK(f.up(0, 3) == doctest::Approx(2.0 * f.moments(0, 5) / f.moments(0, 4)));
}

TEST_CASE("distance chain rate table") {
    const ModelParams p = ModelParams::two_type(7, 0.8, 0.6, 1.5);
    const DistChainSpec s = DistChainSpec::finite(p);
    CHECK(s.nMax == 5);
    const auto& M = s.moments;
    const double g = (7 - 1.5) / 7;
    for (int n = 0; n <= s.nMax; ++n) {
        const double wo = M(0, n + 2), wf = M(2, n), wh = M(1, n + 1);
        CHECK(s.weight(Open, n) == wo);
        CHECK(s.weight(Full, n) == wf);
        CHECK(s.weight(Half, n) == wh);
        if (n < s.nMax) CHECK(s.up(Half, n) == doctest::Approx(1.5 * (n + 2) * (5.0 - n) / 7 * M(1, n + 2) / wh));
        if (n > 0) {
            CHECK(s.down(Open, n) == doctest::Approx((0.8 * 0.6 * n + (choose2(n + 2) - 1) * g) * M(0, n + 1) / wo));
            CHECK(s.down(Full, n) == doctest::Approx((0.8 * 0.6 * n + choose2(n) * g) * M(2, n - 1) / wf));
        }
        CHECK(s.switch_rate(Open, Half, n) == doctest::Approx(2 * 0.8 * 0.6 * wh / wo));
        CHECK(s.switch_rate(Full, Half, n) == doctest::Approx(2 * 0.8 * 0.4 * wh / wf));
        CHECK(s.switch_rate(Half, Open, n) == doctest::Approx(0.8 * 0.4 * wo / wh));
        CHECK(s.switch_rate(Half, Full, n) == doctest::Approx(0.8 * 0.6 * wf / wh));
        CHECK(s.switch_rate(Open, Full, n) == 0.0);
        CHECK(s.absorb(Half, n) == 0.0);
        CHECK(s.absorb(Open, n) > 0);
    }
    CHECK(s.up(Open, s.nMax) == 0.0);
    CHECK(s.down(Half, 0) == 0.0);
}

TEST_CASE("neutral survival closed forms") {
    const auto ts = grid(0.0, 5.0, 0.05);
    for (auto [B, b0] : {std::pair{1.0, 0.5}, {2.0, 0.3}, {0.4, 0.8}}) {
        const ModelParams p = ModelParams::two_type(10, B, b0, 0.0);
        const double b1 = 1 - b0;
        for (const SurvivalTable& tab : {dist_survival(DistChainSpec::limit(p, 4), ts),
                                         dist_survival(DistChainSpec::finite(p), ts)}) {
            for (std::size_t k = 0; k < ts.size(); ++k) {
                const double t = ts[k];
                CHECK(std::abs(tab.f[k](Open, 0) - open_oracle(B, b0, b1, t)) < 1e-10);
                CHECK(std::abs(tab.f[k](Full, 0) - full_oracle(B, b0, b1, t)) < 1e-10);
                CHECK(std::abs(tab.f[k](Half, 0) - half_oracle(B, t)) < 1e-10);
                CHECK(std::abs(tab.pf[k](0) - std::exp(-t)) < 1e-10);
                for (int y : {Open, Full, Half})
                    CHECK(std::abs(closed_form_f(p, DistKind(y), t) - tab.f[k](y, 0)) < 1e-10);
                if (t > 0) {
                    CHECK(std::max(tab.f[k](Open, 0), tab.f[k](Full, 0)) < std::exp(-t));
                    CHECK(std::exp(-t) < tab.f[k](Half, 0));
                }
            }
        }
    }
    CHECK_THROWS_AS(closed_form_f(ModelParams::two_type(3, 1, 0.5, 1.0), Open, 1.0), ValidationError);
}

TEST_CASE("large mutation rates recover the exponential law") {
    const auto ts = grid(0.1, 2.0, 0.1);
    std::array<double, 3> prev{1, 1, 1};
    for (double B : {10.0, 100.0, 1000.0}) {
        const SurvivalTable tab = dist_survival(DistChainSpec::limit(ModelParams::two_type(5, B, 0.3, 0.0), 2), ts);
        std::array<double, 3> dev{0, 0, 0};
        for (std::size_t k = 0; k < ts.size(); ++k)
            for (int y = 0; y < 3; ++y) dev[y] = std::max(dev[y], std::abs(tab.f[k](y, 0) - std::exp(-ts[k])));
        for (int y = 0; y < 3; ++y) {
            CHECK(dev[y] < prev[y]);
            CHECK(dev[y] < 2.0 / B);
        }
        prev = dev;
    }
}

TEST_CASE("Taylor coefficients at zero") {
    for (double S : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const ModelParams p = ModelParams::two_type(5, 0.9, 0.4, S);
        const DistChainSpec spec = DistChainSpec::limit(p, 12);
        const TaylorCoeffs c = dist_taylor_coeffs(spec);
        const MixedMomentTable E = wf_mixed_moments(p, 6);
        CHECK(c.pf[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.pf[1] == doctest::Approx(-1.0).epsilon(1e-10));
        CHECK(c.pf[2] == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(c.pf[3] == doctest::Approx(-(1 + 2 * S * S * E(1, 1))).epsilon(1e-9));
        CHECK(c.f[Open][1] == doctest::Approx(-E(0, 1) / E(0, 2)).epsilon(1e-10));
        CHECK(c.f[Full][1] == doctest::Approx(-E(1, 0) / E(2, 0)).epsilon(1e-10));
        CHECK(std::abs(c.f[Half][1]) < 1e-10);
    }
    CHECK_THROWS_AS(dist_taylor_coeffs(DistChainSpec::limit(ModelParams::two_type(5, 1, 0.4, 1), 3)), ValidationError);
}

TEST_CASE("near zero, selection makes the distance smaller") {
    for (double S : {0.5, 1.0, 2.0, 4.0}) {
        const ModelParams p = ModelParams::two_type(5, 1.0, 0.4, S);
        const SurvivalTable tab = dist_survival_limit(p, {0.01, 0.02, 0.05});
        for (std::size_t k = 0; k < tab.t.size(); ++k) {
            const double e = std::exp(-tab.t[k]);
            CHECK(tab.pf[k](0) < e);
            CHECK(std::max(tab.f[k](Open, 0), tab.f[k](Full, 0)) < e);
            CHECK(e < tab.f[k](Half, 0));
        }
    }
}

TEST_CASE("same-type slopes are not ordered by fitness") {
    // type 1 is fitter, yet the type-0 pair loses mass faster at t = 0 for this kernel
    const ModelParams p = ModelParams::two_type(5, 1.0, 0.4, 1.0);
    const TaylorCoeffs c = dist_taylor_coeffs(DistChainSpec::limit(p, 12));
    CHECK(c.f[Open][1] < c.f[Full][1]);
    const ModelParams q = ModelParams::two_type(5, 1.0, 0.9, 1.0);
    const TaylorCoeffs d = dist_taylor_coeffs(DistChainSpec::limit(q, 12));
    CHECK(d.f[Open][1] > d.f[Full][1]);
}

TEST_CASE("distance ODEs hold along the survival table") {
    for (double S : {0.0, 1.0, 2.0}) {
        const ModelParams p = ModelParams::two_type(12, 0.7, 0.45, S);
        const auto ts = grid(0.0, 3.0, 0.25);
        const DistChainSpec lim = DistChainSpec::limit(p, 14);
        CHECK(lemma_ode_residual(lim, dist_survival(lim, ts)).max() < 1e-10);
        if (S == 0) {
            // the finite chain satisfies the same equations only without selection
            const DistChainSpec fin = DistChainSpec::finite(p);
            CHECK(lemma_ode_residual(fin, dist_survival(fin, ts)).max() < 1e-10);
        }
    }
}

TEST_CASE("limit survival converges under truncation doubling") {
    const ModelParams p = ModelParams::two_type(5, 1.0, 0.4, 2.0);
    const SurvivalTable tab = dist_survival_limit(p, {0.5, 1.0, 2.0});
    CHECK(tab.truncationChange < 1e-9);
    for (std::size_t k = 0; k < tab.t.size(); ++k) {
        CHECK(tab.f[k].minCoeff() >= 0);
        CHECK(tab.f[k].maxCoeff() <= 1);
        if (k) CHECK(tab.pf[k](0) < tab.pf[k - 1](0));
    }
    CHECK_THROWS_AS(dist_survival_limit(p, {1.0}, 2, 4, 1e-300), NumericalError);
    CHECK_THROWS_AS(dist_survival(DistChainSpec::limit(p, 4), {1.0, 0.5}), ValidationError);
}

TEST_CASE("finite distance chain approaches the limit chain") {
    const std::vector<double> ts{0.5, 1.0};
    const ModelParams base = ModelParams::two_type(10, 1.0, 0.4, 1.5);
    const SurvivalTable lim = dist_survival_limit(base, ts);
    double last = 1;
    for (int N : {10, 40, 160}) {
        ModelParams p = base;
        p.N = N;
        const SurvivalTable fin = dist_survival(DistChainSpec::finite(p), ts);
        double gap = 0;
        for (std::size_t k = 0; k < ts.size(); ++k)
            gap = std::max(gap, (fin.f[k].col(0) - lim.f[k].col(0)).cwiseAbs().maxCoeff());
        CHECK(gap < last);
        last = gap;
    }
    CHECK(last < 0.01);
}

TEST_CASE("CAT equilibrium without selection is the mutation law") {
    for (double b0 : {0.2, 0.5, 0.85}) {
        for (int N : {5, 50}) {
            const CatEquilibrium e = cat_equilibrium(CatChainSpec::finite(ModelParams::two_type(N, 1.3, b0, 0.0)));
            CHECK(std::abs(e.marginal(0) - b0) < 1e-10);
            CHECK(std::abs(e.marginal(1) - (1 - b0)) < 1e-10);
        }
        const CatEquilibrium e = cat_equilibrium_limit(ModelParams::two_type(5, 1.3, b0, 0.0));
        CHECK(std::abs(e.marginal(0) - b0) < 1e-10);
    }
}

TEST_CASE("CAT equilibrium against a long chain run") {
    const CatChainSpec spec = CatChainSpec::finite(ModelParams::two_type(10, 0.8, 0.5, 2.0));
    const CatEquilibrium e = cat_equilibrium(spec);
    CHECK(e.pi.sum() == doctest::Approx(1.0));
    CHECK(e.marginal(1) > 0.5);  // selection favours type 1

    Rng rng(51, 0);
    int u = 0, n = 0;
    const int batches = 50;
    const long jumps = 40000;
    std::vector<double> est;
    for (int b = 0; b < batches; ++b) {
        double time1 = 0, total = 0;
        for (long k = 0; k < jumps; ++k) {
            const std::array<double, 3> r{spec.up(u, n), spec.down(u, n), spec.flip(u, n)};
            const double out = r[0] + r[1] + r[2];
            const double hold = 1.0 / out;  // expected holding time lowers the variance
            total += hold;
            if (u == 1) time1 += hold;
            switch (rng.categorical(r, out)) {
                case 0: ++n; break;
                case 1: --n; break;
                default: u = 1 - u; break;
            }
        }
        est.push_back(time1 / total);
    }
    double m = 0, ss = 0;
    for (double x : est) m += x;
    m /= batches;
    for (double x : est) ss += (x - m) * (x - m);
    const double se = std::sqrt(ss / (batches - 1) / batches);
    CHECK(std::abs(m - e.marginal(1)) < 3 * se);
}

TEST_CASE("CAT limit chain") {
    const ModelParams p = ModelParams::two_type(5, 1.0, 0.5, 2.0);
    const CatEquilibrium lim = cat_equilibrium_limit(p);
    CHECK(lim.topMass < 1e-10);
    double last = 1;
    for (int N : {10, 40, 160}) {
        ModelParams q = p;
        q.N = N;
        const double gap = std::abs(cat_equilibrium(CatChainSpec::finite(q)).marginal(1) - lim.marginal(1));
        CHECK(gap < last);
        last = gap;
    }
    CHECK(last < 0.01);
    const CatEquilibrium fh = cat_equilibrium_limit(p, 16, 1024, 1e-10, true);
    CHECK(fh.marginal.sum() == doctest::Approx(1.0));
    CHECK(std::abs(fh.marginal(1) - lim.marginal(1)) > 1e-6);
    CHECK_THROWS_AS(cat_equilibrium_limit(p, 2, 2, 1e-300), NumericalError);
}

TEST_CASE("reduced chains against the transformed backward process") {
    for (int N : {3, 4})
        for (double S : {0.0, 1.0}) {
            const ModelParams p = ModelParams::two_type(N, 0.9, 0.35, S);
            const auto cat = cat_chain_vs_bp(p, {0.5, 1.0});
            CHECK(cat.maxGap < 1e-9);
            const auto dist = dist_chain_vs_bp(p, {0.5, 1.0});
            CHECK(dist.maxGap < 1e-9);
            CHECK(dist.bpStates > 0);
        }
}

TEST_CASE("reduced chains reject unsupported models") {
    ModelParams three = ModelParams::neutral(4, 3, 1.0);
    CHECK_THROWS_AS(CatChainSpec::limit(three, 4), ValidationError);
    ModelParams rows = ModelParams::two_type(4, 1.0, 0.5, 0.0);
    rows.b << 0.7, 0.3, 0.4, 0.6;
    CHECK_THROWS_AS(CatChainSpec::finite(rows), ValidationError);
    CHECK_THROWS_AS(DistChainSpec::limit(ModelParams::two_type(4, 0.0, 0.5, 0.0), 4), ValidationError);
    CHECK_THROWS_AS(DistChainSpec::limit(ModelParams::two_type(4, 1.0, 1.0, 0.0), 4), ValidationError);
    CHECK_THROWS_AS(DistChainSpec::limit(ModelParams::two_type(4, 1.0, 0.5, 0.0), 0), ValidationError);
    CHECK_THROWS_AS(DistChainSpec::finite(ModelParams::two_type(1, 1.0, 0.5, 0.0)), ValidationError);
    CHECK(std::string(mode_name(ChainMode::Limit)) == "limit");
}
