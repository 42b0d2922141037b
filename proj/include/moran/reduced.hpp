#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "moran/generator.hpp"
#include "moran/model.hpp"

namespace moran {

// FiniteN uses P_N(1^a,0^m) from the finite stationary law, Limit uses the
// Wright-Fisher moments E[1^a,0^m] and drops the 1/N factors.
enum class ChainMode { FiniteN, Limit };

const char* mode_name(ChainMode m);

// Two-type chain of (mark of the surviving lineage u, number n of {0}-active sites).
struct CatChainSpec {
    ChainMode mode = ChainMode::FiniteN;
    ModelParams params;
    MixedMomentTable moments;
    int nMax = 0;                   // FiniteN: N-1
    bool fearnheadVariant = false;  // drop the factor n+1 in the up-rate (comparison only)

    static CatChainSpec finite(const ModelParams& p, const StationaryTypeLaw& law);
    static CatChainSpec finite(const ModelParams& p);
    static CatChainSpec limit(const ModelParams& p, int nMax);

    int levels() const { return nMax + 1; }
    int index(int u, int n) const { return u * levels() + n; }
    double up(int u, int n) const;    // (u,n) -> (u,n+1)
    double down(int u, int n) const;  // (u,n) -> (u,n-1)
    double flip(int u, int n) const;  // (u,n) -> (1-u,n)

    GeneratorMatrix<double> generator() const;
};

struct CatEquilibrium {
    Eigen::VectorXd pi;        // indexed by CatChainSpec::index
    Eigen::Vector2d marginal;  // law of the mark
    int nMax = 0;
    double topMass = 0;        // mass on level nMax
};

CatEquilibrium cat_equilibrium(const CatChainSpec& spec);
// Limit chain with nMax doubled from nStart until the top-level mass is below tailTol.
CatEquilibrium cat_equilibrium_limit(const ModelParams& p, int nStart = 16, int nCap = 1024, double tailTol = 1e-10,
                                     bool fearnheadVariant = false);

struct ChainVsBpReport {
    int bpStates = 0;
    double maxGap = 0;
    std::vector<double> t;
    std::vector<double> gap;  // max over starts at each t
};

// Finite-horizon law of the finite CAT chain against the lumped transformed BP with J = {0}.
ChainVsBpReport cat_chain_vs_bp(const ModelParams& p, const std::vector<double>& ts);

// Distance chain on {open, full, half} x levels plus the absorbing state. Open:
// both lineages carry type 0; full: both type 1; half: mixed.
enum DistKind { Open = 0, Full = 1, Half = 2 };

struct DistChainSpec {
    ChainMode mode = ChainMode::FiniteN;
    ModelParams params;
    MixedMomentTable moments;
    int nMax = 0;  // FiniteN: N-2

    static DistChainSpec finite(const ModelParams& p, const StationaryTypeLaw& law);
    static DistChainSpec finite(const ModelParams& p);
    static DistChainSpec limit(const ModelParams& p, int nMax);

    int levels() const { return nMax + 1; }
    int index(int y, int n) const { return y * levels() + n; }
    // Stationary weight of state (y,n): E[0^{n+2}], E[1^2,0^n], E[1,0^{n+1}].
    double weight(int y, int n) const;
    double up(int y, int n) const;
    double down(int y, int n) const;
    double switch_rate(int y, int z, int n) const;  // (y,n) -> (z,n), y != z
    double absorb(int y, int n) const;

    // Transient part of the generator; absorption enters as killing.
    GeneratorMatrix<double> generator() const;
};

struct SurvivalTable {
    std::vector<double> t;
    int levels = 0;
    std::vector<Eigen::MatrixXd> f;          // f[k](y, n) at t[k]
    std::vector<Eigen::VectorXd> pf;         // pf[k](n)
    std::vector<Eigen::VectorXd> remainder;  // R_t(n), n = 0..levels-2
    double truncationChange = 0;             // Limit: last change of the level-0 values under doubling
};

SurvivalTable dist_survival(const DistChainSpec& spec, const std::vector<double>& tGrid);
// Limit chain with nMax doubled until the level-0 survival values change by < tol.
SurvivalTable dist_survival_limit(const ModelParams& p, const std::vector<double>& tGrid, int nStart = 16,
                                  int nCap = 512, double tol = 1e-9);

struct TaylorCoeffs {
    std::vector<double> pf;               // pf^{(k)}(0), k = 0..order
    std::array<std::vector<double>, 3> f;  // d^k/dt^k f_t(y,0) at 0
};

TaylorCoeffs dist_taylor_coeffs(const DistChainSpec& spec, int order = 3);

struct LemmaResidual {
    double open = 0, full = 0, half = 0, pf = 0;
    double max() const;
};

// Both sides of the distance-chain ODEs on levels n < levels-1 at every grid time, with the
// time derivative taken as the generator applied to f.
LemmaResidual lemma_ode_residual(const DistChainSpec& spec, const SurvivalTable& table);

// Survival of the finite distance chain against the coalescence time of the
// transformed BP with J = {0,1}.
ChainVsBpReport dist_chain_vs_bp(const ModelParams& p, const std::vector<double>& ts);

// Closed forms for S = 0.
double closed_form_f(const ModelParams& p, DistKind y, double t);

}  // namespace moran
