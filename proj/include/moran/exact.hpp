#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "moran/bp.hpp"
#include "moran/generator.hpp"
#include "moran/model.hpp"

namespace moran {

// Type process on K^I; configuration x has index sum_i x_i d^i.
struct TypeChain {
    int N = 0, d = 0;
    long size = 0;
    GeneratorMatrix<double> gen;

    std::vector<Type> config(long index) const;
    long index(const std::vector<Type>& x) const;
};

TypeChain build_type_generator(const ModelParams& p, long cap = 200000);

struct BpChain {
    std::vector<BpState> states;
    std::unordered_map<std::string, int> index;
    GeneratorMatrix<double> gen;  // fk = V when requested

    int find(const BpState& s) const;  // -1 if unreachable
};

BpChain build_bp_generator(const ModelParams& p, const std::vector<BpState>& starts, bool withV = true,
                           long cap = 200000);
// Closure of all canonical starts xi in K^J.
BpChain build_bp_generator(const ModelParams& p, const std::vector<Site>& J, bool withV = true,
                           long cap = 200000);

// x -> H*(x, s) over K^I.
Eigen::VectorXd duality_vector(const TypeChain& chain, const BpState& s);
// sum_x mu(x) H*(x, s) for a law mu on K^I.
double expected_duality(const Eigen::VectorXd& mu, int N, int d, const BpState& s);

struct DualityReport {
    ModelParams params;
    double t = 0, lhs = 0, rhs = 0, absGap = 0;
};

std::vector<DualityReport> check_duality(const ModelParams& p, const Eigen::VectorXd& muStar, const BpState& etaBar,
                                         const std::vector<double>& ts);
DualityReport check_duality(const ModelParams& p, const Eigen::VectorXd& muStar, const BpState& etaBar, double t);

struct PotentialTable {
    BpChain chain;
    Eigen::VectorXd h;
    double residual = 0;  // sup norm of (Lbar + V) h

    double at(const BpState& s) const;
};

PotentialTable compute_h(const ModelParams& p, const std::vector<Site>& J, const StationaryTypeLaw& law);
PotentialTable compute_h(const ModelParams& p, const std::vector<BpState>& starts, const Eigen::VectorXd& configLaw);

double compute_hT(const ModelParams& p, const Eigen::VectorXd& muStar, double T, double t, const BpState& etaBar);

}  // namespace moran
