#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moran/errors.hpp"

namespace moran {

using Type = int;
using Site = int;

struct ModelParams {
    int N = 1;
    int d = 2;
    double B = 0.0;
    Eigen::MatrixXd b;    // d x d, row-stochastic, b(u,v)
    double S = 0.0;
    Eigen::VectorXd chi;  // fitness levels, chi(0)=0 < ... < chi(d-1)=1

    // Resampling rate for src -> dst when src carries type u and dst type v.
    double resampling_rate(Type u, Type v) const { return 0.5 + S / (2.0 * N) * (chi(u) - chi(v)); }
    double sel() const { return S / (2.0 * N); }

    // Two-type shorthand: b(.,0) and b(.,1) for kernels with identical rows.
    double b0() const { return b(1, 0); }
    double b1() const { return b(0, 1); }
    bool identical_rows() const;

    static ModelParams two_type(int N, double B, double b0, double S);
    static ModelParams neutral(int N, int d, double B);  // uniform b, linear chi, S=0
};

ModelParams validate_params(const ModelParams& p);

// Stationary law of the type-count chain: weights over count vectors.
struct StationaryTypeLaw {
    int N = 0;
    int d = 0;
    std::vector<std::vector<int>> counts;  // counts[k][u] = number of sites of type u
    Eigen::VectorXd weights;

    int index_of(const std::vector<int>& c) const;
    // Probability of one particular configuration x in K^I.
    double configuration_probability(const std::vector<Type>& x) const;
    // Full law on K^I, configurations indexed base d with site 0 least significant.
    Eigen::VectorXd configuration_law() const;
};

// Law on K^I of independent sites with common law nu, same indexing as configuration_law.
Eigen::VectorXd product_law(int N, const Eigen::VectorXd& nu);

StationaryTypeLaw finite_stationary_law(const ModelParams& p, long cap = 100000);

// P_N(1^n, 0^m): probability that n given sites are type 1 and m others type 0.
double pn_probability(const StationaryTypeLaw& law, int n, int m);

struct MixedMomentTable {
    int maxOrder = 0;
    Eigen::MatrixXd E;  // E(n,m) = E[1^n 0^m], valid for n+m <= maxOrder; NaN where not computed

    double operator()(int n, int m) const;
};

// maxOnes >= 0 restricts the table to rows n <= maxOnes (the reduced chains only
// need n <= 2); other entries are left as NaN.
MixedMomentTable wf_mixed_moments(const ModelParams& p, int maxOrder, int maxOnes = -1);

// Table of P_N(1^n,0^m) for n+m <= N, same layout as MixedMomentTable.
MixedMomentTable pn_table(const StationaryTypeLaw& law);

// Unnormalized stationary density of the two-type diffusion, z = frequency of type 1.
double wf_density(const ModelParams& p, double z);

}  // namespace moran
