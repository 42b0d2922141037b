#pragma once

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "moran/bp.hpp"
#include "moran/exact.hpp"

namespace moran {

// Positive function of (BP time, BP state) used to reweight BP rates.
class Potential {
public:
    virtual ~Potential() = default;
    virtual double value(double t, const BpState& s) const = 0;
    virtual bool homogeneous() const = 0;
    virtual double horizon() const = 0;  // infinity for homogeneous potentials
    // Bounds of t -> value(t, s) over [0, horizon].
    virtual std::pair<double, double> bounds(const BpState& s) const = 0;
};

// h(s) = E[H*(X, s)] for X distributed as a fixed law on K^I.
class StationaryPotential : public Potential {
public:
    StationaryPotential(const ModelParams& p, Eigen::VectorXd configLaw);
    double value(double, const BpState& s) const override;
    bool homogeneous() const override { return true; }
    double horizon() const override;
    std::pair<double, double> bounds(const BpState& s) const override;

private:
    int N_, d_;
    Eigen::VectorXd law_;
    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<std::string, double> cache_;
};

// hT(t, s) = E_mu[H*(X_{T-t}, s)]. The type law is tabulated on a grid in T-t
// (step <= gridStep) together with its time derivative; values in between use
// cubic Hermite interpolation. Per-state node values are memoized.
class TimeSpacePotential : public Potential {
public:
    TimeSpacePotential(const ModelParams& p, const Eigen::VectorXd& muStar, double T, double gridStep = 1e-3);
    double value(double t, const BpState& s) const override;
    bool homogeneous() const override { return false; }
    double horizon() const override { return T_; }
    std::pair<double, double> bounds(const BpState& s) const override;

private:
    struct Nodes {
        Eigen::VectorXd value, slope;
        double lo, hi;
    };
    const Nodes& nodes(const BpState& s) const;

    int N_, d_;
    double T_, step_;
    int M_;
    double lipschitz_;            // bound on |d/dt hT|
    Eigen::MatrixXd law_, dlaw_;  // column k: law of X at time k*step_ and its derivative
    mutable std::shared_mutex mutex_;
    mutable std::unordered_map<std::string, Nodes> cache_;
};

struct HTransformedKernel {
    ModelParams params;
    std::shared_ptr<const Potential> potential;
};

// Base transitions with rates multiplied by h(t, target)/h(t, source).
std::vector<BpTransition> transformed_rates(const HTransformedKernel& k, const BpState& s, double t);

// Generator of the homogeneous transformed chain on a prebuilt BP state space.
GeneratorMatrix<double> transformed_generator(const BpChain& chain, const Eigen::VectorXd& h);

struct ConditionedSample {
    BpPath path;
    std::vector<CadlagPath<Mark>> lines;  // on [-T, 0], one per member of J
};

ConditionedSample sample_conditioned_lines(const ModelParams& p, const std::vector<Site>& J,
                                           const std::vector<Type>& xiStar, double T, const Potential& potential,
                                           Rng& rng);

// Window functional: integral over [from,to] of 1{type of line `member` = type}.
struct TypeWindow {
    int member = 0;  // position in J
    double from = 0, to = 0;
    Type type = 0;  // negative: any type
};

double window_functional(const std::vector<CadlagPath<Mark>>& lines, const std::vector<TypeWindow>& F);

struct FunctionalCheck {
    double forwardMean = 0, forwardSe = 0;
    double backwardMean = 0, backwardSe = 0;
    long forwardAccepted = 0;
    double gap = 0, pooledSe = 0;
};

FunctionalCheck conditioned_functional_check(const ModelParams& p, const std::vector<Site>& J,
                                             const std::vector<Type>& xiStar, double T,
                                             const Eigen::VectorXd& muStar, const std::vector<TypeWindow>& F,
                                             long replicates, std::uint64_t seed, int workers = 1);

}  // namespace moran
