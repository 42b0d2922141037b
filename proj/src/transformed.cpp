#include "moran/transformed.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include "moran/parallel.hpp"

namespace moran {

StationaryPotential::StationaryPotential(const ModelParams& p, Eigen::VectorXd configLaw)
    : N_(p.N), d_(p.d), law_(std::move(configLaw)) {}

double StationaryPotential::value(double, const BpState& s) const {
    BpState c = s;
    c.canonicalize();
    const std::string key = c.key();
    {
        std::shared_lock lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    const double v = expected_duality(law_, N_, d_, c);
    std::unique_lock lock(mutex_);
    cache_.emplace(key, v);
    return v;
}

double StationaryPotential::horizon() const { return std::numeric_limits<double>::infinity(); }

std::pair<double, double> StationaryPotential::bounds(const BpState& s) const {
    const double v = value(0, s);
    return {v, v};
}

TimeSpacePotential::TimeSpacePotential(const ModelParams& p, const Eigen::VectorXd& muStar, double T, double gridStep)
    : N_(p.N), d_(p.d), T_(T) {
    if (!(T > 0)) throw ValidationError("time-space potential: horizon must be positive");
    const TypeChain tc = build_type_generator(p);
    if (muStar.size() != tc.size) throw ValidationError("time-space potential: initial law has the wrong length");
    const auto Gt = tc.gen.transposed();
    M_ = std::max(1, static_cast<int>(std::ceil(T / gridStep)));
    step_ = T / M_;
    law_.resize(tc.size, M_ + 1);
    dlaw_.resize(tc.size, M_ + 1);
    law_.col(0) = muStar;
    for (int k = 0; k < M_; ++k) law_.col(k + 1) = expm_apply<double>(Gt, law_.col(k), step_);
    for (int k = 0; k <= M_; ++k) dlaw_.col(k) = Gt.Q * law_.col(k);
    // |d/ds E[H(X_s)]| = |E[L H(X_s)]| <= 2 max exit rate since 0 <= H <= 1
    lipschitz_ = 2.0 * (-Eigen::VectorXd(tc.gen.Q.diagonal())).maxCoeff();
}

const TimeSpacePotential::Nodes& TimeSpacePotential::nodes(const BpState& s) const {
    BpState c = s;
    c.canonicalize();
    const std::string key = c.key();
    {
        std::shared_lock lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    const auto constraints = site_constraints(c);
    Eigen::VectorXd H(law_.rows());
    for (long x = 0; x < law_.rows(); ++x) {
        long y = x;
        bool ok = true;
        for (int i = 0; i < N_ && ok; ++i, y /= d_) ok = contains(constraints[i], static_cast<Type>(y % d_));
        H(x) = ok ? 1.0 : 0.0;
    }
    Nodes n;
    n.value = law_.transpose() * H;
    n.slope = dlaw_.transpose() * H;
    const double slack = lipschitz_ * step_;
    n.lo = n.value.minCoeff() - slack;
    n.hi = n.value.maxCoeff() + slack;
    std::unique_lock lock(mutex_);
    return cache_.emplace(key, std::move(n)).first->second;
}

double TimeSpacePotential::value(double t, const BpState& s) const {
    if (t < 0 || t > T_) throw ValidationError("time-space potential evaluated outside [0, T]");
    const Nodes& n = nodes(s);
    const double x = (T_ - t) / step_;
    const int k = std::min(M_ - 1, std::max(0, static_cast<int>(std::floor(x))));
    const double u = x - k;
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    return h00 * n.value(k) + h10 * step_ * n.slope(k) + h01 * n.value(k + 1) + h11 * step_ * n.slope(k + 1);
}

std::pair<double, double> TimeSpacePotential::bounds(const BpState& s) const {
    const Nodes& n = nodes(s);
    if (!(n.lo > 0)) throw NumericalError("time-space potential: lower bound not positive; refine the grid");
    return {n.lo, n.hi};
}

std::vector<BpTransition> transformed_rates(const HTransformedKernel& k, const BpState& s, double t) {
    if (!k.potential->homogeneous() && t > k.potential->horizon())
        throw ValidationError("transformed_rates: t beyond the horizon");
    const double h0 = k.potential->value(t, s);
    if (!(h0 > 0)) throw NumericalError("h positivity violated");
    auto tr = enumerate_transitions(s, k.params);
    for (auto& x : tr) {
        const double h1 = k.potential->value(t, x.target);
        if (!(h1 > 0)) throw NumericalError("h positivity violated");
        x.rate *= h1 / h0;
    }
    return tr;
}

GeneratorMatrix<double> transformed_generator(const BpChain& chain, const Eigen::VectorXd& h) {
    std::vector<Eigen::Triplet<double>> trip;
    const auto& Q = chain.gen.Q;
    for (int i = 0; i < Q.outerSize(); ++i)
        for (GeneratorMatrix<double>::Sparse::InnerIterator it(Q, i); it; ++it)
            if (it.col() != i && it.value() > 0) trip.emplace_back(i, it.col(), it.value() * h(it.col()) / h(i));
    return GeneratorMatrix<double>::from_rates(Q.rows(), std::move(trip));
}

ConditionedSample sample_conditioned_lines(const ModelParams& p, const std::vector<Site>& J,
                                           const std::vector<Type>& xiStar, double T, const Potential& potential,
                                           Rng& rng) {
    if (!(T > 0)) throw ValidationError("sample_conditioned_lines: horizon must be positive");
    if (!potential.homogeneous() && T > potential.horizon() + 1e-12)
        throw ValidationError("sample_conditioned_lines: horizon exceeds the potential's horizon");
    BpState cur = canonical_start(p, J, xiStar);
    ConditionedSample out;
    out.path = {cur, {}, T};
    double t = 0;
    std::vector<double> w;
    if (potential.homogeneous()) {
        while (true) {
            const double h0 = potential.value(0, cur);
            if (!(h0 > 0)) throw NumericalError("h positivity violated");
            auto tr = enumerate_transitions(cur, p);
            w.clear();
            double total = 0;
            for (const auto& x : tr) {
                w.push_back(x.rate * potential.value(0, x.target) / h0);
                total += w.back();
            }
            if (total <= 0) break;
            t += rng.exponential(total);
            if (t > T) break;
            auto& chosen = tr[rng.categorical(w, total)];
            cur = std::move(chosen.target);
            out.path.events.push_back({t, chosen.kind, cur});
        }
    } else {
        // thinning: propose with rate K * hi(target)/lo(source), accept with the
        // ratio of the actual transformed rate to the proposal rate
        while (true) {
            const double lo = potential.bounds(cur).first;
            auto tr = enumerate_transitions(cur, p);
            w.clear();
            double total = 0;
            for (const auto& x : tr) {
                w.push_back(x.rate * potential.bounds(x.target).second / lo);
                total += w.back();
            }
            if (total <= 0) break;
            bool moved = false;
            while (!moved) {
                t += rng.exponential(total);
                if (t >= T) break;
                const int k = rng.categorical(w, total);
                const double h0 = potential.value(t, cur);
                if (!(h0 > 0)) throw NumericalError("h positivity violated");
                const double actual = tr[k].rate * potential.value(t, tr[k].target) / h0;
                if (actual > w[k] * (1 + 1e-9)) throw NumericalError("thinning bound violated");
                if (rng.uniform() * w[k] < actual) {
                    cur = std::move(tr[k].target);
                    out.path.events.push_back({t, tr[k].kind, cur});
                    moved = true;
                }
            }
            if (!moved) break;
        }
    }
    out.lines = reverse_to_lines(out.path);
    return out;
}

double window_functional(const std::vector<CadlagPath<Mark>>& lines, const std::vector<TypeWindow>& F) {
    double v = 1.0;
    for (const auto& w : F) {
        const Type u = w.type;
        v *= lines.at(w.member).occupation(w.from, w.to, [u](const Mark& m) { return u < 0 || m.type == u; });
    }
    return v;
}

namespace {

std::pair<double, double> mean_se(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double m = 0;
    for (double v : x) m += v;
    m /= n;
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    const double var = n > 1 ? ss / (n - 1) : 0.0;
    return {m, std::sqrt(var / n)};
}

}  // namespace

FunctionalCheck conditioned_functional_check(const ModelParams& p, const std::vector<Site>& J,
                                             const std::vector<Type>& xiStar, double T,
                                             const Eigen::VectorXd& muStar, const std::vector<TypeWindow>& F,
                                             long replicates, std::uint64_t seed, int workers) {
    validate_params(p);
    for (const auto& w : F)
        if (w.from < -T || w.to > 0 || w.from > w.to || w.member < 0 || w.member >= static_cast<int>(J.size()))
            throw ValidationError("functional window outside [-T,0] or bad member");
    const TimeSpacePotential potential(p, muStar, T);

    std::vector<double> fwd(replicates), bwd(replicates);
    std::vector<char> hit(replicates, 0);
    parallel_for(replicates, workers, [&](long k) {
        Rng rng(seed, 2 * k);
        const long x = rng.categorical(muStar, muStar.sum());
        std::vector<Type> init(p.N);
        long y = x;
        for (int i = 0; i < p.N; ++i, y /= p.d) init[i] = static_cast<Type>(y % p.d);
        LineageForest f(p, -T, init);
        run_until(f, p, 0.0, rng);
        bool ok = true;
        for (std::size_t q = 0; q < J.size() && ok; ++q) ok = f.type(J[q]) == xiStar[q];
        if (!ok) return;
        hit[k] = 1;
        std::vector<CadlagPath<Mark>> lines;
        for (Site j : J) lines.push_back(f.line(j));
        fwd[k] = window_functional(lines, F);
    });
    parallel_for(replicates, workers, [&](long k) {
        Rng rng(seed, 2 * k + 1);
        bwd[k] = window_functional(sample_conditioned_lines(p, J, xiStar, T, potential, rng).lines, F);
    });
    std::vector<double> accepted;
    for (long k = 0; k < replicates; ++k)
        if (hit[k]) accepted.push_back(fwd[k]);
    if (accepted.size() < 2) throw NumericalError("conditioning event has zero estimated probability");
    FunctionalCheck r;
    r.forwardAccepted = static_cast<long>(accepted.size());
    std::tie(r.forwardMean, r.forwardSe) = mean_se(accepted);
    std::tie(r.backwardMean, r.backwardSe) = mean_se(bwd);
    r.gap = std::abs(r.forwardMean - r.backwardMean);
    r.pooledSe = std::sqrt(r.forwardSe * r.forwardSe + r.backwardSe * r.backwardSe);
    return r;
}

}  // namespace moran
