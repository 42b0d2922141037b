#include "moran/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "moran/quadrature.hpp"

namespace moran {

bool ModelParams::identical_rows() const {
    for (int u = 1; u < d; ++u)
        if ((b.row(u) - b.row(0)).cwiseAbs().maxCoeff() > 1e-12) return false;
    return true;
}

ModelParams ModelParams::two_type(int N, double B, double b0, double S) {
    ModelParams p;
    p.N = N;
    p.d = 2;
    p.B = B;
    p.b.resize(2, 2);
    p.b << b0, 1.0 - b0, b0, 1.0 - b0;
    p.S = S;
    p.chi = Eigen::Vector2d(0.0, 1.0);
    return p;
}

ModelParams ModelParams::neutral(int N, int d, double B) {
    ModelParams p;
    p.N = N;
    p.d = d;
    p.B = B;
    p.b = Eigen::MatrixXd::Constant(d, d, 1.0 / d);
    p.S = 0.0;
    p.chi = Eigen::VectorXd::LinSpaced(d, 0.0, 1.0);
    return p;
}

ModelParams validate_params(const ModelParams& p) {
    if (p.N < 1) throw ValidationError("population size N must be positive");
    if (p.d < 2 || p.d > 31) throw ValidationError("type count d must be in [2,31]");
    if (!(p.B >= 0) || !std::isfinite(p.B)) throw ValidationError("mutation rate B must be nonnegative");
    if (p.b.rows() != p.d || p.b.cols() != p.d) throw ValidationError("mutation matrix b must be d x d");
    for (int u = 0; u < p.d; ++u) {
        if (p.b.row(u).minCoeff() < 0) throw ValidationError("mutation matrix b has a negative entry");
        if (std::abs(p.b.row(u).sum() - 1.0) > 1e-12) {
            std::ostringstream os;
            os << "row not stochastic: row " << u << " of b sums to " << p.b.row(u).sum();
            throw ValidationError(os.str());
        }
    }
    if (p.chi.size() != p.d) throw ValidationError("chi must have d entries");
    if (p.chi(0) != 0.0 || p.chi(p.d - 1) != 1.0) throw ValidationError("chi must satisfy chi(0)=0 and chi(d-1)=1");
    for (int u = 1; u < p.d; ++u)
        if (!(p.chi(u) > p.chi(u - 1))) throw ValidationError("chi not increasing");
    if (!(p.S >= 0) || p.S > p.N) throw ValidationError("selection out of range: need 0 <= S <= N");
    return p;
}

namespace {

bool mutation_irreducible(const ModelParams& p) {
    for (int start = 0; start < p.d; ++start) {
        std::vector<char> seen(p.d, 0);
        std::vector<int> stack{start};
        seen[start] = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v = 0; v < p.d; ++v)
                if (!seen[v] && v != u && p.b(u, v) > 0) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
        }
        if (std::count(seen.begin(), seen.end(), 1) != p.d) return false;
    }
    return true;
}

double log_multinomial(int N, const std::vector<int>& c) {
    double r = std::lgamma(N + 1.0);
    for (int x : c) r -= std::lgamma(x + 1.0);
    return r;
}

void enumerate_compositions(int N, int d, std::vector<int>& cur, int pos, int left,
                            std::vector<std::vector<int>>& out) {
    if (pos == d - 1) {
        cur[pos] = left;
        out.push_back(cur);
        return;
    }
    for (int x = left; x >= 0; --x) {
        cur[pos] = x;
        enumerate_compositions(N, d, cur, pos + 1, left - x, out);
    }
}

}  // namespace

Eigen::VectorXd product_law(int N, const Eigen::VectorXd& nu) {
    const int d = static_cast<int>(nu.size());
    if (d < 2) throw ValidationError("single-site law needs at least two types");
    if (nu.minCoeff() < 0 || std::abs(nu.sum() - 1) > 1e-12) throw ValidationError("single-site law is not a probability vector");
    long size = 1;
    for (int i = 0; i < N; ++i) {
        size *= d;
        if (size > 10000000) throw ValidationError("exact solve infeasible: configuration space too large");
    }
    Eigen::VectorXd mu(size);
    for (long x = 0; x < size; ++x) {
        double w = 1;
        long y = x;
        for (int i = 0; i < N; ++i, y /= d) w *= nu(y % d);
        mu(x) = w;
    }
    return mu;
}

namespace {

StationaryTypeLaw two_type_law(const ModelParams& p) {
    const int N = p.N;
    StationaryTypeLaw law;
    law.N = N;
    law.d = 2;
    law.counts.resize(N + 1);
    for (int k = 0; k <= N; ++k) law.counts[k] = {N - k, k};
    // product form: pi(k+1)/pi(k) = up(k)/down(k+1), accumulated in log scale
    Eigen::VectorXd logw(N + 1);
    logw(0) = 0.0;
    const double sel = p.sel();
    for (int k = 0; k < N; ++k) {
        const double up = (N - k) * p.B * p.b(0, 1) + double(k) * (N - k) * (0.5 + sel);
        const double down = (k + 1) * p.B * p.b(1, 0) + double(k + 1) * (N - k - 1) * (0.5 - sel);
        logw(k + 1) = logw(k) + std::log(up) - std::log(down);
    }
    const double mx = logw.maxCoeff();
    law.weights = (logw.array() - mx).exp();
    law.weights /= law.weights.sum();
    return law;
}

StationaryTypeLaw general_law(const ModelParams& p, long cap) {
    StationaryTypeLaw law;
    law.N = p.N;
    law.d = p.d;
    // number of compositions = C(N+d-1, d-1)
    double count = 1;
    for (int j = 1; j < p.d; ++j) count = count * (p.N + j) / j;
    if (count > cap) throw NumericalError("exact solve infeasible: count-vector state space exceeds cap");
    std::vector<int> cur(p.d);
    enumerate_compositions(p.N, p.d, cur, 0, p.N, law.counts);
    const int n = static_cast<int>(law.counts.size());
    std::map<std::vector<int>, int> index;
    for (int k = 0; k < n; ++k) index[law.counts[k]] = k;

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd exit = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k) {
        const auto& c = law.counts[k];
        for (int u = 0; u < p.d; ++u) {
            if (c[u] == 0) continue;
            for (int v = 0; v < p.d; ++v) {
                if (v == u) continue;
                // one u-site becomes v: mutation u->v, or a v-site overwrites a u-site
                double rate = c[u] * p.B * p.b(u, v) + double(c[v]) * c[u] * p.resampling_rate(v, u);
                if (rate <= 0) continue;
                auto t = c;
                --t[u];
                ++t[v];
                trip.emplace_back(index[t], k, rate);  // transposed: column k feeds row target
                exit(k) += rate;
            }
        }
    }
    // Solve Q^T pi = 0 with the last equation replaced by sum(pi)=1.
    std::vector<Eigen::Triplet<double>> sys;
    for (const auto& t : trip)
        if (t.row() != n - 1) sys.push_back(t);
    for (int k = 0; k < n; ++k) {
        if (k != n - 1) sys.emplace_back(k, k, -exit(k));
        sys.emplace_back(n - 1, k, 1.0);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(sys.begin(), sys.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NumericalError("stationary solve failed: singular system");
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    law.weights = lu.solve(rhs);
    law.weights = law.weights.cwiseMax(0.0);
    law.weights /= law.weights.sum();
    return law;
}

}  // namespace

StationaryTypeLaw finite_stationary_law(const ModelParams& p, long cap) {
    validate_params(p);
    if (p.B <= 0) throw ValidationError("no unique stationary law: B = 0");
    if (!mutation_irreducible(p)) throw ValidationError("no unique stationary law: b not irreducible");
    return p.d == 2 ? two_type_law(p) : general_law(p, cap);
}

int StationaryTypeLaw::index_of(const std::vector<int>& c) const {
    if (d == 2) return c[1];
    auto it = std::find(counts.begin(), counts.end(), c);
    if (it == counts.end()) throw ValidationError("count vector not in state space");
    return static_cast<int>(it - counts.begin());
}

double StationaryTypeLaw::configuration_probability(const std::vector<Type>& x) const {
    std::vector<int> c(d, 0);
    for (Type u : x) ++c.at(u);
    return weights(index_of(c)) * std::exp(-log_multinomial(N, c));
}

Eigen::VectorXd StationaryTypeLaw::configuration_law() const {
    long size = 1;
    for (int i = 0; i < N; ++i) size *= d;
    std::vector<double> perCount(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        perCount[k] = weights(k) * std::exp(-log_multinomial(N, counts[k]));
    std::map<std::vector<int>, int> index;
    for (std::size_t k = 0; k < counts.size(); ++k) index[counts[k]] = static_cast<int>(k);
    Eigen::VectorXd out(size);
    std::vector<int> c(d);
    for (long x = 0; x < size; ++x) {
        std::fill(c.begin(), c.end(), 0);
        long y = x;
        for (int i = 0; i < N; ++i, y /= d) ++c[y % d];
        out(x) = perCount[index[c]];
    }
    return out;
}

double pn_probability(const StationaryTypeLaw& law, int n, int m) {
    if (law.d != 2) throw ValidationError("pn_probability is defined for two types");
    if (n < 0 || m < 0) throw ValidationError("negative sample size");
    const int N = law.N;
    if (n + m > N) throw ValidationError("sample larger than population");
    double total = 0;
    for (int k = 0; k <= N; ++k) {
        if (law.weights(k) == 0 || k < n || N - k < m) continue;
        double r = law.weights(k);
        for (int a = 0; a < n; ++a) r *= double(k - a) / (N - a);
        for (int c = 0; c < m; ++c) r *= double(N - k - c) / (N - n - c);
        total += r;
    }
    return total;
}

double MixedMomentTable::operator()(int n, int m) const {
    if (n < 0 || m < 0 || n + m > maxOrder || std::isnan(E(n, m))) {
        std::ostringstream os;
        os << "moment (" << n << "," << m << ") not in table of order " << maxOrder;
        throw ValidationError(os.str());
    }
    return E(n, m);
}

MixedMomentTable pn_table(const StationaryTypeLaw& law) {
    MixedMomentTable t;
    t.maxOrder = law.N;
    t.E = Eigen::MatrixXd::Zero(law.N + 1, law.N + 1);
    for (int n = 0; n <= law.N; ++n)
        for (int m = 0; n + m <= law.N; ++m) t.E(n, m) = pn_probability(law, n, m);
    return t;
}

double wf_density(const ModelParams& p, double z) {
    const double a = 2 * p.B * p.b1(), c = 2 * p.B * p.b0();
    return std::pow(z, a - 1) * std::pow(1 - z, c - 1) * std::exp(2 * p.S * (z - 1));
}

namespace {

// Log of the part of the integral below from the half next to z = 0 (or, when
// mirrored, next to z = 1 with A and C swapped). For A < 1 the substitution
// z = y^(1/A) removes the endpoint singularity. The integrand is shifted by its
// maximum on a grid and integrated piecewise so narrow peaks are resolved.
double log_half_integral(double A, double C, double S, bool mirrored) {
    const int pieces = 64;
    const bool subst = A < 1;
    const double hi = subst ? std::pow(0.5, A) : 0.5;
    auto logf = [&](double y) {
        const double z = subst ? std::pow(y, 1.0 / A) : y;
        const double x = mirrored ? 1 - z : z;
        const double v = (C - 1) * std::log1p(-z) + 2 * S * (x - 1);
        return subst ? v - std::log(A) : v + (A - 1) * std::log(z);
    };
    double shift = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 4 * pieces; ++k) shift = std::max(shift, logf(hi * k / (4 * pieces)));
    auto f = [&](double y) { return std::exp(logf(y) - shift); };
    // rounding in the shifted exponent sets a noise floor proportional to its size
    const double relTol = std::max(1e-13, 50 * std::numeric_limits<double>::epsilon() * (A + C + 2 * S));
    const double width = hi / pieces;
    double total = 0;
    for (int k = 0; k < pieces; ++k)
        total += integrate_adaptive<double>(f, k * width, (k + 1) * width, 1e-16 * width, relTol).value;
    return std::log(total) + shift;
}

// log of int_0^1 z^(A-1) (1-z)^(C-1) exp(2S(z-1)) dz, split at 1/2.
double log_beta_like_integral(double A, double C, double S) {
    const double l = log_half_integral(A, C, S, false);
    const double r = log_half_integral(C, A, S, true);
    const double m = std::max(l, r);
    return m + std::log(std::exp(l - m) + std::exp(r - m));
}

}  // namespace

MixedMomentTable wf_mixed_moments(const ModelParams& p, int maxOrder, int maxOnes) {
    if (p.d != 2) throw ValidationError("mixed moments require two types");
    if (maxOrder < 1) throw ValidationError("maxOrder must be at least 1");
    const double a = 2 * p.B * p.b1(), c = 2 * p.B * p.b0();
    if (!(a > 0) || !(c > 0)) throw ValidationError("density not normalizable: need B b0 > 0 and B b1 > 0");
    MixedMomentTable t;
    t.maxOrder = maxOrder;
    t.E = Eigen::MatrixXd::Constant(maxOrder + 1, maxOrder + 1, std::numeric_limits<double>::quiet_NaN());
    const double logZ = log_beta_like_integral(a, c, p.S);
    const int rows = maxOnes < 0 ? maxOrder : std::min(maxOnes, maxOrder);
    for (int n = 0; n <= rows; ++n)
        for (int m = 0; n + m <= maxOrder; ++m)
            t.E(n, m) = (n == 0 && m == 0) ? 1.0 : std::exp(log_beta_like_integral(n + a, m + c, p.S) - logZ);
    return t;
}

}  // namespace moran
