#include "moran/forest.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>

namespace moran {

LineageForest::LineageForest(const ModelParams& p, double c, const std::vector<Type>& initialTypes)
    : origin_(c), now_(c) {
    if (static_cast<int>(initialTypes.size()) != p.N)
        throw ValidationError("initial types: length does not match N");
    byType_.assign(p.d, {});
    posInType_.assign(p.N, -1);
    for (Site i = 0; i < p.N; ++i) {
        const Type u = initialTypes[i];
        if (u < 0 || u >= p.d) throw ValidationError("initial types: type out of range");
        nodes_.push_back({c, u, i, -1, {}});
        heads_.push_back(i);
        headType_.push_back(u);
        index_add(i, u);
    }
}

void LineageForest::index_add(Site i, Type u) {
    posInType_[i] = static_cast<int>(byType_[u].size());
    byType_[u].push_back(i);
}

void LineageForest::index_remove(Site i, Type u) {
    auto& v = byType_[u];
    const int pos = posInType_[i];
    v[pos] = v.back();
    posInType_[v[pos]] = pos;
    v.pop_back();
}

int LineageForest::ancestor_node(Site i, double s) const {
    if (s < origin_) throw ValidationError("Time before the forest origin");
    int n = heads_.at(i);
    while (nodes_[n].birth > s) n = nodes_[n].parent;
    return n;
}

Mark LineageForest::line_value(Site i, double s) const {
    const int n = ancestor_node(i, std::min(s, now_));
    return {nodes_[n].type_at(s), nodes_[n].site};
}

CadlagPath<Mark> LineageForest::line(Site i) const {
    std::vector<int> chain;
    for (int n = heads_.at(i); n >= 0; n = nodes_[n].parent) chain.push_back(n);
    std::reverse(chain.begin(), chain.end());
    CadlagPath<Mark> path;
    path.start = origin_;
    path.end = now_;
    path.initial = {nodes_[chain[0]].typeAtBirth, nodes_[chain[0]].site};
    for (std::size_t k = 0; k < chain.size(); ++k) {
        const LineageNode& node = nodes_[chain[k]];
        const double until = k + 1 < chain.size() ? nodes_[chain[k + 1]].birth : now_;
        if (k > 0) path.push(node.birth, {node.typeAtBirth, node.site});
        for (const auto& [t, v] : node.mutations) {
            if (t >= until && k + 1 < chain.size()) break;
            if (t > now_) break;
            path.push(t, {v, node.site});
        }
    }
    return path;
}

void LineageForest::apply(const HmmEvent& e) {
    if (e.kind == HmmEvent::Kind::Mutation) {
        const Type old = headType_[e.src];
        if (old == e.newType) return;
        nodes_[heads_[e.src]].mutations.emplace_back(e.time, e.newType);
        index_remove(e.src, old);
        headType_[e.src] = e.newType;
        index_add(e.src, e.newType);
        return;
    }
    if (e.src == e.dst) return;
    const Type u = headType_[e.src];
    nodes_.push_back({e.time, u, e.dst, heads_[e.src], {}});
    heads_[e.dst] = static_cast<int>(nodes_.size()) - 1;
    index_remove(e.dst, headType_[e.dst]);
    headType_[e.dst] = u;
    index_add(e.dst, u);
}

LineageForest init_forest(const ModelParams& p, double c, const std::vector<Type>& initialTypes) {
    return LineageForest(p, c, initialTypes);
}

double total_event_rate(const ModelParams& p) { return p.B * p.N + 0.5 * double(p.N) * p.N; }

namespace {

// Site chosen with probability proportional to w(type of site).
template <typename W>
Site pick_weighted(const std::vector<std::vector<Site>>& byType, W w, Rng& rng) {
    double total = 0;
    for (std::size_t u = 0; u < byType.size(); ++u) total += byType[u].size() * w(int(u));
    double x = rng.uniform() * total;
    int last = -1;
    for (std::size_t u = 0; u < byType.size(); ++u) {
        const double m = byType[u].size() * w(int(u));
        if (m <= 0) continue;
        last = int(u);
        if (x < m) return byType[u][rng.below(int(byType[u].size()))];
        x -= m;
    }
    return byType[last][rng.below(int(byType[last].size()))];
}

}  // namespace

HmmEvent sample_event(const LineageForest& f, const ModelParams& p, Rng& rng) {
    const int N = p.N;
    HmmEvent e;
    const double mut = p.B * N;
    if (rng.uniform() * total_event_rate(p) < mut) {
        e.kind = HmmEvent::Kind::Mutation;
        e.src = e.dst = rng.below(N);
        const Type u = f.headType_[e.src];
        e.newType = rng.categorical(p.b.row(u), 1.0);
        return e;
    }
    // rate(i,j) = (1/2)(1 - S/N) + (S/2N)(chi_i + (1 - chi_j)): a uniform pair,
    // or one end drawn proportional to fitness (src) or unfitness (dst).
    e.kind = HmmEvent::Kind::Resampling;
    const double fracSel = p.S / N;
    if (fracSel <= 0 || rng.uniform() >= fracSel) {
        e.src = rng.below(N);
        e.dst = rng.below(N);
    } else {
        double X = 0;
        for (std::size_t u = 0; u < f.byType_.size(); ++u) X += f.byType_[u].size() * p.chi(u);
        if (rng.uniform() * N < X) {
            e.src = pick_weighted(f.byType_, [&](int u) { return p.chi(u); }, rng);
            e.dst = rng.below(N);
        } else {
            e.src = rng.below(N);
            e.dst = pick_weighted(f.byType_, [&](int u) { return 1.0 - p.chi(u); }, rng);
        }
    }
    e.newType = f.headType_[e.src];
    return e;
}

HmmEvent step_forest(LineageForest& f, const ModelParams& p, Rng& rng) {
    const double h = rng.exponential(total_event_rate(p));
    f.advance_to(f.now() + h);
    HmmEvent e = sample_event(f, p, rng);
    e.time = f.now();
    f.apply(e);
    return e;
}

void run_until(LineageForest& f, const ModelParams& p, double T, Rng& rng, std::vector<HmmEvent>* log) {
    if (T < f.now()) throw ValidationError("run_until: target Time lies in the past");
    const double rate = total_event_rate(p);
    while (true) {
        const double h = rng.exponential(rate);
        if (f.now() + h > T) break;
        f.advance_to(f.now() + h);
        HmmEvent e = sample_event(f, p, rng);
        e.time = f.now();
        f.apply(e);
        if (log) log->push_back(e);
    }
    f.advance_to(T);
}

double genealogical_distance(const LineageForest& f, Site i, Site j) {
    if (i == j) return 0.0;
    const auto& nodes = f.nodes();
    int a = f.heads().at(i), b = f.heads().at(j);
    constexpr double inf = std::numeric_limits<double>::infinity();
    double leftA = inf, leftB = inf;  // birth of the last node left on each side
    while (a != b) {
        const bool moveA = nodes[a].birth >= nodes[b].birth;
        int& x = moveA ? a : b;
        // roots are the earliest nodes, so both sides sit on distinct roots here
        if (nodes[x].parent < 0) return 2.0 * (f.now() - f.time_origin());
        (moveA ? leftA : leftB) = nodes[x].birth;
        x = nodes[x].parent;
    }
    const double tau = std::min(leftA, leftB);
    return 2.0 * std::abs(f.now() - tau);
}

std::optional<Type> cat_fixation_type(const ModelParams& p, double c, const std::vector<Type>& initialTypes,
                                      double t, Rng& rng, double horizonCap) {
    if (t < c) throw ValidationError("cat_fixation_type: t precedes the origin");
    if (horizonCap < 0) horizonCap = 50.0 * p.N;
    LineageForest f(p, c, initialTypes);
    run_until(f, p, t, rng);
    auto fixed = [&]() -> int {
        const int a = f.ancestor_node(0, t);
        for (Site i = 1; i < p.N; ++i)
            if (f.ancestor_node(i, t) != a) return -1;
        return a;
    };
    if (p.N == 1) return f.nodes()[f.heads()[0]].type_at(t);
    const double rate = total_event_rate(p);
    while (true) {
        const double h = rng.exponential(rate);
        if (f.now() + h > t + horizonCap) return std::nullopt;
        f.advance_to(f.now() + h);
        HmmEvent e = sample_event(f, p, rng);
        e.time = f.now();
        f.apply(e);
        if (e.kind != HmmEvent::Kind::Resampling || e.src == e.dst) continue;
        if (const int a = fixed(); a >= 0) return f.nodes()[a].type_at(t);
    }
}

void write_event_log(std::ostream& os, const std::vector<HmmEvent>& events) {
    os << "time,kind,src,dst_or_new_type\n" << std::setprecision(17);
    for (const auto& e : events) {
        if (e.kind == HmmEvent::Kind::Mutation)
            os << e.time << ",mutation," << e.src << "," << e.newType << "\n";
        else
            os << e.time << ",resampling," << e.src << "," << e.dst << "\n";
    }
}

}  // namespace moran
