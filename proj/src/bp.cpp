#include "moran/bp.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>

#include "moran/hash.hpp"

namespace moran {

const char* kind_name(BpKind k) {
    static const char* names[] = {"1a", "1bi", "1bii", "2ai", "2aii", "2bi",
                                  "2bii", "2ci", "2cii", "2di", "2dii", "2diii"};
    return names[static_cast<int>(k)];
}

std::vector<BpState::Block> BpState::blocks() const {
    std::vector<int> at(N, -1);
    std::vector<Block> out;
    for (int k = 0; k < static_cast<int>(marks.size()); ++k) {
        const Site s = marks[k].site;
        if (at[s] < 0) {
            at[s] = static_cast<int>(out.size());
            out.push_back({marks[k], {k}});
        } else {
            out[at[s]].members.push_back(k);
        }
    }
    std::sort(out.begin(), out.end(), [](const Block& a, const Block& b) { return a.mark.site < b.mark.site; });
    return out;
}

std::vector<int> BpState::occupant() const {
    std::vector<int> occ(N, -1);
    const auto bl = blocks();
    for (int g = 0; g < static_cast<int>(bl.size()); ++g) occ[bl[g].mark.site] = g;
    return occ;
}

std::vector<Site> BpState::active_sites() const {
    std::vector<char> occ(N, 0);
    for (const auto& m : marks) occ[m.site] = 1;
    std::vector<Site> out;
    for (Site i = 0; i < N; ++i)
        if (!occ[i]) out.push_back(i);
    return out;
}

void BpState::canonicalize() {
    for (const auto& m : marks) sets[m.site] = full_set(d);
}

void BpState::check() const {
    if (static_cast<int>(sets.size()) != N) throw ValidationError("BP state: one set per site required");
    if (members.size() != marks.size()) throw ValidationError("BP state: one mark per member required");
    if (!std::is_sorted(members.begin(), members.end()) ||
        std::adjacent_find(members.begin(), members.end()) != members.end())
        throw ValidationError("BP state: members must be distinct and increasing");
    for (Site j : members)
        if (j < 0 || j >= N) throw ValidationError("BP state: member outside I");
    std::vector<int> at(N, -1);
    for (int k = 0; k < static_cast<int>(marks.size()); ++k) {
        const Mark& m = marks[k];
        if (m.site < 0 || m.site >= N || m.type < 0 || m.type >= d) throw ValidationError("BP state: mark out of range");
        if (at[m.site] >= 0 && !(marks[at[m.site]] == m))
            throw ValidationError("BP state: two marks share a site but differ");
        at[m.site] = k;
    }
    for (Site i = 0; i < N; ++i) {
        if (sets[i] == 0 || (sets[i] & ~full_set(d))) throw ValidationError("BP state: set empty or outside K");
        if (at[i] >= 0 && sets[i] != full_set(d)) throw ValidationError("BP state: occupied site not canonical");
    }
}

std::string BpState::key() const {
    std::string k;
    k.reserve(2 * marks.size() + 4 * sets.size());
    for (const auto& m : marks) {
        k.push_back(static_cast<char>(m.type));
        k.push_back(static_cast<char>(m.site));
    }
    for (TypeSet A : sets)
        for (int b = 0; b < 4; ++b) k.push_back(static_cast<char>((A >> (8 * b)) & 0xff));
    return k;
}

std::ostream& operator<<(std::ostream& os, const BpState& s) {
    os << "{";
    for (const auto& bl : s.blocks()) {
        os << "[";
        for (std::size_t q = 0; q < bl.members.size(); ++q) os << (q ? "," : "") << s.members[bl.members[q]];
        os << "]@" << bl.mark.site << ":" << bl.mark.type << " ";
    }
    os << "|";
    for (Site i = 0; i < s.N; ++i) {
        os << " " << i << ":{";
        bool first = true;
        for (int u = 0; u < s.d; ++u)
            if (contains(s.sets[i], u)) {
                os << (first ? "" : ",") << u;
                first = false;
            }
        os << "}";
    }
    return os << "}";
}

BpState canonical_start(const ModelParams& p, const std::vector<Site>& J, const std::vector<Type>& xiStar) {
    if (J.size() != xiStar.size()) throw ValidationError("canonical_start: J and xi differ in length");
    BpState s;
    s.N = p.N;
    s.d = p.d;
    std::vector<std::pair<Site, Type>> zipped;
    for (std::size_t k = 0; k < J.size(); ++k) zipped.emplace_back(J[k], xiStar[k]);
    std::sort(zipped.begin(), zipped.end());
    for (const auto& [j, u] : zipped) {
        s.members.push_back(j);
        s.marks.push_back({u, j});
    }
    s.sets.assign(p.N, full_set(p.d));
    s.check();
    return s;
}

namespace {

struct Builder {
    const BpState& s;
    const ModelParams& p;
    std::vector<BpTransition>& out;

    void add(BpState t, double rate, BpKind kind) {
        if (!(rate > 0)) return;
        if (t == s) return;
        out.push_back({std::move(t), rate, kind});
    }
};

void relabel(BpState& t, const BpState::Block& g, Mark m) {
    for (int k : g.members) t.marks[k] = m;
}

}  // namespace

std::vector<BpTransition> enumerate_transitions(const BpState& s, const ModelParams& p) {
    std::vector<BpTransition> out;
    Builder add{s, p, out};
    const int d = p.d;
    const TypeSet K = full_set(d);
    const double sel = p.sel();
    const auto blocks = s.blocks();
    const auto active = s.active_sites();
    auto base = [&](Type m) { return 0.5 + sel * (p.chi(m) - 1.0); };
    auto step = [&](int w) { return sel * (p.chi(w + 1) - p.chi(w)); };

    // 1a: mark mutation
    for (const auto& g : blocks)
        for (Type u = 0; u < d; ++u) {
            if (u == g.mark.type) continue;
            BpState t = s;
            relabel(t, g, {u, g.mark.site});
            add.add(std::move(t), p.B * p.b(u, g.mark.type), BpKind::K1a);
        }

    // 1b: set mutation at active sites
    for (Site i : active) {
        const TypeSet A = s.sets[i];
        for (Type v = 0; v < d; ++v)
            for (Type u = 0; u < d; ++u) {
                if (contains(A, v) && !contains(A, u)) {
                    BpState t = s;
                    t.sets[i] = A | (TypeSet(1) << u);
                    add.add(std::move(t), p.B * p.b(u, v), BpKind::K1bi);
                }
                if (set_size(A) > 1 && !contains(A, v) && contains(A, u)) {
                    BpState t = s;
                    t.sets[i] = A & ~(TypeSet(1) << u);
                    add.add(std::move(t), p.B * p.b(u, v), BpKind::K1bii);
                }
            }
    }

    // 2a: partition element onto another one with the same mark
    for (const auto& g : blocks)
        for (const auto& h : blocks) {
            if (&g == &h || g.mark.type != h.mark.type) continue;
            BpState t = s;
            relabel(t, g, h.mark);
            t.sets[g.mark.site] = K;
            add.add(t, base(g.mark.type), BpKind::K2ai);
            for (int w = 0; w <= d - 2; ++w) {
                BpState tw = t;
                tw.sets[g.mark.site] = prefix_set(w);
                add.add(std::move(tw), step(w), BpKind::K2aii);
            }
        }

    // 2b: partition element onto an active site
    for (const auto& g : blocks)
        for (Site i : active) {
            if (!contains(s.sets[i], g.mark.type)) continue;
            BpState t = s;
            relabel(t, g, {g.mark.type, i});
            t.sets[g.mark.site] = K;
            t.sets[i] = K;
            add.add(t, base(g.mark.type), BpKind::K2bi);
            for (int w = 0; w <= d - 2; ++w) {
                BpState tw = t;
                tw.sets[g.mark.site] = prefix_set(w);
                add.add(std::move(tw), step(w), BpKind::K2bii);
            }
        }

    // 2c: active site reset by a partition element
    for (Site i : active)
        for (const auto& g : blocks) {
            if (!contains(s.sets[i], g.mark.type)) continue;
            BpState t = s;
            t.sets[i] = K;
            add.add(std::move(t), base(g.mark.type), BpKind::K2ci);
            for (int w = 0; w <= d - 2; ++w) {
                BpState tw = s;
                tw.sets[i] = prefix_set(w);
                add.add(std::move(tw), step(w), BpKind::K2cii);
            }
        }

    // 2d: interactions between active sites
    for (Site i : active)
        for (Site j : active) {
            if (i == j) continue;
            const TypeSet C = s.sets[i] & s.sets[j];
            if (C == 0 || C == K) continue;
            const int lo = set_min(C);
            BpState t = s;
            t.sets[i] = C;
            t.sets[j] = K;
            add.add(t, base(lo), BpKind::K2di);
            for (int w = 0; w <= d - 2; ++w) {
                BpState tw = t;
                tw.sets[j] = prefix_set(w);
                add.add(std::move(tw), step(w), BpKind::K2dii);
            }
            int prev = lo;
            for (Type v = lo + 1; v < d; ++v) {
                if (!contains(C, v)) continue;
                BpState tv = t;
                tv.sets[i] = C & ~prefix_set(v - 1);
                add.add(std::move(tv), sel * (p.chi(v) - p.chi(prev)), BpKind::K2diii);
                prev = v;
            }
        }
    return out;
}

double feynman_kac_V(const BpState& s, const ModelParams& p) {
    const int d = p.d;
    const TypeSet K = full_set(d);
    const double sel = p.sel();
    const auto blocks = s.blocks();
    const auto active = s.active_sites();
    double V = 0;
    for (const auto& g : blocks) V += p.B * (p.b.col(g.mark.type).sum() - 1.0);
    for (Site i : active) {
        const TypeSet A = s.sets[i];
        if (set_size(A) != 1) continue;
        const Type u = set_min(A);
        V -= p.B * (p.b.row(u).sum() - p.b(u, u));
    }
    for (const auto& g : blocks)
        for (const auto& h : blocks) {
            if (&g == &h) continue;
            const double same = g.mark.type == h.mark.type ? 0.5 + sel * p.chi(g.mark.type) : 0.0;
            V += same - 0.5;
        }
    for (const auto& g : blocks)
        for (Site i : active) {
            const double in = contains(s.sets[i], g.mark.type) ? 0.5 + sel * p.chi(g.mark.type) : 0.0;
            V += 2.0 * (in - 0.5);
        }
    for (Site i : active)
        for (Site j : active) {
            if (i == j) continue;
            const TypeSet C = s.sets[i] & s.sets[j];
            // an empty intersection contributes no selection term
            if (C != K && C != 0) V += sel * p.chi(set_max(C));
            if (C == 0) V -= 0.5;
        }
    return V;
}

std::vector<TypeSet> site_constraints(const BpState& s) {
    std::vector<TypeSet> c = s.sets;
    for (const auto& m : s.marks) c[m.site] = TypeSet(1) << m.type;
    return c;
}

bool duality_indicator(const std::vector<Type>& x, const BpState& s) {
    const auto c = site_constraints(s);
    for (Site i = 0; i < s.N; ++i)
        if (!contains(c[i], x[i])) return false;
    return true;
}

const BpState& BpPath::state_at(double t) const {
    const BpState* cur = &initial;
    for (const auto& e : events) {
        if (e.time > t) break;
        cur = &e.state;
    }
    return *cur;
}

BpPath simulate_bp(const BpState& start, const ModelParams& p, double T, Rng& rng) {
    if (T < 0) throw ValidationError("simulate_bp: negative horizon");
    BpPath path{start, {}, T};
    BpState cur = start;
    double t = 0;
    std::vector<double> rates;
    while (true) {
        auto tr = enumerate_transitions(cur, p);
        rates.clear();
        double total = 0;
        for (const auto& x : tr) {
            rates.push_back(x.rate);
            total += x.rate;
        }
        if (total <= 0) break;
        t += rng.exponential(total);
        if (t > T) break;
        auto& chosen = tr[rng.categorical(rates, total)];
        cur = std::move(chosen.target);
        path.events.push_back({t, chosen.kind, cur});
    }
    return path;
}

double path_V_integral(const BpPath& path, const ModelParams& p, double t) {
    if (t < 0 || t > path.horizon) throw ValidationError("path_V_integral: t outside [0, horizon]");
    double total = 0, from = 0;
    const BpState* cur = &path.initial;
    for (const auto& e : path.events) {
        if (e.time >= t) break;
        total += (e.time - from) * feynman_kac_V(*cur, p);
        from = e.time;
        cur = &e.state;
    }
    return total + (t - from) * feynman_kac_V(*cur, p);
}

CadlagPath<Mark> member_path(const BpPath& path, int k) {
    CadlagPath<Mark> out;
    out.start = 0;
    out.end = path.horizon;
    out.initial = path.initial.marks.at(k);
    for (const auto& e : path.events) out.push(e.time, e.state.marks[k]);
    return out;
}

std::vector<CadlagPath<Mark>> reverse_to_lines(const BpPath& path) {
    std::vector<CadlagPath<Mark>> lines;
    for (int k = 0; k < static_cast<int>(path.initial.marks.size()); ++k)
        lines.push_back(reverse_path(member_path(path, k)));
    return lines;
}

void write_bp_path(std::ostream& os, const BpPath& path) {
    os << "time,kind,state_hash\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(path.initial.key())));
    os << std::setprecision(17) << 0.0 << ",start," << buf << "\n";
    for (const auto& e : path.events) {
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(e.state.key())));
        os << e.time << "," << kind_name(e.kind) << "," << buf << "\n";
    }
}

}  // namespace moran
