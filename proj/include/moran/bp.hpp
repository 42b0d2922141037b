#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "moran/forest.hpp"
#include "moran/model.hpp"
#include "moran/path.hpp"
#include "moran/rng.hpp"

namespace moran {

using TypeSet = std::uint32_t;  // bitmask over K

inline TypeSet full_set(int d) { return (TypeSet(1) << d) - 1; }
inline TypeSet prefix_set(int w) { return (TypeSet(2) << w) - 1; }  // {0,...,w}
inline bool contains(TypeSet A, Type u) { return (A >> u) & 1u; }
inline int set_min(TypeSet A) { return __builtin_ctz(A); }
inline int set_max(TypeSet A) { return 31 - __builtin_clz(A); }
inline int set_size(TypeSet A) { return __builtin_popcount(A); }

enum class BpKind { K1a, K1bi, K1bii, K2ai, K2aii, K2bi, K2bii, K2ci, K2cii, K2di, K2dii, K2diii };
inline constexpr int kBpKindCount = 12;
const char* kind_name(BpKind k);

// Marked J-partition on sites plus a type subset per site. Sets at sites
// occupied by a partition element are irrelevant to every rate, to V and to
// H*; they are stored as the full set K so equal-behaving states compare equal.
struct BpState {
    int N = 0;
    int d = 0;
    std::vector<Site> members;    // J, increasing
    std::vector<Mark> marks;      // marks[k] belongs to members[k]
    std::vector<TypeSet> sets;    // indexed by site

    struct Block {
        Mark mark;
        std::vector<int> members;  // positions into `members`
    };
    std::vector<Block> blocks() const;       // sorted by site
    std::vector<int> occupant() const;       // site -> block index, or -1 if active
    std::vector<Site> active_sites() const;

    void canonicalize();
    void check() const;  // throws ValidationError on a broken invariant
    std::string key() const;
    bool operator==(const BpState& o) const { return marks == o.marks && sets == o.sets && members == o.members; }
};

std::ostream& operator<<(std::ostream& os, const BpState& s);

BpState canonical_start(const ModelParams& p, const std::vector<Site>& J, const std::vector<Type>& xiStar);

struct BpTransition {
    BpState target;
    double rate = 0;
    BpKind kind = BpKind::K1a;
};

// All positive-rate transitions that change the state. Distinct clauses reaching
// the same target are listed separately.
std::vector<BpTransition> enumerate_transitions(const BpState& s, const ModelParams& p);

double feynman_kac_V(const BpState& s, const ModelParams& p);

// H*(x, s): x in K^I.
bool duality_indicator(const std::vector<Type>& x, const BpState& s);
// Per-site allowed types: the mark at occupied sites, the set at active ones.
std::vector<TypeSet> site_constraints(const BpState& s);

struct BpPathEvent {
    double time;
    BpKind kind;
    BpState state;  // state after the event
};

struct BpPath {
    BpState initial;
    std::vector<BpPathEvent> events;
    double horizon = 0;

    const BpState& state_at(double t) const;
};

BpPath simulate_bp(const BpState& start, const ModelParams& p, double T, Rng& rng);
double path_V_integral(const BpPath& path, const ModelParams& p, double t);

// Path of member k (index into J) on [0, horizon].
CadlagPath<Mark> member_path(const BpPath& path, int k);
// Reversed, shifted lines on [-T, 0], one per member of J.
std::vector<CadlagPath<Mark>> reverse_to_lines(const BpPath& path);

void write_bp_path(std::ostream& os, const BpPath& path);

}  // namespace moran
