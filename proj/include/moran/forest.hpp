#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "moran/model.hpp"
#include "moran/path.hpp"
#include "moran/rng.hpp"

namespace moran {

// (type, life-site) pair: the value of an extended ancestral line at one Time.
struct Mark {
    Type type = 0;
    Site site = 0;
    bool operator==(const Mark&) const = default;
    auto operator<=>(const Mark&) const = default;
};

struct LineageNode {
    double birth = 0;
    Type typeAtBirth = 0;
    Site site = 0;
    int parent = -1;
    std::vector<std::pair<double, Type>> mutations;  // sorted by time

    Type type_at(double s) const {
        Type u = typeAtBirth;
        for (const auto& [t, v] : mutations) {
            if (t > s) break;
            u = v;
        }
        return u;
    }
};

struct HmmEvent {
    enum class Kind { Mutation, Resampling };
    Kind kind = Kind::Mutation;
    double time = 0;
    Site src = 0;  // mutating site, or the site whose line is copied
    Site dst = 0;  // overwritten site (equals src for mutations)
    Type newType = 0;
};

// All extended ancestral lines of the forward process. Resampling shares the
// source's past through a parent pointer; nodes are never modified except for
// appending mutations to a current head.
class LineageForest {
public:
    LineageForest(const ModelParams& p, double c, const std::vector<Type>& initialTypes);

    double time_origin() const { return origin_; }
    double now() const { return now_; }
    int size() const { return static_cast<int>(heads_.size()); }
    const std::vector<LineageNode>& nodes() const { return nodes_; }
    const std::vector<int>& heads() const { return heads_; }
    Type type(Site i) const { return headType_[i]; }
    std::vector<Type> types() const { return headType_; }

    // Node carrying site i's line at Time s (s in [origin, now]).
    int ancestor_node(Site i, double s) const;
    Mark line_value(Site i, double s) const;
    CadlagPath<Mark> line(Site i) const;  // line of site i on [origin, now]

    void advance_to(double t) { now_ = t; }
    void apply(const HmmEvent& e);

private:
    void index_add(Site i, Type u);
    void index_remove(Site i, Type u);

    double origin_ = 0, now_ = 0;
    std::vector<LineageNode> nodes_;
    std::vector<int> heads_;
    std::vector<Type> headType_;
    // sites grouped by current type, for O(d) fitness-proportional picks
    std::vector<std::vector<Site>> byType_;
    std::vector<int> posInType_;
    friend HmmEvent sample_event(const LineageForest&, const ModelParams&, Rng&);
};

LineageForest init_forest(const ModelParams& p, double c, const std::vector<Type>& initialTypes);

// Total event rate: B*N (mutation clocks incl. identity mutations) + N^2/2 (all
// ordered resampling pairs incl. i=j). The selection terms cancel in the sum.
double total_event_rate(const ModelParams& p);

HmmEvent step_forest(LineageForest& f, const ModelParams& p, Rng& rng);
void run_until(LineageForest& f, const ModelParams& p, double T, Rng& rng,
               std::vector<HmmEvent>* log = nullptr);

double genealogical_distance(const LineageForest& f, Site i, Site j);

// Type of the Time-t ancestor of the whole population, or nullopt if the
// horizon cap (default 50 N time units past t) is hit first.
std::optional<Type> cat_fixation_type(const ModelParams& p, double c, const std::vector<Type>& initialTypes,
                                      double t, Rng& rng, double horizonCap = -1);

void write_event_log(std::ostream& os, const std::vector<HmmEvent>& events);

}  // namespace moran
