#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "moran/bp.hpp"
#include "moran/model.hpp"
#include "moran/reduced.hpp"
#include "moran/rng.hpp"
#include "moran/transformed.hpp"

namespace moran {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind {
    DualitySweep,
    ForwardDistance,
    ConditionedDistance,
    CatEquilibrium,
    SurvivalTable,
    TaylorReport,
    CrossCheck
};

const char* experiment_name(ExperimentKind k);
ExperimentKind parse_experiment(const std::string& name);
const std::vector<ExperimentKind>& all_experiments();

struct ExperimentConfig {
    ModelParams model;
    ExperimentKind experiment = ExperimentKind::SurvivalTable;
    double T = 1.0;
    std::vector<double> tGrid{0.5, 1.0};
    long replicates = 1000;
    std::uint64_t seed = 1;
    std::string out = "out";
    int workers = 1;
    ChainMode mode = ChainMode::Limit;
    int nMax = 16;               // Limit chains: starting truncation level
    std::vector<Type> xi{0, 0};  // conditioned-distance: types of sites 0 and 1 at Time 0
    Eigen::VectorXd nu;          // single-site initial law; uniform when empty
    bool stationaryStart = false;
    bool fearnheadVariant = false;
    bool randomizeParams = false;  // duality-sweep: draw B, b and chi per replicate
    bool writeSamples = false;     // also write the event log / lines of replicate 0

    // Canonical JSON of every field that influences the outputs.
    std::string canonical() const;
};

// Throws ValidationError naming the offending key.
ExperimentConfig parse_config(const std::string& jsonText);
ExperimentConfig load_config(const std::string& path);
void validate_config(const ExperimentConfig& cfg);

struct OutputFile {
    std::string name;
    std::uint64_t checksum = 0;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string configHash;
    std::string version;
    std::string experiment;
    double wallSeconds = 0;
    std::vector<OutputFile> outputs;
};

// Computes everything in memory, then writes the CSVs and finally manifest.csv,
// each via a temporary file and rename. A failed run leaves no manifest.
RunManifest run_experiment(const ExperimentConfig& cfg);

struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
};

std::vector<PlotSeries> plot_series(const SurvivalTable& table);
std::vector<PlotSeries> plot_series(const CatEquilibrium& eq);
// Long format: series,x,y.
void emit_plotdata(std::ostream& os, const std::vector<PlotSeries>& series);

// Monte Carlo survival estimate of half the genealogical distance.
struct SurvivalEstimate {
    std::vector<double> t, estimate, se;
    long replicates = 0;
    long accepted = 0;
};

// Forward HMM on [0,T] from iid(nu) types: P(D_T(0,1) > 2t) for t in the grid.
SurvivalEstimate forward_distance_survival(const ModelParams& p, const Eigen::VectorXd& nu, double T,
                                           const std::vector<double>& tGrid, long replicates, std::uint64_t seed,
                                           int workers);

// Transformed BP with J = {0,1}: P(coalescence time of the two lines > t) given
// types xi at Time 0.
SurvivalEstimate conditioned_distance_survival(const ModelParams& p, const std::vector<Type>& xi, double T,
                                               const Potential& potential, const std::vector<double>& tGrid,
                                               long replicates, std::uint64_t seed, int workers);

// First BP time at which members 0 and 1 share a block; infinity if never.
double coalescence_time(const BpPath& path);

struct DualityCase {
    ModelParams params;
    Eigen::VectorXd mu;
    BpState eta;
};

DualityCase random_duality_case(const ModelParams& base, bool randomizeParams, Rng& rng);

}  // namespace moran
