#include "moran/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "moran/exact.hpp"
#include "moran/forest.hpp"
#include "moran/hash.hpp"
#include "moran/parallel.hpp"

namespace moran {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<ExperimentKind, const char*> kNames{
    {ExperimentKind::DualitySweep, "duality-sweep"},
    {ExperimentKind::ForwardDistance, "forward-distance"},
    {ExperimentKind::ConditionedDistance, "conditioned-distance"},
    {ExperimentKind::CatEquilibrium, "cat-equilibrium"},
    {ExperimentKind::SurvivalTable, "survival-table"},
    {ExperimentKind::TaylorReport, "taylor-report"},
    {ExperimentKind::CrossCheck, "cross-check"},
};

const char* kStateNames[3] = {"open", "full", "half"};

std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

// CSV writer with round-trip precision.
class Csv {
public:
    explicit Csv(const std::string& header) { os_ << header << '\n'; }
    template <typename... Ts>
    void row(const Ts&... xs) {
        bool first = true;
        ((os_ << (first ? "" : ",") << fmt(xs), first = false), ...);
        os_ << '\n';
    }
    std::string str() const { return os_.str(); }

private:
    static std::string fmt(double x) {
        std::ostringstream s;
        s << std::setprecision(17) << x;
        return s.str();
    }
    static std::string fmt(int x) { return std::to_string(x); }
    static std::string fmt(long x) { return std::to_string(x); }
    static std::string fmt(const std::string& x) { return x; }
    static std::string fmt(const char* x) { return x; }
    std::ostringstream os_;
};

template <typename T>
T get_key(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError("config key '" + key + "': " + e.what());
    }
}

std::vector<double> parse_grid(const json& j) {
    if (j.is_array()) return j.get<std::vector<double>>();
    if (j.is_object()) {
        const double from = j.value("from", 0.0), to = j.at("to").get<double>(), step = j.at("step").get<double>();
        if (!(step > 0)) throw ValidationError("config key 't_grid': step must be positive");
        std::vector<double> g;
        const long n = std::lround((to - from) / step);
        for (long k = 0; k <= n; ++k) g.push_back(from + k * step);
        return g;
    }
    throw ValidationError("config key 't_grid': expected an array or {from,to,step}");
}

json model_json(const ModelParams& p) {
    json m;
    m["N"] = p.N;
    m["d"] = p.d;
    m["B"] = p.B;
    m["S"] = p.S;
    std::vector<double> b;
    for (int u = 0; u < p.d; ++u)
        for (int v = 0; v < p.d; ++v) b.push_back(p.b(u, v));
    m["b"] = b;
    m["chi"] = std::vector<double>(p.chi.data(), p.chi.data() + p.chi.size());
    return m;
}

std::pair<double, double> mean_se(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double m = 0;
    for (double v : x) m += v;
    m /= n;
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return {m, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
}

SurvivalEstimate survival_from_times(const std::vector<double>& times, const std::vector<double>& tGrid) {
    SurvivalEstimate e;
    e.replicates = static_cast<long>(times.size());
    e.accepted = e.replicates;
    std::vector<double> ind(times.size());
    for (double t : tGrid) {
        for (std::size_t k = 0; k < times.size(); ++k) ind[k] = times[k] > t ? 1.0 : 0.0;
        auto [m, se] = mean_se(ind);
        e.t.push_back(t);
        e.estimate.push_back(m);
        e.se.push_back(se);
    }
    return e;
}

Eigen::VectorXd single_site_law(const ExperimentConfig& cfg) {
    if (cfg.nu.size() == 0) return Eigen::VectorXd::Constant(cfg.model.d, 1.0 / cfg.model.d);
    return cfg.nu;
}

using Outputs = std::vector<std::pair<std::string, std::string>>;

Outputs run_duality_sweep(const ExperimentConfig& cfg) {
    Csv csv("replicate,N,d,B,S,t,lhs,rhs,abs_gap");
    std::vector<std::vector<DualityReport>> res(cfg.replicates);
    parallel_for(cfg.replicates, cfg.workers, [&](long k) {
        Rng rng(cfg.seed, static_cast<std::uint64_t>(k));
        const DualityCase c = random_duality_case(cfg.model, cfg.randomizeParams, rng);
        res[k] = check_duality(c.params, c.mu, c.eta, cfg.tGrid);
    });
    for (long k = 0; k < cfg.replicates; ++k)
        for (const auto& r : res[k]) csv.row(k, r.params.N, r.params.d, r.params.B, r.params.S, r.t, r.lhs, r.rhs, r.absGap);
    return {{"duality.csv", csv.str()}};
}

void write_estimate(Csv& csv, const SurvivalEstimate& e) {
    for (std::size_t k = 0; k < e.t.size(); ++k) csv.row(e.t[k], e.estimate[k], e.se[k], e.accepted);
}

Outputs run_forward_distance(const ExperimentConfig& cfg) {
    const Eigen::VectorXd nu = single_site_law(cfg);
    const SurvivalEstimate e =
        forward_distance_survival(cfg.model, nu, cfg.T, cfg.tGrid, cfg.replicates, cfg.seed, cfg.workers);
    Csv csv("t,survival,se,replicates");
    write_estimate(csv, e);
    Outputs out{{"forward_distance.csv", csv.str()}};
    if (cfg.writeSamples) {
        Rng rng(cfg.seed, 0);
        std::vector<Type> x(cfg.model.N);
        for (auto& v : x) v = rng.categorical(nu, nu.sum());
        LineageForest f = init_forest(cfg.model, 0.0, x);
        std::vector<HmmEvent> log;
        run_until(f, cfg.model, cfg.T, rng, &log);
        std::ostringstream os;
        write_event_log(os, log);
        out.emplace_back("events_replicate0.csv", os.str());
    }
    return out;
}

std::shared_ptr<const Potential> make_potential(const ExperimentConfig& cfg) {
    if (cfg.stationaryStart)
        return std::make_shared<StationaryPotential>(cfg.model,
                                                     finite_stationary_law(cfg.model).configuration_law());
    return std::make_shared<TimeSpacePotential>(cfg.model, product_law(cfg.model.N, single_site_law(cfg)), cfg.T);
}

Outputs run_conditioned_distance(const ExperimentConfig& cfg) {
    const auto potential = make_potential(cfg);
    const SurvivalEstimate e = conditioned_distance_survival(cfg.model, cfg.xi, cfg.T, *potential, cfg.tGrid,
                                                             cfg.replicates, cfg.seed, cfg.workers);
    Csv csv("t,survival,se,replicates");
    write_estimate(csv, e);
    Outputs out{{"conditioned_distance.csv", csv.str()}};
    if (cfg.writeSamples) {
        Rng rng(cfg.seed, 0);
        const ConditionedSample s = sample_conditioned_lines(cfg.model, {0, 1}, cfg.xi, cfg.T, *potential, rng);
        Csv lines("member,time,type,site");
        for (std::size_t j = 0; j < s.lines.size(); ++j) {
            const auto& l = s.lines[j];
            lines.row(static_cast<int>(j), l.start, l.initial.type, l.initial.site);
            for (const auto& [t, m] : l.jumps) lines.row(static_cast<int>(j), t, m.type, m.site);
        }
        out.emplace_back("lines_replicate0.csv", lines.str());
        std::ostringstream os;
        write_bp_path(os, s.path);
        out.emplace_back("bp_path_replicate0.csv", os.str());
    }
    return out;
}

std::string plot_csv(const std::vector<PlotSeries>& s) {
    std::ostringstream os;
    emit_plotdata(os, s);
    return os.str();
}

Outputs run_cat_equilibrium(const ExperimentConfig& cfg) {
    CatEquilibrium eq;
    if (cfg.mode == ChainMode::Limit) {
        eq = cat_equilibrium_limit(cfg.model, cfg.nMax, 1024, 1e-10, cfg.fearnheadVariant);
    } else {
        CatChainSpec spec = CatChainSpec::finite(cfg.model);
        spec.fearnheadVariant = cfg.fearnheadVariant;
        eq = cat_equilibrium(spec);
    }
    const int L = eq.nMax + 1;
    Csv states("type,n,probability");
    for (int u = 0; u < 2; ++u)
        for (int n = 0; n < L; ++n) states.row(u, n, eq.pi(u * L + n));
    Csv marginal("type,probability");
    for (int u = 0; u < 2; ++u) marginal.row(u, eq.marginal(u));
    return {{"cat_states.csv", states.str()},
            {"cat_marginal.csv", marginal.str()},
            {"plotdata.csv", plot_csv(plot_series(eq))}};
}

SurvivalTable survival_for(const ExperimentConfig& cfg, DistChainSpec& spec) {
    if (cfg.mode == ChainMode::Limit) {
        SurvivalTable t = dist_survival_limit(cfg.model, cfg.tGrid, cfg.nMax);
        spec = DistChainSpec::limit(cfg.model, t.levels - 1);
        return t;
    }
    spec = DistChainSpec::finite(cfg.model);
    return dist_survival(spec, cfg.tGrid);
}

Outputs run_survival_table(const ExperimentConfig& cfg) {
    DistChainSpec spec;
    const SurvivalTable tab = survival_for(cfg, spec);
    Csv f("t,state,n,survival");
    Csv pf("t,n,pf,remainder");
    for (std::size_t k = 0; k < tab.t.size(); ++k) {
        for (int y = 0; y < 3; ++y)
            for (int n = 0; n < tab.levels; ++n) f.row(tab.t[k], kStateNames[y], n, tab.f[k](y, n));
        for (int n = 0; n < tab.levels; ++n) pf.row(tab.t[k], n, tab.pf[k](n), tab.remainder[k](n));
    }
    Outputs out{{"survival.csv", f.str()}, {"pf.csv", pf.str()}, {"plotdata.csv", plot_csv(plot_series(tab))}};
    if (cfg.model.S == 0) {
        Csv c("t,state,closed_form,computed,abs_gap");
        for (std::size_t k = 0; k < tab.t.size(); ++k)
            for (int y = 0; y < 3; ++y) {
                const double cf = closed_form_f(cfg.model, static_cast<DistKind>(y), tab.t[k]);
                c.row(tab.t[k], kStateNames[y], cf, tab.f[k](y, 0), std::abs(cf - tab.f[k](y, 0)));
            }
        out.emplace_back("closed_form.csv", c.str());
    }
    if (cfg.mode == ChainMode::Limit) {
        const LemmaResidual r = lemma_ode_residual(spec, tab);
        Csv c("equation,max_residual");
        c.row("open", r.open);
        c.row("full", r.full);
        c.row("half", r.half);
        c.row("pf", r.pf);
        out.emplace_back("lemma_residual.csv", c.str());
    }
    return out;
}

Outputs run_taylor_report(const ExperimentConfig& cfg) {
    const DistChainSpec spec = cfg.mode == ChainMode::Limit ? DistChainSpec::limit(cfg.model, std::max(cfg.nMax, 5))
                                                            : DistChainSpec::finite(cfg.model);
    const TaylorCoeffs c = dist_taylor_coeffs(spec, 3);
    Csv csv("quantity,order,value");
    for (int k = 0; k <= 3; ++k) csv.row("pf", k, c.pf[k]);
    for (int y = 0; y < 3; ++y)
        for (int k = 0; k <= 3; ++k) csv.row(std::string("f_") + kStateNames[y], k, c.f[y][k]);
    const auto& E = spec.moments;
    csv.row("pf_formula", 3, -(1 + 2 * cfg.model.S * cfg.model.S * E(1, 1)));
    csv.row("f_open_formula", 1, -E(0, 1) / E(0, 2));
    csv.row("f_full_formula", 1, -E(1, 0) / E(2, 0));
    Csv mom("n,m,value");
    for (int n = 0; n <= E.maxOrder; ++n)
        for (int m = 0; n + m <= E.maxOrder; ++m)
            if (!std::isnan(E.E(n, m))) mom.row(n, m, E.E(n, m));
    return {{"taylor.csv", csv.str()}, {"moments.csv", mom.str()}};
}

Outputs run_cross_check(const ExperimentConfig& cfg) {
    Csv csv("check,t,gap");
    const ChainVsBpReport cat = cat_chain_vs_bp(cfg.model, cfg.tGrid);
    for (std::size_t k = 0; k < cat.t.size(); ++k) csv.row("cat_chain_vs_bp", cat.t[k], cat.gap[k]);
    if (cfg.model.N >= 2) {
        const ChainVsBpReport dist = dist_chain_vs_bp(cfg.model, cfg.tGrid);
        for (std::size_t k = 0; k < dist.t.size(); ++k) csv.row("dist_chain_vs_bp", dist.t[k], dist.gap[k]);
    }
    const StationaryTypeLaw law = finite_stationary_law(cfg.model);
    csv.row("harmonicity_J1", 0.0, compute_h(cfg.model, std::vector<Site>{0}, law).residual);
    if (cfg.model.N >= 2) csv.row("harmonicity_J2", 0.0, compute_h(cfg.model, std::vector<Site>{0, 1}, law).residual);
    return {{"cross_check.csv", csv.str()}};
}

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os << content;
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace

const char* experiment_name(ExperimentKind k) { return kNames.at(k); }

ExperimentKind parse_experiment(const std::string& name) {
    for (const auto& [k, n] : kNames)
        if (name == n) return k;
    throw ValidationError("config key 'experiment': unknown experiment '" + name + "'");
}

const std::vector<ExperimentKind>& all_experiments() {
    static const std::vector<ExperimentKind> v = [] {
        std::vector<ExperimentKind> r;
        for (const auto& [k, n] : kNames) r.push_back(k);
        return r;
    }();
    return v;
}

std::string ExperimentConfig::canonical() const {
    json j;
    j["model"] = model_json(model);
    j["experiment"] = experiment_name(experiment);
    j["T"] = T;
    j["t_grid"] = tGrid;
    j["replicates"] = replicates;
    j["seed"] = seed;
    j["mode"] = mode_name(mode);
    j["n_max"] = nMax;
    j["xi"] = xi;
    j["nu"] = std::vector<double>(nu.data(), nu.data() + nu.size());
    j["mu"] = stationaryStart ? "stationary" : "product";
    j["fearnhead_variant"] = fearnheadVariant;
    j["randomize_params"] = randomizeParams;
    j["write_samples"] = writeSamples;
    return j.dump();
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    ExperimentConfig cfg;
    const json m = j.value("model", json::object());
    ModelParams& p = cfg.model;
    p.N = get_key<int>(m, "N", 10);
    p.d = get_key<int>(m, "d", 2);
    if (p.d < 2 || p.d > 31) throw ValidationError("config key 'model.d': must be in [2,31]");
    p.B = get_key<double>(m, "B", 1.0);
    p.S = get_key<double>(m, "S", 0.0);
    if (m.contains("b")) {
        const auto b = get_key<std::vector<double>>(m, "b", {});
        if (static_cast<int>(b.size()) != p.d * p.d) throw ValidationError("config key 'model.b': expected d*d entries");
        p.b.resize(p.d, p.d);
        for (int u = 0; u < p.d; ++u)
            for (int v = 0; v < p.d; ++v) p.b(u, v) = b[u * p.d + v];
    } else if (m.contains("b0")) {
        if (p.d != 2) throw ValidationError("config key 'model.b0': only valid for d = 2");
        const double b0 = get_key<double>(m, "b0", 0.5);
        p.b.resize(2, 2);
        p.b << b0, 1 - b0, b0, 1 - b0;
    } else {
        p.b = Eigen::MatrixXd::Constant(p.d, p.d, 1.0 / p.d);
    }
    if (m.contains("chi")) {
        const auto chi = get_key<std::vector<double>>(m, "chi", {});
        if (static_cast<int>(chi.size()) != p.d) throw ValidationError("config key 'model.chi': expected d entries");
        p.chi = Eigen::Map<const Eigen::VectorXd>(chi.data(), p.d);
    } else {
        p.chi = Eigen::VectorXd::LinSpaced(p.d, 0.0, 1.0);
    }
    try {
        validate_params(p);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("config key 'model': ") + e.what());
    }

    cfg.experiment = parse_experiment(get_key<std::string>(j, "experiment", experiment_name(cfg.experiment)));
    cfg.T = get_key<double>(j, "T", cfg.T);
    if (j.contains("t_grid")) {
        try {
            cfg.tGrid = parse_grid(j.at("t_grid"));
        } catch (const json::exception& e) {
            throw ValidationError(std::string("config key 't_grid': ") + e.what());
        }
    }
    cfg.replicates = get_key<long>(j, "replicates", cfg.replicates);
    cfg.seed = get_key<std::uint64_t>(j, "seed", cfg.seed);
    cfg.out = get_key<std::string>(j, "out", cfg.out);
    cfg.workers = get_key<int>(j, "workers", cfg.workers);
    const std::string mode = get_key<std::string>(j, "mode", mode_name(cfg.mode));
    if (mode == "finite") cfg.mode = ChainMode::FiniteN;
    else if (mode == "limit") cfg.mode = ChainMode::Limit;
    else throw ValidationError("config key 'mode': expected 'finite' or 'limit'");
    cfg.nMax = get_key<int>(j, "n_max", cfg.nMax);
    cfg.xi = get_key<std::vector<int>>(j, "xi", cfg.xi);
    if (j.contains("nu")) {
        const auto nu = get_key<std::vector<double>>(j, "nu", {});
        cfg.nu = Eigen::Map<const Eigen::VectorXd>(nu.data(), static_cast<Eigen::Index>(nu.size()));
    }
    const std::string mu = get_key<std::string>(j, "mu", "product");
    if (mu == "stationary") cfg.stationaryStart = true;
    else if (mu != "product") throw ValidationError("config key 'mu': expected 'product' or 'stationary'");
    cfg.fearnheadVariant = get_key<bool>(j, "fearnhead_variant", false);
    cfg.randomizeParams = get_key<bool>(j, "randomize_params", false);
    cfg.writeSamples = get_key<bool>(j, "write_samples", false);
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
    validate_params(cfg.model);
    if (cfg.replicates < 1) throw ValidationError("config key 'replicates': must be at least 1");
    if (cfg.workers < 1) throw ValidationError("config key 'workers': must be at least 1");
    if (!(cfg.T > 0)) throw ValidationError("config key 'T': must be positive");
    if (cfg.tGrid.empty()) throw ValidationError("config key 't_grid': must be nonempty");
    for (std::size_t k = 0; k < cfg.tGrid.size(); ++k) {
        if (!(cfg.tGrid[k] >= 0)) throw ValidationError("config key 't_grid': times must be nonnegative");
        if (k > 0 && !(cfg.tGrid[k] > cfg.tGrid[k - 1]))
            throw ValidationError("config key 't_grid': must be strictly increasing");
    }
    if (cfg.nMax < 1) throw ValidationError("config key 'n_max': must be positive");
    if (cfg.nu.size() != 0) {
        if (cfg.nu.size() != cfg.model.d) throw ValidationError("config key 'nu': expected d entries");
        if (cfg.nu.minCoeff() < 0 || std::abs(cfg.nu.sum() - 1) > 1e-12)
            throw ValidationError("config key 'nu': not a probability vector");
    }
    if (cfg.experiment == ExperimentKind::ConditionedDistance) {
        if (cfg.model.N < 2) throw ValidationError("config key 'model.N': conditioned-distance needs N >= 2");
        if (cfg.xi.size() != 2) throw ValidationError("config key 'xi': expected two types");
        for (Type u : cfg.xi)
            if (u < 0 || u >= cfg.model.d) throw ValidationError("config key 'xi': type out of range");
        if (!cfg.stationaryStart && cfg.tGrid.back() > cfg.T)
            throw ValidationError("config key 't_grid': times must not exceed T");
    }
    if (cfg.experiment == ExperimentKind::ForwardDistance && cfg.model.N < 2)
        throw ValidationError("config key 'model.N': forward-distance needs N >= 2");
}

RunManifest run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir(cfg.out);
    fs::create_directories(dir);
    fs::remove(dir / "manifest.csv");

    Outputs outputs;
    switch (cfg.experiment) {
        case ExperimentKind::DualitySweep: outputs = run_duality_sweep(cfg); break;
        case ExperimentKind::ForwardDistance: outputs = run_forward_distance(cfg); break;
        case ExperimentKind::ConditionedDistance: outputs = run_conditioned_distance(cfg); break;
        case ExperimentKind::CatEquilibrium: outputs = run_cat_equilibrium(cfg); break;
        case ExperimentKind::SurvivalTable: outputs = run_survival_table(cfg); break;
        case ExperimentKind::TaylorReport: outputs = run_taylor_report(cfg); break;
        case ExperimentKind::CrossCheck: outputs = run_cross_check(cfg); break;
    }

    RunManifest man;
    man.configHash = hex64(fnv1a(cfg.canonical()));
    man.version = kVersion;
    man.experiment = experiment_name(cfg.experiment);
    for (const auto& [name, body] : outputs) {
        write_atomic(dir / name, body);
        man.outputs.push_back({name, fnv1a(body), body.size()});
    }
    man.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    Csv m("kind,name,value");
    m.row("meta", "config_hash", man.configHash);
    m.row("meta", "version", man.version);
    m.row("meta", "experiment", man.experiment);
    m.row("meta", "wall_time_s", man.wallSeconds);
    for (const auto& o : man.outputs) m.row("output", o.name, hex64(o.checksum));
    write_atomic(dir / "manifest.csv", m.str());
    return man;
}

std::vector<PlotSeries> plot_series(const SurvivalTable& table) {
    std::vector<PlotSeries> s;
    for (int y = 0; y < 3; ++y)
        for (int n = 0; n < table.levels; ++n) {
            PlotSeries ps{std::string("f_") + kStateNames[y] + "_" + std::to_string(n), {}, {}};
            for (std::size_t k = 0; k < table.t.size(); ++k) {
                ps.x.push_back(table.t[k]);
                ps.y.push_back(table.f[k](y, n));
            }
            s.push_back(std::move(ps));
        }
    PlotSeries pf{"pf_0", {}, {}};
    for (std::size_t k = 0; k < table.t.size(); ++k) {
        pf.x.push_back(table.t[k]);
        pf.y.push_back(table.pf[k](0));
    }
    s.push_back(std::move(pf));
    return s;
}

std::vector<PlotSeries> plot_series(const CatEquilibrium& eq) {
    return {{"cat-marginal", {0.0, 1.0}, {eq.marginal(0), eq.marginal(1)}}};
}

void emit_plotdata(std::ostream& os, const std::vector<PlotSeries>& series) {
    bool any = false;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) throw ValidationError("plot series '" + s.name + "': x and y differ in length");
        any = any || !s.x.empty();
    }
    if (!any) throw ValidationError("plot data: empty input");
    os << "series,x,y\n";
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k)
            os << s.name << ',' << std::setprecision(17) << s.x[k] << ',' << s.y[k] << '\n';
}

SurvivalEstimate forward_distance_survival(const ModelParams& p, const Eigen::VectorXd& nu, double T,
                                           const std::vector<double>& tGrid, long replicates, std::uint64_t seed,
                                           int workers) {
    validate_params(p);
    if (p.N < 2) throw ValidationError("forward distance needs N >= 2");
    if (nu.size() != p.d) throw ValidationError("single-site law has the wrong length");
    if (replicates < 1) throw ValidationError("replicates must be at least 1");
    std::vector<double> half(replicates);
    parallel_for(replicates, workers, [&](long k) {
        Rng rng(seed, static_cast<std::uint64_t>(k));
        std::vector<Type> x(p.N);
        for (auto& v : x) v = rng.categorical(nu, nu.sum());
        LineageForest f = init_forest(p, 0.0, x);
        run_until(f, p, T, rng);
        half[k] = genealogical_distance(f, 0, 1) / 2;
    });
    return survival_from_times(half, tGrid);
}

double coalescence_time(const BpPath& path) {
    if (path.initial.blocks().size() == 1) return 0.0;
    for (const auto& e : path.events)
        if (e.state.blocks().size() == 1) return e.time;
    return std::numeric_limits<double>::infinity();
}

SurvivalEstimate conditioned_distance_survival(const ModelParams& p, const std::vector<Type>& xi, double T,
                                               const Potential& potential, const std::vector<double>& tGrid,
                                               long replicates, std::uint64_t seed, int workers) {
    if (replicates < 1) throw ValidationError("replicates must be at least 1");
    std::vector<double> times(replicates);
    parallel_for(replicates, workers, [&](long k) {
        Rng rng(seed, static_cast<std::uint64_t>(k));
        times[k] = coalescence_time(sample_conditioned_lines(p, {0, 1}, xi, T, potential, rng).path);
    });
    return survival_from_times(times, tGrid);
}

DualityCase random_duality_case(const ModelParams& base, bool randomizeParams, Rng& rng) {
    DualityCase c;
    c.params = base;
    ModelParams& p = c.params;
    const int N = p.N, d = p.d;
    if (randomizeParams) {
        p.B = 0.1 + 1.9 * rng.uniform();
        for (int u = 0; u < d; ++u) {
            for (int v = 0; v < d; ++v) p.b(u, v) = 0.1 + rng.uniform();
            p.b.row(u) /= p.b.row(u).sum();
        }
        for (int u = 1; u + 1 < d; ++u) p.chi(u) = (u + rng.uniform()) / d;
    }
    validate_params(p);
    long size = 1;
    for (int i = 0; i < N; ++i) size *= d;
    c.mu.resize(size);
    for (long x = 0; x < size; ++x) c.mu(x) = 0.05 + rng.uniform();
    c.mu /= c.mu.sum();

    BpState& s = c.eta;
    s.N = N;
    s.d = d;
    s.sets.assign(N, full_set(d));
    for (Site j = 0; j < N; ++j) {
        if (!rng.bernoulli(0.7)) continue;
        const Site site = rng.below(N);
        Type ty = rng.below(d);
        for (const Mark& m : s.marks)
            if (m.site == site) ty = m.type;
        s.members.push_back(j);
        s.marks.push_back({ty, site});
    }
    for (Site i = 0; i < N; ++i) {
        TypeSet A = 0;
        while (A == 0) A = static_cast<TypeSet>(rng.below(1 << d));
        s.sets[i] = A;
    }
    s.canonicalize();
    return c;
}

}  // namespace moran
