#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "moran/errors.hpp"
#include "moran/experiments.hpp"

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
};

void add_flags(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--seed", f.seed, "override the config seed");
    cmd->add_option("--out", f.out, "override the output directory");
    cmd->add_option("--workers", f.workers, "worker threads");
}

int run(const Flags& f, std::optional<moran::ExperimentKind> kind) {
    moran::ExperimentConfig cfg = f.config.empty() ? moran::parse_config("{}") : moran::load_config(f.config);
    if (kind) cfg.experiment = *kind;
    if (f.seed) cfg.seed = *f.seed;
    if (f.out) cfg.out = *f.out;
    if (f.workers) cfg.workers = *f.workers;
    const moran::RunManifest m = moran::run_experiment(cfg);
    std::cout << m.experiment << ": wrote " << m.outputs.size() << " file(s) to " << cfg.out << " (config "
              << m.configHash << ", " << m.wallSeconds << " s)\n";
    for (const auto& o : m.outputs) std::cout << "  " << o.name << "  " << o.bytes << " bytes\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Historical Moran model toolkit"};
    app.set_version_flag("--version", moran::kVersion);
    app.require_subcommand(1);

    Flags flags;
    std::vector<std::pair<CLI::App*, std::optional<moran::ExperimentKind>>> cmds;
    auto* runCmd = app.add_subcommand("run", "run the experiment named in the config");
    add_flags(runCmd, flags);
    cmds.emplace_back(runCmd, std::nullopt);
    for (auto kind : moran::all_experiments()) {
        auto* cmd = app.add_subcommand(moran::experiment_name(kind), std::string("run ") + moran::experiment_name(kind));
        add_flags(cmd, flags);
        cmds.emplace_back(cmd, kind);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& [cmd, kind] : cmds)
            if (cmd->parsed()) return run(flags, kind);
    } catch (const moran::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return 2;
    } catch (const moran::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
