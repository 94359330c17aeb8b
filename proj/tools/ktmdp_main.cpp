#include "ktmdp/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>

namespace {

/// Thread count: --threads wins, then the KTMDP_THREADS environment
/// variable, then 1. The count only distributes work; results are
/// byte-identical for any value.
int resolve_threads(std::optional<int> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("KTMDP_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-based policy iteration on continuous-state worlds"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Experiment config file (JSON)")->required();
        sub->add_option("--out", out_dir, "Output directory for artifacts")->required();
        sub->add_option("--seed", seed, "Override the config's run seed");
        sub->add_option("--threads", threads, "Worker threads (default: KTMDP_THREADS or 1)");
    };

    add_common(app.add_subcommand("solve", "Solve one configuration and export artifacts"));
    add_common(app.add_subcommand("sweep", "Hyperparameter grid over lengthscale and lambda"));
    add_common(app.add_subcommand("eval", "Roll out a previously solved policy"));
    add_common(app.add_subcommand("baseline", "Solve with a baseline method (grid or direct)"));
    add_common(app.add_subcommand("compare", "Tabulate reports from earlier runs"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ktmdp::cli::kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    return ktmdp::cli::run_command(command, config_path, out_dir, seed,
                                   resolve_threads(threads));
}
