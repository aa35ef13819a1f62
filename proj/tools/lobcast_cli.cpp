// lobcast: LOB next-event forecasting and return-sign backtesting.
//
//   lobcast <command> [--data FILE] [--config FILE] [--predictor NAME] [--seed N]
//                     [--t0 T] [--out DIR] [--format csv|json] [--set key=value ...]
//
// Settings come from defaults, then the config file (--config or $LOBCAST_CONFIG),
// then flags.

#include "lobcast/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Flags {
    std::string data, config, predictor, seed, t0, out, format, grid, scenarios;
    std::vector<std::string> sets;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--data", f.data, "LOB CSV file");
    sub->add_option("--config", f.config, "key = value config file");
    sub->add_option("--predictor", f.predictor, "oracle | naive | ma | hawkes");
    sub->add_option("--seed", f.seed, "base random seed");
    sub->add_option("--t0", f.t0, "scenario start (epoch seconds)");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--format", f.format, "csv | json");
    sub->add_option("--grid", f.grid, "hyperparameter grid CSV (tune)");
    sub->add_option("--scenarios", f.scenarios, "number of Monte Carlo scenarios");
    sub->add_option("--set", f.sets, "extra key=value setting (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace lobcast::cli;
    CLI::App app{"lobcast: Hawkes + COE return-sign forecasting on limit order book data"};
    app.require_subcommand(1);
    Flags flags;
    for (const auto& name : command_names()) add_flags(app.add_subcommand(name), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    RunConfig cfg;
    try {
        std::string config_path = flags.config;
        if (config_path.empty())
            if (const char* env = std::getenv(config_env_var)) config_path = env;
        if (!config_path.empty()) load_config_file(cfg, config_path);

        auto set = [&](const char* key, const std::string& v) {
            if (!v.empty()) apply_setting(cfg, key, v);
        };
        set("data", flags.data);
        set("predictor", flags.predictor);
        set("seed", flags.seed);
        set("t0", flags.t0);
        set("out", flags.out);
        set("format", flags.format);
        set("grid", flags.grid);
        set("scenarios", flags.scenarios);
        for (const auto& kv : flags.sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
            apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return run_command(command, cfg, std::cerr);
}
