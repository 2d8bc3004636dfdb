// coalflow: command-line front end.
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cli.hpp"
#include "coalflow/errors.hpp"

namespace {

using namespace coalflow::cli;

struct Flags {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Flags& f) {
    auto bind = [&](const char* flag, const char* key, const char* help) {
        sub->add_option_function<std::string>(
            flag, [&f, key](const std::string& v) { f.values[key] = v; }, help);
    };
    bind("--drift", "drift", "drift expression (zero | linear:<slope> | linsin:<slope>:<eps> | table:...)");
    bind("--seed", "seed", "master seed");
    bind("--replicates", "replicates", "number of independent realizations");
    bind("--out", "out", "output directory");
    bind("--dt", "dt", "time step");
    bind("--window", "window", "time window");
    sub->add_option("--config", f.config_path, "key = value config file; flags win");
    sub->add_option("--set", f.sets, "extra key=value setting (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coalescing stochastic flows: simulation, pullback, dual construction, verification"};
    app.require_subcommand(1);
    Flags flags;
    for (const char* name : {"simulate", "pullback", "dual", "meeting", "verify"}) {
        auto* sub = app.add_subcommand(name);
        add_common(sub, flags);
        if (std::string(name) == "verify") {
            sub->add_option_function<std::string>(
                "--scale", [&](const std::string& v) { flags.values["scale"] = v; }, "replicate multiplier");
            sub->add_option_function<std::string>(
                "--criteria", [&](const std::string& v) { flags.values["criteria"] = v; }, "comma-separated criteria");
            sub->add_flag_callback(
                "--fault-no-bridge", [&] { flags.values["fault_no_bridge"] = "true"; },
                "fault hook: drop the bridge correction in criterion 2");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        std::map<std::string, std::string> file;
        if (!flags.config_path.empty()) {
            std::ifstream in(flags.config_path);
            if (!in) throw coalflow::InputError("cannot read config file " + flags.config_path);
            std::stringstream ss;
            ss << in.rdbuf();
            file = parse_config_text(ss.str());
        }
        for (const auto& s : flags.sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) throw coalflow::InputError("--set expects key=value, got '" + s + "'");
            flags.values[s.substr(0, eq)] = s.substr(eq + 1);
        }
        const auto config = ExperimentConfig::resolve(command, file, flags.values);
        std::cerr << config.echo();
        return run_command(config, std::cerr);
    } catch (const coalflow::InputError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const coalflow::ParameterError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
