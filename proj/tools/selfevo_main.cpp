#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "selfevo/error.hpp"
#include "selfevo/pipeline.hpp"

using namespace selfevo;

namespace {

struct Options {
    std::string config_path;
    std::string run_dir;
    std::vector<std::string> overrides;
    bool json_output = false;
    std::optional<int> iteration;
    bool verbose = false;
    bool quiet = false;
};

std::optional<RunConfig> optional_config(const Options& o) {
    if (o.config_path.empty()) {
        if (!o.overrides.empty()) throw ConfigError("--set requires --config");
        return std::nullopt;
    }
    auto config = load_run_config(o.config_path, o.overrides);
    if (!o.run_dir.empty()) config.run_dir = fs::absolute(o.run_dir).lexically_normal();
    return config;
}

RunConfig required_config(const Options& o) {
    if (o.config_path.empty()) throw ConfigError("--config is required for this command");
    auto config = *optional_config(o);
    if (config.run_dir.empty()) throw ConfigError("no run directory: pass --run or set run_dir in the config");
    return config;
}

fs::path required_run_dir(const Options& o, const std::optional<RunConfig>& config) {
    if (!o.run_dir.empty()) return fs::absolute(o.run_dir).lexically_normal();
    if (config && !config->run_dir.empty()) return config->run_dir;
    throw ConfigError("--run is required for this command");
}

void print_manifest_result(const Options& o, const RunManifest& m, const fs::path& path) {
    if (o.json_output) {
        std::cout << json{{"manifest", path.string()}, {"status", to_string(m.status)}}.dump() << "\n";
    } else {
        std::cout << path.string() << "\n";
    }
}

int cmd_ingest(const Options& o) {
    auto pipeline = Pipeline::create(required_config(o));
    const auto& m = pipeline.manifest();
    if (o.json_output) {
        std::cout << json{{"manifest", pipeline.manifest_path().string()},
                          {"documents", m.inputs.at("corpus").at("count")},
                          {"eval_pairs", m.inputs.at("eval").at("count")},
                          {"baseline_bleu", m.baseline_bleu}}
                         .dump()
                  << "\n";
    } else {
        std::cout << pipeline.manifest_path().string() << "\n";
    }
    return 0;
}

int cmd_phase(const Options& o, Phase phase) {
    const auto config = optional_config(o);
    auto pipeline = Pipeline::open(required_run_dir(o, config), config);
    int iteration = 0;
    if (o.iteration) {
        iteration = *o.iteration;
    } else if (auto next = pipeline.next_phase()) {
        iteration = next->first;
    } else {
        throw PreconditionError("run is already complete");
    }
    if (!pipeline.run_phase(iteration, phase)) {
        log_info(to_string(phase) + " of iteration " + std::to_string(iteration) + " is already complete");
    }
    const auto* record = pipeline.manifest().iterations.at(iteration).find(phase);
    if (o.json_output) {
        std::cout << json{{"iteration", iteration}, {"phase", to_string(phase)}, {"details", record->details}}.dump()
                  << "\n";
    } else {
        std::cout << pipeline.manifest_path().string() << "\n";
    }
    return 0;
}

int cmd_run(const Options& o) {
    auto pipeline = Pipeline::create(required_config(o));
    const auto& m = pipeline.run();
    print_manifest_result(o, m, pipeline.manifest_path());
    return 0;
}

int cmd_resume(const Options& o) {
    const auto config = optional_config(o);
    fs::path target = required_run_dir(o, config);
    if (!fs::is_directory(target)) target = target.parent_path();
    auto pipeline = Pipeline::open(target, config);
    const auto& m = pipeline.run();
    print_manifest_result(o, m, pipeline.manifest_path());
    return 0;
}

int cmd_report(const Options& o) {
    const auto config = optional_config(o);
    const auto m = load_manifest(required_run_dir(o, config) / manifest_file_name);
    const auto rows = report_rows(m);
    if (o.json_output) {
        json out = json::array();
        for (const auto& r : rows) {
            out.push_back(json{{"iteration", r.iteration}, {"model_bleu", r.model_bleu},
                               {"relative_score", r.relative_score}});
        }
        std::cout << out.dump(2) << "\n";
    } else {
        std::cout << score_rows_csv(rows);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"selfevo: iterative instruction-data generation, selection, fine-tuning and evaluation"};
    app.require_subcommand(1, 1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool with_iteration) {
        sub->add_option("--config", o.config_path, "run config JSON")->check(CLI::ExistingFile);
        sub->add_option("--run", o.run_dir, "run directory");
        sub->add_option("--set", o.overrides, "override a config key (dotted.key=value), repeatable")
            ->allow_extra_args(false);
        sub->add_flag("--json", o.json_output, "machine-readable output on stdout");
        sub->add_flag("-v,--verbose", o.verbose, "debug logging");
        sub->add_flag("-q,--quiet", o.quiet, "warnings only");
        if (with_iteration) sub->add_option("--iteration", o.iteration, "iteration index (default: next pending)");
    };

    std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
    auto command = [&](const char* name, const char* help, bool with_iteration, std::function<int()> fn) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, with_iteration);
        commands.emplace_back(sub, std::move(fn));
    };
    command("ingest", "validate inputs and initialize a run directory", false, [&] { return cmd_ingest(o); });
    command("generate", "generate the QA dataset of one iteration", true, [&] { return cmd_phase(o, Phase::generate); });
    command("score", "score one iteration's dataset with the fixed scorer", true,
            [&] { return cmd_phase(o, Phase::score); });
    command("select", "select historical samples for one iteration", true,
            [&] { return cmd_phase(o, Phase::select); });
    command("train", "assemble the training set and fine-tune", true, [&] { return cmd_phase(o, Phase::train); });
    command("evaluate", "evaluate the model produced by one iteration", true,
            [&] { return cmd_phase(o, Phase::evaluate); });
    command("run", "initialize a run and execute every iteration", false, [&] { return cmd_run(o); });
    command("resume", "continue a run from its first incomplete phase", false, [&] { return cmd_resume(o); });
    command("report", "print per-iteration scores", false, [&] { return cmd_report(o); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    set_log_level(o.verbose ? LogLevel::debug : o.quiet ? LogLevel::warn : LogLevel::info);
    try {
        for (auto& [sub, fn] : commands) {
            if (sub->parsed()) return fn();
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
