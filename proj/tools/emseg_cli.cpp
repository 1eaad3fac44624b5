#include <CLI11.hpp>
#include <iostream>
#include <spdlog/spdlog.h>

#include "emseg/errors.hpp"
#include "emseg/parallel.hpp"
#include "emseg/pipeline/config.hpp"
#include "emseg/pipeline/pipeline.hpp"
#include "emseg/pipeline/report.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kPipelineExit = 3;

struct ConfigArgs {
    std::string path;
    std::string output;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("config", args.path, "Experiment config file (key = value lines)")->required();
    cmd->add_option("-o,--output", args.output, "Override output_dir from the config");
}

emseg::pipeline::ExperimentConfig load(const ConfigArgs& args) {
    auto config = emseg::pipeline::load_config(args.path);
    if (!args.output.empty()) {
        config.output_dir = args.output;
    }
    return config;
}

void print_report(const emseg::pipeline::Report& report) { std::cout << report.text; }

} // namespace

int main(int argc, char** argv) {
    using namespace emseg::pipeline;

    CLI::App app{"Weakly supervised infiltration segmentation on synthetic phantoms"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "Log debug messages");
    app.add_flag("-q,--quiet", quiet, "Log warnings and errors only");

    ConfigArgs phantom_args;
    ConfigArgs prior_args;
    ConfigArgs seg_args;
    ConfigArgs eval_args;
    ConfigArgs run_args;
    std::string seg_model;
    std::string report_dir;

    auto* phantom = app.add_subcommand("phantom", "Synthetic case generation");
    phantom->require_subcommand(1);
    auto* phantom_gen = phantom->add_subcommand("gen", "Generate and normalize the phantom cases");
    add_config_args(phantom_gen, phantom_args);

    auto* prior = app.add_subcommand("prior", "Physiological prior classifier");
    prior->require_subcommand(1);
    auto* prior_train = prior->add_subcommand("train", "Train the prior and write prior maps");
    add_config_args(prior_train, prior_args);

    auto* seg = app.add_subcommand("seg", "Segmentation network");
    seg->require_subcommand(1);
    auto* seg_train = seg->add_subcommand("train", "Train one segmentation model");
    add_config_args(seg_train, seg_args);
    seg_train->add_option("--model", seg_model, "Model to train")
        ->required()
        ->check(CLI::IsMember({std::string(kEmredl), std::string(kBaseline)}));

    auto* eval = app.add_subcommand("eval", "Train what is missing, then evaluate every configured model");
    add_config_args(eval, eval_args);

    auto* run = app.add_subcommand("run", "Run the full experiment and print the summary");
    add_config_args(run, run_args);

    auto* report = app.add_subcommand("report", "Summarize a completed run directory");
    report->add_option("run-dir", report_dir, "Run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigExit;
    }

    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
    spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
    spdlog::debug("using {} worker threads", emseg::thread_budget());

    try {
        if (phantom_gen->parsed()) {
            run_experiment(load(phantom_args), {Goal::Cases, "", true});
        } else if (prior_train->parsed()) {
            run_experiment(load(prior_args), {Goal::Prior, "", true});
        } else if (seg_train->parsed()) {
            run_experiment(load(seg_args), {Goal::Model, seg_model, true});
        } else if (eval->parsed()) {
            run_experiment(load(eval_args), {Goal::Evaluate, "", true});
        } else if (run->parsed()) {
            const auto dir = run_experiment(load(run_args));
            print_report(emit_report(dir));
        } else if (report->parsed()) {
            print_report(emit_report(report_dir));
        }
    } catch (const emseg::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kConfigExit;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kPipelineExit;
    }
    return 0;
}
