#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tabattack/csv.hpp"
#include "tabattack/runner.hpp"
#include "tabattack/synthetic.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    bool strict_gate = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", opts.seed, "override the master seed");
    cmd->add_option("--out", opts.out_dir, "override the output directory");
    cmd->add_option("--threads", opts.threads, "override the worker thread count");
    cmd->add_flag("--strict-gate", opts.strict_gate,
                  "fail (exit 1) when any model misses the reliability gate");
}

int run_stage(const CommonOpts& opts, tabattack::RunStage stage) {
    tabattack::RunConfig cfg = tabattack::load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out_dir) cfg.out_dir = *opts.out_dir;
    if (opts.threads) cfg.threads = *opts.threads;
    if (opts.strict_gate) cfg.strict_gate = true;
    const tabattack::RunOutcome outcome = tabattack::run_pipeline(cfg, stage, std::cout);
    return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tabattack: explanation-guided adversarial robustness evaluation "
                 "for binary tabular classifiers"};
    app.require_subcommand(1);

    CommonOpts run_opts, prepare_opts, train_opts, attack_opts, report_opts;
    auto* cmd_run = app.add_subcommand("run", "full pipeline: prepare, train, attack, report");
    add_common(cmd_run, run_opts);
    auto* cmd_prepare =
        app.add_subcommand("prepare", "load, split, filter, balance; write prepared data");
    add_common(cmd_prepare, prepare_opts);
    auto* cmd_train =
        app.add_subcommand("train", "grid-search and train the model zoo; write model JSON");
    add_common(cmd_train, train_opts);
    auto* cmd_attack =
        app.add_subcommand("attack", "run the explanation-guided attacks; write records");
    add_common(cmd_attack, attack_opts);
    auto* cmd_report = app.add_subcommand("report", "full attack plus report files and manifest");
    add_common(cmd_report, report_opts);

    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    std::string synth_out = "synthetic.csv";
    tabattack::SyntheticSpec spec;
    cmd_synth->add_option("--out", synth_out, "output CSV path");
    cmd_synth->add_option("--samples", spec.n_samples, "number of rows");
    cmd_synth->add_option("--features", spec.n_features, "number of features");
    cmd_synth->add_option("--ratio", spec.positive_ratio, "positive-class ratio in (0,1)");
    cmd_synth->add_option("--informative", spec.informative, "informative feature count");
    cmd_synth->add_option("--noise", spec.noise, "label noise level");
    cmd_synth->add_option("--seed", spec.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_run->parsed()) return run_stage(run_opts, tabattack::RunStage::Full);
        if (cmd_prepare->parsed()) return run_stage(prepare_opts, tabattack::RunStage::Prepare);
        if (cmd_train->parsed()) return run_stage(train_opts, tabattack::RunStage::Train);
        if (cmd_attack->parsed()) return run_stage(attack_opts, tabattack::RunStage::Attack);
        if (cmd_report->parsed()) return run_stage(report_opts, tabattack::RunStage::Report);
        if (cmd_synth->parsed()) {
            const tabattack::Dataset ds = tabattack::generate_synthetic(spec);
            tabattack::save_csv(ds, synth_out);
            std::cout << "wrote " << synth_out << ": " << ds.n_rows() << " rows, "
                      << ds.n_features() << " features, " << ds.count_label(1)
                      << " positive\n";
            return 0;
        }
    } catch (const tabattack::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
