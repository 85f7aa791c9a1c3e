// moodveil: synthesize behavioural datasets, run cross-validated mood models,
// sweep the privacy/performance tradeoff, and audit representations.
//
// Every subcommand reads an optional key=value --config file; command-line
// flags override file values key for key. Runs land under --out, the
// MOODVEIL_OUT environment root, or ./out, and refuse to overwrite an
// existing directory unless --force is given.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "moodveil/pipeline.hpp"

namespace {

using moodveil::Config;

struct CommonFlags {
    std::string config_path;
    std::string seed;
    std::string jobs;
    std::string out;
    bool force = false;

    void attach(CLI::App* cmd, bool wants_seed = true) {
        cmd->add_option("--config", config_path, "key=value config file")
            ->check(CLI::ExistingFile);
        if (wants_seed) cmd->add_option("--seed", seed, "root RNG seed");
        cmd->add_option("--jobs", jobs, "worker threads");
        cmd->add_option("--out", out, "output directory");
        cmd->add_flag("--force", force, "overwrite an existing output directory");
    }

    // File values first, then flag overrides, then the out-dir fallback chain.
    Config resolve(const std::string& cmd_name) const {
        Config c = config_path.empty() ? Config() : Config::from_file(config_path);
        if (!seed.empty()) c.set("seed", seed);
        if (!jobs.empty()) c.set("jobs", jobs);
        if (!out.empty()) c.set("out", out);
        if (c.get("out", "").empty()) {
            const char* root = std::getenv("MOODVEIL_OUT");
            c.set("out", (root ? std::string(root) : std::string("out")) + "/" + cmd_name);
        }
        if (force) c.set("force", "1");
        return c;
    }
};

void require_seed(const Config& c, const std::string& cmd) {
    if (c.get("seed", "").empty())
        moodveil::fail(cmd + ": an explicit seed is required (--seed N or seed= in --config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"privacy-aware multimodal mood prediction toolkit"};
    app.require_subcommand(1);

    CommonFlags gen_flags, run_flags, sweep_flags, audit_flags;
    std::string run_modality, run_model, run_split;
    std::string sweep_modality, audit_modality, audit_method;
    bool describe = false;
    std::string report_dir;

    auto* gen = app.add_subcommand("generate", "synthesize an events/labels dataset");
    gen_flags.attach(gen);
    gen->add_flag("--describe", describe, "print a dataset summary after writing");
    gen->callback([&] {
        Config c = gen_flags.resolve("generate");
        require_seed(c, "generate");
        auto synth = moodveil::synthgen::SynthConfig::from_config(c);
        auto out = moodveil::pipeline::cmd_generate(synth, c.get("out", ""),
                                                    c.get_bool("force", false), describe);
        std::cout << "events: " << out.events.string() << "\n";
        std::cout << "labels: " << out.labels.string() << "\n";
        if (describe) std::cout << out.summary;
    });

    auto* run = app.add_subcommand("run", "cross-validated evaluation per modality and model");
    run_flags.attach(run);
    run->add_option("--modality", run_modality, "text|apps|both|all or comma list");
    run->add_option("--model", run_model, "majority|svm|mlp|nimlp|all or comma list");
    run->add_option("--split", run_split, "nested|user");
    run->callback([&] {
        Config c = run_flags.resolve("run");
        require_seed(c, "run");
        if (!run_modality.empty()) c.set("modality", run_modality);
        if (!run_model.empty()) c.set("model", run_model);
        if (!run_split.empty()) c.set("split", run_split);
        auto cfg = moodveil::pipeline::RunConfig::from_config(c);
        auto out = moodveil::pipeline::cmd_run(cfg);
        std::cout << moodveil::read_file((out.dir / "report.txt").string());
        std::cout << "run directory: " << out.dir.string() << "\n";
    });

    auto* sweep = app.add_subcommand("sweep", "noise/sparsity tradeoff sweep");
    sweep_flags.attach(sweep);
    sweep->add_option("--modality", sweep_modality, "text|apps|both");
    sweep->callback([&] {
        Config c = sweep_flags.resolve("sweep");
        require_seed(c, "sweep");
        if (!sweep_modality.empty()) c.set("modality", sweep_modality);
        auto cfg = moodveil::pipeline::SweepConfig::from_config(c);
        auto out = moodveil::pipeline::cmd_sweep(cfg);
        std::cout << moodveil::read_file((out.dir / "selected.txt").string());
        std::cout << "sweep directory: " << out.dir.string() << "\n";
    });

    auto* aud = app.add_subcommand("audit", "identity probes and 2-D projections");
    audit_flags.attach(aud);
    aud->add_option("--modality", audit_modality, "text|apps|both|all or comma list");
    aud->add_option("--method", audit_method, "tsne|pca projection method");
    aud->callback([&] {
        Config c = audit_flags.resolve("audit");
        require_seed(c, "audit");
        if (!audit_modality.empty()) c.set("modality", audit_modality);
        if (!audit_method.empty()) c.set("audit.method", audit_method);
        auto cfg = moodveil::pipeline::AuditConfig::from_config(c);
        auto out = moodveil::pipeline::cmd_audit(cfg);
        std::cout << moodveil::read_file((out.dir / "audit.csv").string());
        std::cout << "audit directory: " << out.dir.string() << "\n";
    });

    auto* rep = app.add_subcommand("report", "rebuild report tables from a run's metrics.csv");
    rep->add_option("dir", report_dir, "run directory holding metrics.csv")->required();
    rep->callback([&] { std::cout << moodveil::pipeline::cmd_report(report_dir); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
