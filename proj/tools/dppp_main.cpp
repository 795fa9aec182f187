#include <CLI11.hpp>

#include <cstdio>
#include <exception>

#include "dppp/orchestration.hpp"

namespace {

// Config resolution order: defaults <- --config file (or $DPPP_CONFIG) <-
// command-line flags.
struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string workdir;
};

dppp::run::RunConfig resolve_config(const CommonOpts& opts) {
    auto config = dppp::run::RunConfig::load(opts.config_path);
    if (opts.seed_set) {
        config.seed = opts.seed;
    }
    if (!opts.workdir.empty()) {
        config.workdir = opts.workdir;
    }
    return config;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dppp: prompt-driven pedestrian dataset factory and de-stylization trainer"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--config", common.config_path,
                   "Config JSON (default: $DPPP_CONFIG if set)");
    app.add_option("--workdir", common.workdir, "Working directory for run artifacts");
    auto* seed_opt = app.add_option("--seed", common.seed, "Global RNG seed");

    // forge
    auto* forge = app.add_subcommand("forge", "Generate identity specs and prompts");
    std::string catalog, forge_out;
    int forge_count = -1;
    forge->add_option("--catalog", catalog, "Attribute catalog JSON (default: embedded)");
    forge->add_option("--count", forge_count, "Number of identities");
    forge->add_option("--out", forge_out, "Output directory (overrides workdir)");

    // synth
    auto* synth = app.add_subcommand("synth", "Synthesize the annotated dataset");
    std::string specs_path, grid, backend, segmenter, synth_out;
    synth->add_option("--specs", specs_path, "identity_specs.json path");
    synth->add_option("--grid", grid, "Canvas grid, e.g. 6x7");
    synth->add_option("--backend", backend, "mock or http:URL");
    synth->add_option("--segmenter", segmenter, "mock or http:URL");
    synth->add_option("--out", synth_out, "Output directory (overrides workdir)");

    // train
    auto* train = app.add_subcommand("train", "Run a training stage");
    std::string stage, data_dir;
    train->add_option("--stage", stage, "2a or 2b")->required();
    train->add_option("--data", data_dir, "Dataset root (default: workdir/dataset)");

    // eval
    auto* evalc = app.add_subcommand("eval", "Direct-transfer retrieval evaluation");
    dppp::run::EvalOptions eval_opts;
    evalc->add_option("--query", eval_opts.query_dir, "Query image directory")->required();
    evalc->add_option("--gallery", eval_opts.gallery_dir, "Gallery image directory")
        ->required();
    evalc->add_option("--ckpt", eval_opts.checkpoint, "Stage-2b checkpoint");
    evalc->add_option("--report", eval_opts.report_path, "Report JSON output path");
    evalc->add_option("--pairs", eval_opts.histogram_pairs, "Distance histogram pair count");
    evalc->add_option("--bins", eval_opts.histogram_bins, "Distance histogram bin count");

    // plot
    auto* plot = app.add_subcommand("plot", "Render the report histogram as SVG");
    std::string report_in, svg_out = "histogram.svg";
    plot->add_option("--report", report_in, "Report JSON")->required();
    plot->add_option("--out", svg_out, "SVG output path");

    CLI11_PARSE(app, argc, argv);
    common.seed_set = seed_opt->count() > 0;

    try {
        auto config = resolve_config(common);
        if (*forge) {
            if (!catalog.empty()) config.catalog_path = catalog;
            if (forge_count > 0) config.forge_count = forge_count;
            if (!forge_out.empty()) config.workdir = forge_out;
            dppp::run::run_forge(config);
        } else if (*synth) {
            if (!grid.empty()) config.grid = grid;
            if (!backend.empty()) config.generator_backend = backend;
            if (!segmenter.empty()) config.segmenter_backend = segmenter;
            if (!synth_out.empty()) config.workdir = synth_out;
            dppp::run::run_synth(config, specs_path);
        } else if (*train) {
            if (stage == "2a") {
                dppp::run::run_train_stage2a(config, data_dir);
            } else if (stage == "2b") {
                dppp::run::run_train_stage2b(config, data_dir);
            } else {
                std::fprintf(stderr, "unknown stage '%s' (expected 2a or 2b)\n",
                             stage.c_str());
                return 2;
            }
        } else if (*evalc) {
            dppp::run::run_eval(config, eval_opts);
        } else if (*plot) {
            dppp::run::run_plot(report_in, svg_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
