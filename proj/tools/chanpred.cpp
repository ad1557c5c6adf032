// chanpred: simulate multipath channels, estimate their transfer functions,
// train the dilated CNN predictor and report prediction errors.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "chanpred/error.hpp"
#include "chanpred/estimation.hpp"
#include "chanpred/io.hpp"
#include "chanpred/pipeline.hpp"
#include "chanpred/render.hpp"
#include "chanpred/trainer.hpp"

namespace fs = std::filesystem;
using namespace chanpred;

namespace {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfig = 2,
    kIo = 3,
    kValidation = 4,
    kGate = 5,
    kDivergence = 6,
};

struct Overrides {
    std::string config;
    std::optional<std::size_t> runs;
    std::optional<std::size_t> steps;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> m;
    std::optional<double> lr;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::uint64_t> split_seed;
    bool noiseless = false;
    bool frozen_doppler = false;
};

io::PipelineConfig resolve(const Overrides& o) {
    io::PipelineConfig c = o.config.empty() ? io::PipelineConfig{} : io::load_config(o.config);
    if (o.runs) c.runs = *o.runs;
    if (o.steps) c.sim.n_steps = *o.steps;
    if (o.seed) c.sim.seed = *o.seed;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.m) c.train.m = *o.m;
    if (o.lr) c.train.lr = *o.lr;
    if (o.train_seed) c.train.seed = *o.train_seed;
    if (o.split_seed) c.split_seed = *o.split_seed;
    if (o.noiseless) c.sim.add_noise = false;
    if (o.frozen_doppler) c.sim.intra_block_doppler = false;
    c.sim.validate();
    return c;
}

std::string stem_with(const fs::path& base, const std::string& suffix) {
    fs::path p = base;
    p.replace_extension();
    return p.string() + suffix;
}

est::EstimateSeries load_series(const fs::path& path) {
    est::EstimateSeries series = est::read_ctfs(path);
    io::read_series_metadata(path, series);
    return series;
}

void print_report(const train::EvalReport& report) {
    std::printf("%4s %10s %10s %10s %10s\n", "dt", "train", "val", "test", "trivial");
    for (const auto& r : report.rows) {
        std::printf("%4zu %10.4f %10.4f %10.4f %10.4f\n", r.delta_t, r.mse_train, r.mse_val, r.mse_test,
                    r.mse_trivial);
    }
}

int cmd_simulate(const Overrides& o, const fs::path& out, unsigned threads, bool quiet) {
    const auto cfg = resolve(o);
    const auto t0 = std::chrono::steady_clock::now();
    auto series = est::run_estimation_campaign(cfg.sim, cfg.runs, threads, [&](std::size_t done, std::size_t n) {
        if (!quiet) std::fprintf(stderr, "simulate: run %zu/%zu done\n", done, n);
    });
    est::write_ctfs(out, series);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_series_metadata(out, series,
                              {{"manifest", {{"command", "simulate"},
                                             {"config", io::to_json(cfg)},
                                             {"output", out.string()},
                                             {"elapsed_s", secs}}}});
    std::printf("wrote %s: %zu runs x %zu steps x %zu bins\n", out.string().c_str(), series.n_runs(),
                series.n_steps(), series.n_freq());
    return kOk;
}

int cmd_train(const Overrides& o, const fs::path& data, const fs::path& out, bool quiet) {
    const auto cfg = resolve(o);
    const auto series = load_series(data);
    const auto dataset = train::build_dataset(series, cfg.split_seed);
    const auto spec = nn::NetworkSpec::standard(cfg.train.m);

    const auto t0 = std::chrono::steady_clock::now();
    auto result = train::train(spec, dataset, cfg.train,
                               [&](std::size_t epoch, std::size_t step, std::size_t n, double loss) {
                                   if (!quiet && (step == n || step % 16 == 0)) {
                                       std::fprintf(stderr, "epoch %zu step %zu/%zu loss %.5f\n", epoch, step, n, loss);
                                   }
                               });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    io::write_checkpoint(out, {spec, result.params, result.steps, cfg.train.seed});
    const auto report = train::evaluate_report(spec, result.params, dataset, result.history);
    io::write_report_csv(stem_with(out, ".report.csv"), report);
    auto j = io::report_to_json(report);
    j["manifest"] = {{"command", "train"},
                     {"config", io::to_json(cfg)},
                     {"dataset", data.string()},
                     {"checkpoint", out.string()},
                     {"tool_version", io::kToolVersion},
                     {"train_elapsed_s", secs}};
    io::write_json(stem_with(out, ".report.json"), j);
    print_report(report);
    return kOk;
}

int cmd_evaluate(const Overrides& o, const fs::path& data, const fs::path& ckpt_path, const fs::path& report_path) {
    const auto cfg = resolve(o);
    const auto series = load_series(data);
    const auto ckpt = io::read_checkpoint(ckpt_path);
    const auto dataset = train::build_dataset(series, cfg.split_seed);
    const auto report = train::evaluate_report(ckpt.spec, ckpt.params, dataset);
    if (!report_path.empty()) {
        io::write_report_csv(report_path, report);
        auto j = io::report_to_json(report);
        j["manifest"] = {{"command", "evaluate"},
                         {"dataset", data.string()},
                         {"checkpoint", ckpt_path.string()},
                         {"split_seed", cfg.split_seed}};
        io::write_json(stem_with(report_path, ".json"), j);
    }
    print_report(report);
    return kOk;
}

int cmd_gradcheck(const std::vector<std::uint64_t>& seeds, bool inject) {
    bool pass = true;
    for (auto seed : seeds) {
        const auto r = pipeline::gradcheck_instance(seed, inject);
        std::printf("seed %llu: %zu gradients, max rel error %.3e\n", static_cast<unsigned long long>(seed),
                    r.n_checked, r.max_rel_error);
        for (std::size_t l = 0; l < r.layer_max_rel_error.size(); ++l) {
            std::printf("  layer %zu: %.3e\n", l, r.layer_max_rel_error[l]);
        }
        pass = pass && r.max_rel_error < pipeline::kGradCheckGate;
    }
    std::printf("%s (gate %.0e)\n", pass ? "PASS" : "FAIL", pipeline::kGradCheckGate);
    return pass ? kOk : kGate;
}

int cmd_render(const Overrides& o, const fs::path& data, const fs::path& out, const std::string& mode,
               std::size_t run, std::size_t t0, std::size_t dt, const fs::path& ckpt_path) {
    if (mode == "scene") {
        const auto cfg = resolve(o);
        sim::Rng rng(est::run_seed(cfg.sim.seed, run));
        const auto state = sim::init_simulation(cfg.sim, rng);
        render::write_file(out, render::scene_image(state, cfg.sim).to_ppm());
        return kOk;
    }
    const auto series = load_series(data);
    if (run >= series.n_runs()) throw ValidationError("run index out of range");
    if (mode == "raster") {
        render::write_file(out, render::transfer_raster(series, run).to_ppm());
        return kOk;
    }
    if (mode != "spectra") throw ConfigError("unknown render mode '" + mode + "'");
    if (ckpt_path.empty()) throw ConfigError("spectra mode needs --checkpoint");
    const auto ckpt = io::read_checkpoint(ckpt_path);
    if (dt < 1 || dt > ckpt.spec.m) throw ValidationError("--dt must be within [1, m]");
    if (t0 + dt >= series.n_steps()) throw ValidationError("t0 + dt is beyond the end of the series");
    const auto pred = train::predict_ahead(ckpt.spec, ckpt.params, series, run, t0);
    const auto rows = render::spectra_rows(series.block(run, t0), series.block(run, t0 + dt), pred[dt - 1]);
    render::write_file(out, render::spectra_csv(rows));
    std::printf("dB MSE vs future: predicted %.3f, present %.3f\n",
                render::db_mse(rows, &render::SpectraRow::predicted, &render::SpectraRow::observed_future),
                render::db_mse(rows, &render::SpectraRow::observed_t0, &render::SpectraRow::observed_future));
    return kOk;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--runs", o.runs, "number of independent runs");
    cmd->add_option("--steps", o.steps, "time steps per run");
    cmd->add_option("--seed", o.seed, "simulation base seed");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--m", o.m, "prediction horizon");
    cmd->add_option("--lr", o.lr, "ADAM learning rate");
    cmd->add_option("--train-seed", o.train_seed, "initialization/shuffle seed");
    cmd->add_option("--split-seed", o.split_seed, "dataset split seed");
    cmd->add_flag("--noiseless", o.noiseless, "disable AWGN");
    cmd->add_flag("--frozen-doppler", o.frozen_doppler, "hold the Doppler phase constant within a block");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multipath channel simulation and CNN-based transfer-function prediction"};
    app.require_subcommand(1);
    app.fallthrough();
    Overrides o;
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    auto* sim_cmd = app.add_subcommand("simulate", "simulate runs and write a CTFS estimate series");
    fs::path sim_out;
    unsigned threads = 1;
    add_overrides(sim_cmd, o);
    sim_cmd->add_option("-o,--out", sim_out, "output CTFS file")->required();
    sim_cmd->add_option("-j,--threads", threads, "worker threads (output is independent of this)");

    auto* train_cmd = app.add_subcommand("train", "train the predictor and write checkpoint + report");
    fs::path train_data, train_out;
    add_overrides(train_cmd, o);
    train_cmd->add_option("-d,--data", train_data, "CTFS dataset")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("-o,--out", train_out, "output CPNN checkpoint")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
    fs::path eval_data, eval_ckpt, eval_report;
    add_overrides(eval_cmd, o);
    eval_cmd->add_option("-d,--data", eval_data, "CTFS dataset")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("-k,--checkpoint", eval_ckpt, "CPNN checkpoint")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("-r,--report", eval_report, "CSV report path (JSON written alongside)");

    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradients");
    std::vector<std::uint64_t> gc_seeds{1, 2, 3};
    bool inject = false;
    gc_cmd->add_option("--seeds", gc_seeds, "instance seeds");
    gc_cmd->add_flag("--inject-sign-bug", inject, "flip one analytic gradient (harness self-test)");

    auto* render_cmd = app.add_subcommand("render", "emit rasters, scene images or spectra CSVs");
    fs::path render_data, render_out, render_ckpt;
    std::string mode = "raster";
    std::size_t run = 0, t0 = 0, dt = 1;
    add_overrides(render_cmd, o);
    render_cmd->add_option("-d,--data", render_data, "CTFS dataset");
    render_cmd->add_option("-o,--out", render_out, "output file")->required();
    render_cmd->add_option("--mode", mode, "raster | spectra | scene")
        ->check(CLI::IsMember({"raster", "spectra", "scene"}));
    render_cmd->add_option("--run", run, "run index");
    render_cmd->add_option("--t0", t0, "origin time step (spectra)");
    render_cmd->add_option("--dt", dt, "prediction distance (spectra)");
    render_cmd->add_option("-k,--checkpoint", render_ckpt, "CPNN checkpoint (spectra)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*sim_cmd) return cmd_simulate(o, sim_out, threads, quiet);
        if (*train_cmd) return cmd_train(o, train_data, train_out, quiet);
        if (*eval_cmd) return cmd_evaluate(o, eval_data, eval_ckpt, eval_report);
        if (*gc_cmd) return cmd_gradcheck(gc_seeds, inject);
        if (*render_cmd) {
            if (mode != "scene" && render_data.empty()) throw ConfigError("--data is required for this mode");
            return cmd_render(o, render_data, render_out, mode, run, t0, dt, render_ckpt);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kValidation;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
