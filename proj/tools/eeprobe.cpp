// Command-line front end: one subcommand per experiment, reports written
// to --out as JSON + CSV + gnuplot data.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eeprobe/eeprobe.hpp"

using namespace eeprobe;

namespace {

struct GlobalOpts {
    std::string backend = "sim";
    std::string out = ".";
    std::uint64_t seed = 1;
    std::vector<int> cpus = {0};
    bool json_to_stdout = false;
    bool force = false;
    std::string power_file;
};

RunConfig base_config(const GlobalOpts& g, Experiment experiment) {
    RunConfig cfg;
    cfg.experiment = experiment;
    cfg.backend.kind = g.backend == "hw" || g.backend == "hardware"
                           ? BackendKind::hardware
                           : BackendKind::simulation;
    if (!g.power_file.empty()) {
        cfg.backend.power_source = PowerSource::external_file;
        cfg.backend.power_file = g.power_file;
    } else if (cfg.backend.kind == BackendKind::hardware) {
        cfg.backend.power_source = PowerSource::rapl;
    }
    cfg.backend.seed = g.seed;
    cfg.seed = g.seed;
    cfg.cpus = g.cpus;
    cfg.out_dir = g.out;
    cfg.force = g.force;
    return cfg;
}

int execute(const RunConfig& cfg, const GlobalOpts& g) {
    std::string error;
    int rc = run(cfg, &error);
    if (rc != 0) {
        std::cerr << "eeprobe: " << error << "\n";
        return rc;
    }
    if (g.json_to_stdout) {
        std::string path =
            cfg.out_dir + "/" + std::string(to_string(cfg.experiment)) + ".report.json";
        std::ifstream in(path);
        std::cout << in.rdbuf();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"energy-efficiency mechanism probes for x86 servers"};
    app.require_subcommand(1);
    app.fallthrough(); // global options may follow the subcommand

    GlobalOpts g;
    app.add_option("--backend", g.backend, "sim or hw")->check(CLI::IsMember(
        {"sim", "simulation", "hw", "hardware"}));
    app.add_option("--out", g.out, "output directory");
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--cpus", g.cpus, "logical CPUs to use")->delimiter(',');
    app.add_flag("--json", g.json_to_stdout, "print the report JSON to stdout");
    app.add_flag("--force", g.force, "skip the userspace-governor requirement");
    app.add_option("--power-file", g.power_file, "external power log (t_ns,watts lines)");

    int reps_pstate = 1000;
    std::int64_t from_khz = 1'500'000, to_khz = 2'600'000;
    std::string trigger = "random";
    auto* pstate = app.add_subcommand("pstate", "core frequency transition latency");
    pstate->add_option("--from", from_khz, "start frequency in kHz");
    pstate->add_option("--to", to_khz, "target frequency in kHz");
    pstate->add_option("--reps", reps_pstate, "repetitions");
    pstate->add_option("--trigger", trigger, "random or immediate")
        ->check(CLI::IsMember({"random", "immediate"}));

    int reps_forced = 1000;
    std::int64_t low_khz = 1'200'000, high_khz = 2'400'000;
    auto* forced = app.add_subcommand("ufs-forced", "forced uncore switch timing");
    forced->add_option("--low-khz", low_khz, "pinned low uncore frequency");
    forced->add_option("--high-khz", high_khz, "pinned high uncore frequency");
    forced->add_option("--reps", reps_forced, "repetitions");

    int reps_loop = 100;
    auto* loop = app.add_subcommand("ufs-loop", "uncore control-loop reaction time");
    loop->add_option("--reps", reps_loop, "repetitions");

    int reps_cstate = 100;
    std::string relation = "local";
    std::string khz_list = "1200000,1800000,2400000,3000000";
    auto* cstate = app.add_subcommand("cstate", "C-state wake-up latency sweep");
    cstate->add_option("--relation", relation, "local, remote_active or remote_idle");
    cstate->add_option("--khz", khz_list, "comma-separated core frequencies");
    cstate->add_option("--reps", reps_cstate, "repetitions per cell");

    std::int64_t avx_low_pct = 50, avx_period_us = 2'000'000, avx_duration_s = 300;
    std::int64_t avx_khz = 3'000'000;
    auto* avx = app.add_subcommand("avx", "AVX-512 license transition accounting");
    avx->add_option("-l,--low", avx_low_pct, "Low-phase share of the period in percent");
    avx->add_option("-p,--period", avx_period_us, "period in microseconds");
    avx->add_option("-t,--time", avx_duration_s, "total run time in seconds");
    avx->add_option("--khz", avx_khz, "core frequency during the run");
    bool avx_memory = false;
    avx->add_flag("--memory", avx_memory, "add streaming loads to the High kernel");

    std::string dp_khz = "2400000,3000000";
    std::int64_t dp_duration_s = 6;
    std::int64_t dp_cores = 36;
    auto* dp = app.add_subcommand("datapower", "data-dependent power sweep and fit");
    dp->add_option("--khz", dp_khz, "comma-separated core frequencies");
    dp->add_option("--duration", dp_duration_s, "seconds per sweep point");
    dp->add_option("--cores", dp_cores, "active cores running the kernel");

    std::int64_t ts_duration_s = 1;
    auto* ts = app.add_subcommand("tstate", "clock-modulation duty sweep");
    ts->add_option("--duration", ts_duration_s, "seconds per level");

    std::int64_t pp_duration_s = 1;
    auto* pp = app.add_subcommand("pperf", "productive-performance counter check");
    pp->add_option("--duration", pp_duration_s, "seconds per workload");

    auto* cal = app.add_subcommand("calibrate", "platform calibration file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (pstate->parsed()) {
            RunConfig cfg = base_config(g, Experiment::pstate);
            cfg.reps = reps_pstate;
            cfg.options["from"] = std::to_string(from_khz);
            cfg.options["to"] = std::to_string(to_khz);
            cfg.options["trigger"] = trigger;
            return execute(cfg, g);
        }
        if (forced->parsed()) {
            RunConfig cfg = base_config(g, Experiment::ufs_forced);
            cfg.reps = reps_forced;
            cfg.options["low-khz"] = std::to_string(low_khz);
            cfg.options["high-khz"] = std::to_string(high_khz);
            return execute(cfg, g);
        }
        if (loop->parsed()) {
            RunConfig cfg = base_config(g, Experiment::ufs_loop);
            cfg.reps = reps_loop;
            return execute(cfg, g);
        }
        if (cstate->parsed()) {
            RunConfig cfg = base_config(g, Experiment::cstate);
            cfg.reps = reps_cstate;
            cfg.options["relation"] = relation;
            cfg.options["khz"] = khz_list;
            return execute(cfg, g);
        }
        if (avx->parsed()) {
            RunConfig cfg = base_config(g, Experiment::avx);
            cfg.options["low-pct"] = std::to_string(avx_low_pct);
            cfg.options["period-us"] = std::to_string(avx_period_us);
            cfg.options["duration-s"] = std::to_string(avx_duration_s);
            cfg.options["khz"] = std::to_string(avx_khz);
            if (avx_memory)
                cfg.options["memory"] = "1";
            return execute(cfg, g);
        }
        if (dp->parsed()) {
            RunConfig cfg = base_config(g, Experiment::datapower);
            cfg.options["khz"] = dp_khz;
            cfg.options["duration-s"] = std::to_string(dp_duration_s);
            cfg.options["cores"] = std::to_string(dp_cores);
            return execute(cfg, g);
        }
        if (ts->parsed()) {
            RunConfig cfg = base_config(g, Experiment::tstate);
            cfg.options["duration-s"] = std::to_string(ts_duration_s);
            return execute(cfg, g);
        }
        if (pp->parsed()) {
            RunConfig cfg = base_config(g, Experiment::pperf);
            cfg.options["duration-s"] = std::to_string(pp_duration_s);
            return execute(cfg, g);
        }
        if (cal->parsed()) {
            RunConfig cfg = base_config(g, Experiment::chase_calibrate);
            return execute(cfg, g);
        }
    } catch (const std::exception& e) {
        std::cerr << "eeprobe: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
