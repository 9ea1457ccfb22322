#ifndef EEPROBE_RUNNER_HPP
#define EEPROBE_RUNNER_HPP

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "eeprobe/analysis.hpp"
#include "eeprobe/aux_experiments.hpp"
#include "eeprobe/avx_license.hpp"
#include "eeprobe/chase.hpp"
#include "eeprobe/core.hpp"
#include "eeprobe/cstate.hpp"
#include "eeprobe/datapower.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/freq_transition.hpp"
#include "eeprobe/hw_backend.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp"

namespace eeprobe {

enum class Experiment {
    pstate,
    ufs_forced,
    ufs_loop,
    cstate,
    avx,
    datapower,
    tstate,
    pperf,
    chase_calibrate,
};

inline const char* to_string(Experiment e) {
    switch (e) {
    case Experiment::pstate: return "pstate";
    case Experiment::ufs_forced: return "ufs-forced";
    case Experiment::ufs_loop: return "ufs-loop";
    case Experiment::cstate: return "cstate";
    case Experiment::avx: return "avx";
    case Experiment::datapower: return "datapower";
    case Experiment::tstate: return "tstate";
    case Experiment::pperf: return "pperf";
    default: return "chase-calibrate";
    }
}

inline Experiment parse_experiment(const std::string& name) {
    static const std::map<std::string, Experiment> table = {
        {"pstate", Experiment::pstate},       {"ufs-forced", Experiment::ufs_forced},
        {"ufs-loop", Experiment::ufs_loop},   {"cstate", Experiment::cstate},
        {"avx", Experiment::avx},             {"datapower", Experiment::datapower},
        {"tstate", Experiment::tstate},       {"pperf", Experiment::pperf},
        {"chase-calibrate", Experiment::chase_calibrate},
    };
    auto it = table.find(name);
    if (it == table.end())
        throw Error(errc::invalid_argument, "unknown experiment '" + name + "'");
    return it->second;
}

struct RunConfig {
    Experiment experiment = Experiment::pstate;
    BackendConfig backend;
    std::vector<int> cpus = {0};
    int reps = 100;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    bool force = false;
    // experiment-specific knobs as parsed strings
    std::map<std::string, std::string> options;
};

namespace detail {

inline std::int64_t opt_i64(const RunConfig& cfg, const std::string& key, std::int64_t dflt) {
    auto it = cfg.options.find(key);
    if (it == cfg.options.end())
        return dflt;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw Error(errc::invalid_argument, "option " + key + ": '" + it->second +
                                                "' is not an integer");
    }
}

inline std::string opt_str(const RunConfig& cfg, const std::string& key,
                           const std::string& dflt) {
    auto it = cfg.options.find(key);
    return it == cfg.options.end() ? dflt : it->second;
}

} // namespace detail

// EEPROBE_BACKEND=sim|hw and EEPROBE_MSR_PATH override the config.
inline std::unique_ptr<Backend> make_backend(BackendConfig cfg) {
    if (const char* env = std::getenv("EEPROBE_BACKEND")) {
        std::string v = env;
        if (v == "sim" || v == "simulation")
            cfg.kind = BackendKind::simulation;
        else if (v == "hw" || v == "hardware")
            cfg.kind = BackendKind::hardware;
        else
            throw Error(errc::invalid_argument, "EEPROBE_BACKEND must be sim or hw");
    }
    if (const char* env = std::getenv("EEPROBE_MSR_PATH"))
        cfg.msr_path_template = env;
    if (cfg.kind == BackendKind::simulation)
        return std::make_unique<SimBackend>(cfg);
#if defined(__linux__)
    return std::make_unique<HwBackend>(cfg);
#else
    throw Error(errc::backend_unavailable, "hardware backend requires linux");
#endif
}

// FNV-1a over the canonical serialized config; embedded in every report so
// result files are traceable to their exact configuration.
inline std::uint64_t config_hash(const RunConfig& cfg) {
    json j{{"experiment", to_string(cfg.experiment)},
           {"backend", to_string(cfg.backend.kind)},
           {"cpus", cfg.cpus},
           {"reps", cfg.reps},
           {"seed", cfg.seed},
           {"options", cfg.options}};
    std::string s = j.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Saves every knob an experiment may touch and restores it on scope exit,
// error paths included.
class KnobGuard {
public:
    KnobGuard(Backend& backend, const std::vector<int>& cpus) : backend_(&backend) {
        uncore_ = backend_->uncore_range();
        for (int cpu : cpus) {
            PerCpu s;
            s.cpu = cpu;
            s.core_khz = backend_->core_frequency(cpu);
            s.clock_mod = backend_->read_msr(cpu, msr::IA32_CLOCK_MODULATION);
            for (CState c : {CState::C1, CState::C1E, CState::C6})
                s.cstates.emplace_back(c, backend_->cstate_enabled(cpu, c));
            saved_.push_back(std::move(s));
        }
    }

    ~KnobGuard() {
        try {
            backend_->set_uncore_range(uncore_.first, uncore_.second);
        } catch (...) {
        }
        for (const auto& s : saved_) {
            try {
                backend_->set_core_frequency(s.cpu, s.core_khz);
            } catch (...) {
            }
            try {
                backend_->write_msr(s.cpu, msr::IA32_CLOCK_MODULATION, s.clock_mod);
            } catch (...) {
            }
            for (const auto& [c, enabled] : s.cstates) {
                try {
                    backend_->set_cstate_enabled(s.cpu, c, enabled);
                } catch (...) {
                }
            }
            try {
                backend_->set_workload(s.cpu, WorkloadClass::idle);
            } catch (...) {
            }
        }
    }

    KnobGuard(const KnobGuard&) = delete;
    KnobGuard& operator=(const KnobGuard&) = delete;

private:
    struct PerCpu {
        int cpu = 0;
        std::int64_t core_khz = 0;
        std::uint64_t clock_mod = 0;
        std::vector<std::pair<CState, bool>> cstates;
    };

    Backend* backend_;
    std::pair<int, int> uncore_;
    std::vector<PerCpu> saved_;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out)
        throw Error(errc::io_failure, "cannot write " + path.string());
    out << content;
    if (!out.flush())
        throw Error(errc::io_failure, "write to " + path.string() + " failed");
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

struct ExperimentOutput {
    json results;
    TableData samples;
    TableData plot; // gnuplot payload; defaults to the sample table
    bool has_plot = false;
};

// --- per-experiment drivers; each fills results JSON + sample table ---

inline ExperimentOutput drive_pstate(const RunConfig& cfg, Backend& backend) {
    std::int64_t from = opt_i64(cfg, "from", 1'500'000);
    std::int64_t to = opt_i64(cfg, "to", 2'600'000);
    TriggerMode trigger =
        opt_str(cfg, "trigger", "random") == "immediate" ? TriggerMode::immediate
                                                         : TriggerMode::random;
    auto r = measure_core_transition(backend, cfg.cpus.at(0), from, to, trigger, cfg.reps,
                                     cfg.seed);

    ExperimentOutput out;
    out.results["from_khz"] = from;
    out.results["to_khz"] = to;
    out.results["trigger"] = trigger == TriggerMode::random ? "random" : "immediate";
    out.results["latency_from_cycles"] = r.latency_from_cycles;
    out.results["latency_to_cycles"] = r.latency_to_cycles;
    out.results["summary_us"] = summarize(r.samples_us);
    out.results["histogram"] = r.hist;

    out.samples.columns = {"rep", "transition_us"};
    for (std::size_t i = 0; i < r.samples_us.size(); ++i)
        out.samples.rows.push_back({std::to_string(i), fmt(r.samples_us[i])});
    out.plot = histogram_table(r.hist);
    out.has_plot = true;
    return out;
}

inline ExperimentOutput drive_ufs_forced(const RunConfig& cfg, Backend& backend) {
    std::int64_t low = opt_i64(cfg, "low-khz", 1'200'000);
    std::int64_t high = opt_i64(cfg, "high-khz", 2'400'000);
    auto samples = measure_uncore_forced(backend, cfg.cpus.at(0), low, high, cfg.reps, cfg.seed);

    std::vector<double> delays, gaps;
    int accepted = 0;
    for (const auto& m : samples)
        if (m.valid) {
            ++accepted;
            delays.push_back(m.t_delay_us);
            gaps.push_back(m.t_gap_us);
        }

    ExperimentOutput out;
    out.results["low_khz"] = low;
    out.results["high_khz"] = high;
    out.results["accepted"] = accepted;
    out.results["rejected"] = static_cast<int>(samples.size()) - accepted;
    if (!delays.empty()) {
        out.results["t_delay_us"] = summarize(delays);
        out.results["t_gap_us"] = summarize(gaps);
        out.results["t_delay_histogram"] = build_histogram(delays, 100.0, 0.0);
    }

    out.samples.columns = {"rep", "t_delay_us", "t_gap_us", "before_cycles", "after_cycles",
                           "valid"};
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& m = samples[i];
        out.samples.rows.push_back({std::to_string(i), fmt(m.t_delay_us), fmt(m.t_gap_us),
                                    fmt(m.latency_before_cycles), fmt(m.latency_after_cycles),
                                    m.valid ? "1" : "0"});
    }
    return out;
}

inline ExperimentOutput drive_ufs_loop(const RunConfig& cfg, Backend& backend) {
    auto r = measure_uncore_controlloop(backend, cfg.cpus.at(0), cfg.reps, cfg.seed);
    if (r.samples_us.empty())
        throw Error(errc::too_few_samples, "no accepted control-loop samples");

    ExperimentOutput out;
    out.results["reaction_us"] = summarize(r.samples_us);
    out.results["rejected"] = r.rejected;
    out.results["latency_low_cycles"] = r.latency_low_cycles;
    out.results["latency_high_cycles"] = r.latency_high_cycles;

    out.samples.columns = {"rep", "reaction_us"};
    for (std::size_t i = 0; i < r.samples_us.size(); ++i)
        out.samples.rows.push_back({std::to_string(i), fmt(r.samples_us[i])});
    return out;
}

inline ExperimentOutput drive_cstate(const RunConfig& cfg, Backend& backend) {
    CpuRelation relation = CpuRelation::local;
    std::string rel = opt_str(cfg, "relation", "local");
    if (rel == "remote_idle")
        relation = CpuRelation::remote_idle;
    else if (rel == "remote_active")
        relation = CpuRelation::remote_active;
    else if (rel != "local")
        throw Error(errc::invalid_argument, "relation must be local|remote_active|remote_idle");

    std::vector<std::int64_t> khz_list;
    {
        std::istringstream in(opt_str(cfg, "khz", "1200000,1800000,2400000,3000000"));
        std::string tok;
        while (std::getline(in, tok, ','))
            khz_list.push_back(std::stoll(tok));
    }
    auto sweep = sweep_wakeup(backend, {CState::C1, CState::C1E, CState::C6}, khz_list,
                              relation, cfg.reps);

    ExperimentOutput out;
    out.results["baseline_us"] = sweep.baseline_us;
    std::map<std::string, std::vector<double>> cells;
    for (const auto& s : sweep.samples)
        cells[std::string(to_string(s.cstate)) + "@" + std::to_string(s.core_khz)].push_back(
            s.latency_us);
    json summaries = json::object();
    for (const auto& [key, lat] : cells)
        summaries[key] = summarize(lat);
    out.results["cells"] = summaries;

    out.samples.columns = {"cstate", "relation", "core_khz", "latency_us", "flagged"};
    for (const auto& s : sweep.samples)
        out.samples.rows.push_back({to_string(s.cstate), to_string(s.relation),
                                    std::to_string(s.core_khz), fmt(s.latency_us),
                                    s.flagged ? "1" : "0"});
    return out;
}

inline ExperimentOutput drive_avx(const RunConfig& cfg, Backend& backend) {
    HighLowConfig hl;
    hl.low_fraction_pct = static_cast<int>(opt_i64(cfg, "low-pct", 50));
    hl.period_us = opt_i64(cfg, "period-us", 2'000'000);
    hl.duration_s = opt_i64(cfg, "duration-s", 300);
    hl.cpus = cfg.cpus;
    hl.core_khz = opt_i64(cfg, "khz", 3'000'000);
    hl.high_memory = opt_i64(cfg, "memory", 0) != 0;
    auto r = run_high_low(hl, backend);

    std::int64_t license_khz = 2'700'000;
    if (auto* sim = backend.as_sim())
        license_khz = sim->params().avx_license_khz;
    auto summary = summarize_license(r.records, hl.core_khz, license_khz);

    ExperimentOutput out;
    out.results["period_us"] = hl.period_us;
    out.results["low_fraction_pct"] = hl.low_fraction_pct;
    out.results["duration_s"] = hl.duration_s;
    out.results["overrun_phases"] = r.overrun_phases;
    out.results["throttle_us_per_transition"] = summary.throttle_us_per_transition;
    out.results["low_license_us"] = summary.low_license_us;
    out.results["throttle_fraction_high"] = summary.throttle_fraction_high;
    out.results["license_fraction_low"] = summary.license_fraction_low;

    out.samples.columns = {"cpu",          "phase_index",      "kind",
                           "cycles_total", "cycles_throttled", "cycles_license2",
                           "wall_ns"};
    for (const auto& [cpu, recs] : r.records)
        for (std::size_t i = 0; i < recs.size(); ++i) {
            const auto& rec = recs[i];
            out.samples.rows.push_back(
                {std::to_string(cpu), std::to_string(i), to_string(rec.kind),
                 std::to_string(rec.cycles_total), std::to_string(rec.cycles_throttled),
                 std::to_string(rec.cycles_license2), std::to_string(rec.wall_ns)});
        }
    return out;
}

inline ExperimentOutput drive_datapower(const RunConfig& cfg, Backend& backend) {
    std::vector<std::int64_t> khz_list;
    {
        std::istringstream in(opt_str(cfg, "khz", "2400000,3000000"));
        std::string tok;
        while (std::getline(in, tok, ','))
            khz_list.push_back(std::stoll(tok));
    }
    std::int64_t duration_s = opt_i64(cfg, "duration-s", 6);
    int cores = static_cast<int>(opt_i64(cfg, "cores", 36));

    static const std::vector<std::pair<int, int>> configs = {
        {0, 0}, {64, 64}, {128, 384}, {256, 256}, {384, 384}, {512, 512}};

    std::vector<SweepPoint> points;
    XorPointOptions opts;
    opts.active_cores = cores;
    std::uint64_t op_seed = cfg.seed;
    for (std::int64_t khz : khz_list)
        for (auto [p1, p2] : configs) {
            Operand v1 = make_operand(p1, 512, op_seed++);
            Operand v2 = make_operand(p2, 512, op_seed++);
            points.push_back(run_xor_point(v1, v2, khz, duration_s, backend, opts));
        }

    auto fits = fit_power_model(points, cores);

    ExperimentOutput out;
    json fit_json = json::object();
    for (const auto& [khz, fit] : fits)
        fit_json[std::to_string(khz)] = fit;
    out.results["fits"] = fit_json;
    out.results["active_cores"] = cores;

    out.samples.columns = {"point", "popcnt_v1", "popcnt_v2", "core_khz",
                           "mean_w", "stdev_w",   "n_trimmed", "frequency_drift"};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        auto trimmed = trim_samples(p.samples);
        std::vector<double> w;
        for (const auto& s : trimmed)
            w.push_back(s.watts);
        auto st = summarize(w);
        out.samples.rows.push_back({std::to_string(i), std::to_string(p.popcnt_v1),
                                    std::to_string(p.popcnt_v2), std::to_string(p.core_khz),
                                    fmt(st.mean), fmt(st.stdev), std::to_string(st.n),
                                    p.frequency_drift ? "1" : "0"});
    }
    return out;
}

inline ExperimentOutput drive_tstate(const RunConfig& cfg, Backend& backend) {
    std::int64_t duration_s = opt_i64(cfg, "duration-s", 1);
    auto results = sweep_tstates(duration_s, backend, cfg.cpus.at(0));

    ExperimentOutput out;
    json arr = json::array();
    out.samples.columns = {"level", "nominal_duty", "effective_duty", "implemented"};
    for (const auto& r : results) {
        arr.push_back(json{{"level", r.level},
                           {"nominal_duty", r.nominal_duty},
                           {"effective_duty", r.effective_duty},
                           {"implemented", r.implemented}});
        out.samples.rows.push_back({std::to_string(r.level), fmt(r.nominal_duty),
                                    fmt(r.effective_duty), r.implemented ? "1" : "0"});
    }
    out.results["levels"] = arr;
    return out;
}

inline ExperimentOutput drive_pperf(const RunConfig& cfg, Backend& backend) {
    std::int64_t duration_s = opt_i64(cfg, "duration-s", 1);
    double stall = measure_pperf_ratio(PperfWorkload::stall_chase, duration_s, backend,
                                       cfg.cpus.at(0));
    double compute = measure_pperf_ratio(PperfWorkload::compute, duration_s, backend,
                                         cfg.cpus.at(0));

    ExperimentOutput out;
    out.results["stall_chase_ratio"] = stall;
    out.results["compute_ratio"] = compute;
    out.results["discriminates_stalls"] = stall < 0.95 * compute;
    out.samples.columns = {"workload", "pperf_aperf_ratio"};
    out.samples.rows.push_back({"stall_chase", fmt(stall)});
    out.samples.rows.push_back({"compute", fmt(compute)});
    return out;
}

inline ExperimentOutput drive_chase_calibrate(const RunConfig& cfg, Backend& backend) {
    ExperimentOutput out;
    out.results["tsc_khz"] = backend.tsc_khz();
    out.results["num_cpus"] = backend.num_cpus();
    out.results["selectable_khz"] = backend.selectable_frequencies(cfg.cpus.at(0));
    {
        auto [min_ratio, max_ratio] = backend.uncore_range();
        out.results["uncore_ratio_min"] = min_ratio;
        out.results["uncore_ratio_max"] = max_ratio;
    }
    json cstates = json::object();
    for (CState c : {CState::C1, CState::C1E, CState::C6})
        cstates[to_string(c)] = backend.cstate_enabled(cfg.cpus.at(0), c);
    out.results["cstates_enabled"] = cstates;

    // timer overhead: back-to-back timestamp reads
    {
        std::uint64_t t0 = backend.now_cycles(cfg.cpus.at(0));
        std::uint64_t t1 = backend.now_cycles(cfg.cpus.at(0));
        out.results["timer_overhead_cycles"] = static_cast<std::int64_t>(t1 - t0);
    }

    out.samples.columns = {"preset", "num_lines", "mean_access_cycles"};
    backend.pin_to_cpu(cfg.cpus.at(0));
    for (const auto& preset : chase_presets()) {
        ChaseBuffer buf = build_chase(preset.num_lines, 64, cfg.seed);
        auto trace = run_chase(buf, 2000, backend, cfg.cpus.at(0));
        double mean = average_access_cycles(trace, 1000, 2000);
        out.results["chase_" + preset.name + "_cycles"] = mean;
        out.samples.rows.push_back(
            {preset.name, std::to_string(preset.num_lines), fmt(mean)});
    }
    return out;
}

inline ExperimentOutput drive(const RunConfig& cfg, Backend& backend) {
    switch (cfg.experiment) {
    case Experiment::pstate: return drive_pstate(cfg, backend);
    case Experiment::ufs_forced: return drive_ufs_forced(cfg, backend);
    case Experiment::ufs_loop: return drive_ufs_loop(cfg, backend);
    case Experiment::cstate: return drive_cstate(cfg, backend);
    case Experiment::avx: return drive_avx(cfg, backend);
    case Experiment::datapower: return drive_datapower(cfg, backend);
    case Experiment::tstate: return drive_tstate(cfg, backend);
    case Experiment::pperf: return drive_pperf(cfg, backend);
    case Experiment::chase_calibrate: return drive_chase_calibrate(cfg, backend);
    }
    throw Error(errc::invalid_argument, "unknown experiment");
}

} // namespace detail

// Consolidated privilege/governor preflight for hardware runs; everything
// wrong is reported in one message.
inline void verify_hardware_access(Backend& backend, const RunConfig& cfg) {
    std::vector<std::string> problems;
    for (int cpu : cfg.cpus) {
        try {
            (void)backend.read_msr(cpu, msr::IA32_APERF);
        } catch (const Error& e) {
            problems.push_back(std::string("MSR access on cpu ") + std::to_string(cpu) + ": " +
                               e.what());
            break;
        }
    }
    try {
        std::string gov = backend.governor(cfg.cpus.at(0));
        if (gov != "userspace" && !cfg.force)
            problems.push_back("cpufreq governor is '" + gov +
                               "', need 'userspace' (or pass --force)");
    } catch (const Error& e) {
        problems.push_back(std::string("cpufreq access: ") + e.what());
    }
    try {
        (void)backend.read_counter(cfg.cpus.at(0), CounterEvent::throttle);
    } catch (const Error& e) {
        problems.push_back(std::string("perf events: ") + e.what());
    }
    if (!problems.empty()) {
        std::string msg = "hardware backend preflight failed:";
        for (const auto& p : problems)
            msg += "\n  - " + p;
        msg += "\nrun as root with the msr module loaded and the userspace governor active";
        throw Error(errc::permission_denied, msg);
    }
}

inline ExperimentReport build_report(const RunConfig& cfg, Backend& backend,
                                     const json& results) {
    ExperimentReport report;
    report.experiment = to_string(cfg.experiment);
    report.backend = backend.kind();
    report.seed = cfg.seed;
    report.config["reps"] = std::to_string(cfg.reps);
    report.config["config_hash"] = std::to_string(config_hash(cfg));
    for (const auto& [k, v] : cfg.options)
        report.config[k] = v;
    report.topology = cfg.cpus;
    report.results = results;
    return report;
}

// Runs one experiment end to end. Exit code 0 = success, 1 = experiment
// error (partial results are written with "truncated": true), 2 =
// configuration/privilege error (nothing is written).
inline int run(const RunConfig& cfg, std::string* error_message = nullptr) {
    namespace fs = std::filesystem;
    auto report_error = [&](const std::string& msg) {
        if (error_message)
            *error_message = msg;
    };

    std::unique_ptr<Backend> backend;
    fs::path out_dir;
    try {
        backend = make_backend(cfg.backend);
        if (cfg.cpus.empty())
            throw Error(errc::invalid_argument, "need at least one cpu");
        for (int cpu : cfg.cpus)
            if (cpu < 0 || cpu >= backend->num_cpus())
                throw Error(errc::invalid_cpu,
                            "cpu " + std::to_string(cpu) + " not in topology (0.." +
                                std::to_string(backend->num_cpus() - 1) + ")");
        if (cfg.reps < 1)
            throw Error(errc::invalid_argument, "reps must be >= 1");
        if (backend->kind() == BackendKind::hardware)
            verify_hardware_access(*backend, cfg);
        out_dir = cfg.out_dir;
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (!fs::is_directory(out_dir))
            throw Error(errc::io_failure, "out dir " + out_dir.string() + " is not writable");
    } catch (const std::exception& e) {
        report_error(e.what());
        return 2;
    }

    // the C-state sweep touches the caller/callee pair, which may lie
    // outside the configured CPU list; guard those knobs too
    std::vector<int> guard_cpus = cfg.cpus;
    if (cfg.experiment == Experiment::cstate) {
        std::string rel = detail::opt_str(cfg, "relation", "local");
        CpuRelation relation = rel == "remote_idle"     ? CpuRelation::remote_idle
                               : rel == "remote_active" ? CpuRelation::remote_active
                                                        : CpuRelation::local;
        CpuPair pair = pick_cpu_pair(relation, backend->num_cpus());
        for (int c : {pair.caller, pair.callee})
            if (std::find(guard_cpus.begin(), guard_cpus.end(), c) == guard_cpus.end())
                guard_cpus.push_back(c);
    }

    std::string stem = to_string(cfg.experiment);
    try {
        KnobGuard guard(*backend, guard_cpus);
        detail::ExperimentOutput out;
        try {
            out = detail::drive(cfg, *backend);
        } catch (const std::exception& e) {
            // partial results: an empty truncated report still records the run
            ExperimentReport report = build_report(cfg, *backend, json::object());
            report.results["truncated"] = true;
            report.results["error"] = e.what();
            detail::write_file(out_dir / (stem + ".report.json"), export_report(report));
            report_error(e.what());
            return 1;
        }
        ExperimentReport report = build_report(cfg, *backend, out.results);
        detail::write_file(out_dir / (stem + ".report.json"), export_report(report));
        detail::write_file(out_dir / (stem + ".samples.csv"),
                           export_table(out.samples, ExportFormat::csv));
        detail::write_file(out_dir / (stem + ".dat"),
                           export_table(out.has_plot ? out.plot : out.samples,
                                        ExportFormat::gnuplot));
        return 0;
    } catch (const std::exception& e) {
        report_error(e.what());
        return 1;
    }
}

// Measures the platform basics and writes them as a JSON file other runs
// can consume.
inline int calibrate(const RunConfig& cfg, std::string* error_message = nullptr) {
    RunConfig c = cfg;
    c.experiment = Experiment::chase_calibrate;
    return run(c, error_message);
}

} // namespace eeprobe

#endif
