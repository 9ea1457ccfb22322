#ifndef EEPROBE_SIM_BACKEND_HPP
#define EEPROBE_SIM_BACKEND_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"

namespace eeprobe {

// Parses one "t_ns,watts" line of an external power log.
inline PowerSample parse_power_line(const std::string& line) {
    std::size_t comma = line.find(',');
    if (comma == std::string::npos)
        throw Error(errc::parse_error, "expected 't_ns,watts', got '" + line + "'");
    try {
        std::size_t used = 0;
        std::int64_t t_ns = std::stoll(line.substr(0, comma), &used);
        if (used != comma)
            throw Error(errc::parse_error, "bad timestamp in '" + line + "'");
        std::string wfield = line.substr(comma + 1);
        double watts = std::stod(wfield, &used);
        while (used < wfield.size() && (wfield[used] == ' ' || wfield[used] == '\r'))
            ++used;
        if (used != wfield.size())
            throw Error(errc::parse_error, "bad watts in '" + line + "'");
        return PowerSample(t_ns, watts, PowerSource::external_file);
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error(errc::parse_error, "expected 't_ns,watts', got '" + line + "'");
    }
}

class FilePowerReader {
public:
    explicit FilePowerReader(const std::string& path) : in_(path) {
        if (!in_)
            throw Error(errc::source_unavailable, "cannot open power file " + path);
    }

    PowerSample next() {
        std::string line;
        while (std::getline(in_, line)) {
            if (line.empty() || line[0] == '#')
                continue;
            return parse_power_line(line);
        }
        throw Error(errc::source_unavailable, "power file exhausted");
    }

private:
    std::ifstream in_;
};

// Deterministic model of the reference platform's hardware energy
// efficiency mechanisms. Identical (parameters, seed, call sequence)
// produce identical outputs.
class SimBackend : public Backend {
public:
    explicit SimBackend(const BackendConfig& cfg)
        : cfg_(cfg), p_(cfg.sim), rng_(cfg.seed), now_(1'000'000) {
        cpus_.resize(static_cast<std::size_t>(p_.num_cpus));
        for (auto& c : cpus_) {
            c.requested_khz = p_.core_khz_max;
            c.effective_khz = p_.core_khz_max;
            c.last_acct = now_;
        }
        msr_0x620_ = encode_uncore_ratio_limit(p_.uncore_ratio_min, p_.uncore_ratio_max);
        uncore_khz_ = static_cast<std::int64_t>(p_.uncore_ratio_min) * uncore_ratio_khz;
        if (cfg_.power_source == PowerSource::external_file)
            power_file_ = std::make_unique<FilePowerReader>(cfg_.power_file);
    }

    BackendKind kind() const override { return BackendKind::simulation; }
    int num_cpus() const override { return p_.num_cpus; }
    std::int64_t tsc_khz() const override { return p_.tsc_khz; }
    SimBackend* as_sim() override { return this; }
    const SimParameters& params() const { return p_; }

    std::uint64_t now_cycles(int cpu) override {
        check_cpu(cpu);
        return now_;
    }

    void advance_us(double us) override {
        if (us < 0)
            throw Error(errc::invalid_argument, "cannot advance backwards");
        now_ += cycles(us);
    }

    std::uint64_t read_msr(int cpu, std::uint32_t address) override {
        check_cpu(cpu);
        switch (address) {
        case msr::UNCORE_RATIO_LIMIT: return msr_0x620_;
        case msr::IA32_CLOCK_MODULATION: return cpus_[to_idx(cpu)].msr_clock_mod;
        case msr::IA32_APERF: return read_counter(cpu, CounterEvent::aperf);
        case msr::MSR_PPERF: return read_counter(cpu, CounterEvent::pperf);
        default:
            throw Error(errc::unmodeled_register,
                        "msr 0x" + to_hex(address) + " is not modeled");
        }
    }

    void write_msr(int cpu, std::uint32_t address, std::uint64_t value) override {
        check_cpu(cpu);
        if (fail_msr_writes_after_ >= 0) {
            if (fail_msr_writes_after_ == 0) {
                fail_msr_writes_after_ = -1; // transient: one failure, then recovery
                throw Error(errc::permission_denied, "injected msr write failure");
            }
            --fail_msr_writes_after_;
        }
        switch (address) {
        case msr::UNCORE_RATIO_LIMIT: {
            msr_0x620_ = value;
            reevaluate_uncore(0.0);
            break;
        }
        case msr::IA32_CLOCK_MODULATION:
            cpus_[to_idx(cpu)].msr_clock_mod = value;
            break;
        default:
            throw Error(errc::unmodeled_register,
                        "msr 0x" + to_hex(address) + " is not modeled");
        }
    }

    void set_uncore_range(int min_ratio, int max_ratio) override {
        if (min_ratio > max_ratio || min_ratio < p_.uncore_ratio_min ||
            max_ratio > p_.uncore_ratio_max)
            throw Error(errc::range_violation,
                        "uncore ratios must satisfy " + std::to_string(p_.uncore_ratio_min) +
                            " <= min <= max <= " + std::to_string(p_.uncore_ratio_max));
        write_msr(0, msr::UNCORE_RATIO_LIMIT,
                  encode_uncore_ratio_limit(min_ratio, max_ratio));
    }

    std::pair<int, int> uncore_range() override { return decode_uncore_ratio_limit(msr_0x620_); }

    std::vector<std::int64_t> selectable_frequencies(int cpu) override {
        check_cpu(cpu);
        std::vector<std::int64_t> out;
        for (std::int64_t f = p_.core_khz_min; f <= p_.core_khz_max; f += p_.core_khz_step)
            out.push_back(f);
        return out;
    }

    void set_core_frequency(int cpu, std::int64_t khz) override {
        check_cpu(cpu);
        if (khz < p_.core_khz_min || khz > p_.core_khz_max ||
            (khz - p_.core_khz_min) % p_.core_khz_step != 0)
            throw Error(errc::unsupported_frequency,
                        std::to_string(khz) + " kHz is not a selectable P-state");
        auto& c = cpus_[to_idx(cpu)];
        process_pstate(c);
        c.requested_khz = khz;
        if (khz == c.effective_khz) {
            c.pending_khz = -1;
            return;
        }
        // the change takes effect at the mechanism's next update slot
        std::uint64_t interval = cycles(p_.pstate_update_interval_us);
        c.pending_khz = khz;
        c.pending_at = (now_ / interval + 1) * interval;
    }

    std::int64_t core_frequency(int cpu) override {
        check_cpu(cpu);
        return cpus_[to_idx(cpu)].requested_khz;
    }

    std::int64_t effective_core_khz(int cpu) {
        check_cpu(cpu);
        auto& c = cpus_[to_idx(cpu)];
        process_pstate(c);
        return c.effective_khz;
    }

    std::uint64_t read_counter(int cpu, CounterEvent event) override {
        check_cpu(cpu);
        auto& c = cpus_[to_idx(cpu)];
        account(c);
        switch (event) {
        case CounterEvent::throttle: return c.throttle;
        case CounterEvent::license2: return c.license2;
        case CounterEvent::aperf: return static_cast<std::uint64_t>(c.aperf);
        case CounterEvent::pperf: return static_cast<std::uint64_t>(c.pperf);
        }
        throw Error(errc::event_unavailable, "unknown counter event");
    }

    PowerSample sample_power() override {
        if (cfg_.power_source == PowerSource::external_file)
            return power_file_->next();
        double watts = modeled_power();
        if (p_.power_noise_w_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, p_.power_noise_w_sigma);
            watts = std::max(0.0, watts + noise(rng_));
        }
        return PowerSample(to_ns(now_), watts, PowerSource::simulated);
    }

    void pin_to_cpu(int cpu) override {
        check_cpu(cpu);
        pinned_cpu_ = cpu;
    }

    int current_cpu() override { return pinned_cpu_; }

    void set_cstate_enabled(int cpu, CState state, bool enabled) override {
        check_cpu(cpu);
        cstate_disabled_[{cpu, state}] = !enabled;
    }

    bool cstate_enabled(int cpu, CState state) override {
        check_cpu(cpu);
        auto it = cstate_disabled_.find({cpu, state});
        return it == cstate_disabled_.end() || !it->second;
    }

    std::string governor(int cpu) override {
        check_cpu(cpu);
        return "userspace";
    }

    void set_workload(int cpu, WorkloadClass wl) override {
        check_cpu(cpu);
        auto& c = cpus_[to_idx(cpu)];
        if (c.workload == wl)
            return;
        account(c);
        bool was_heavy = uncore_heavy();
        c.workload = wl;
        bool is_heavy = uncore_heavy();
        auto [min_ratio, max_ratio] = decode_uncore_ratio_limit(msr_0x620_);
        if (was_heavy != is_heavy && min_ratio != max_ratio)
            reevaluate_uncore(p_.ufs_controlloop_ms * 1000.0);
    }

    // One dependent-load access of the pinned chase workload: advances the
    // clock and returns the access duration in TSC cycles.
    std::int64_t simulated_access(int cpu) {
        check_cpu(cpu);
        auto& c = cpus_[to_idx(cpu)];
        process_pstate(c);
        process_uncore();
        if (uncore_pending_.active && now_ >= uncore_pending_.gap_start &&
            now_ < uncore_pending_.gap_end) {
            // processor unavailable during the switch; the stall begins with
            // this access and lasts the full gap length
            std::uint64_t start = now_;
            std::uint64_t gap_len = uncore_pending_.gap_end - uncore_pending_.gap_start;
            if (!uncore_pending_.artifact)
                uncore_khz_ = uncore_pending_.target_khz;
            uncore_pending_.active = false;
            now_ = start + gap_len;
            std::int64_t post = access_cycles(c);
            now_ += static_cast<std::uint64_t>(post);
            return static_cast<std::int64_t>(now_ - start);
        }
        std::int64_t dur = access_cycles(c);
        now_ += static_cast<std::uint64_t>(dur);
        return dur;
    }

    // Wake-up latency draw for the C-state experiment.
    double simulated_wakeup(int callee_cpu, CState state, CpuRelation relation,
                            std::int64_t core_khz) {
        if (state != CState::C0poll && !cstate_enabled(callee_cpu, state))
            throw Error(errc::cstate_unavailable,
                        std::string(to_string(state)) + " is disabled");
        std::uniform_real_distribution<double> jitter(-p_.wake_jitter_us, p_.wake_jitter_us);
        switch (state) {
        case CState::C0poll:
            return p_.signal_delivery_us;
        case CState::C1:
            return p_.c1_wake_us + jitter(rng_);
        case CState::C1E:
            return p_.c1e_wake_us + jitter(rng_);
        case CState::C6:
            break;
        }
        if (relation == CpuRelation::remote_idle) {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            if (u01(rng_) < p_.c6_remote_tail_probability) {
                std::uniform_real_distribution<double> tail(p_.c6_remote_tail_us - 0.5,
                                                            p_.c6_remote_tail_us + 0.5);
                return tail(rng_);
            }
            std::uniform_real_distribution<double> band(p_.c6_wake_us_remote_idle_lo,
                                                        p_.c6_wake_us_remote_idle_hi);
            return band(rng_);
        }
        // local and remote-active: latency grows with the cycle time
        double f_ghz = static_cast<double>(core_khz) / 1e6;
        double fmax = static_cast<double>(p_.core_khz_max) / 1e6;
        double fmin = static_cast<double>(p_.core_khz_min) / 1e6;
        double b = (p_.c6_wake_us_minfreq - p_.c6_wake_us_nominal) / (1.0 / fmin - 1.0 / fmax);
        double a = p_.c6_wake_us_nominal - b / fmax;
        return a + b / f_ghz + jitter(rng_);
    }

    // Executes one High/Low phase on all given CPUs simultaneously and
    // books the license/throttle counters.
    void run_phase(const std::vector<int>& cpus, PhaseKind kind, double duration_us,
                   double period_us) {
        for (int cpu : cpus)
            check_cpu(cpu);
        for (int cpu : cpus)
            account(cpus_[to_idx(cpu)]);
        now_ += cycles(duration_us);
        for (int cpu : cpus) {
            auto& c = cpus_[to_idx(cpu)];
            process_pstate(c);
            double eff_khz = static_cast<double>(c.effective_khz);
            double total;
            if (kind == PhaseKind::High) {
                total = duration_us * eff_khz / 1000.0;
                if (c.last_phase != PhaseKind::High) {
                    std::uniform_real_distribution<double> thr(p_.avx_throttle_us_lo,
                                                               p_.avx_throttle_us_hi);
                    double thr_us = std::min(thr(rng_), duration_us);
                    c.throttle += static_cast<std::uint64_t>(
                        std::llround(thr_us * eff_khz / 1000.0));
                }
            } else {
                double res_us = 0.0;
                if (c.last_phase == PhaseKind::High) {
                    double full = p_.avx_license_residency_us_hi - p_.avx_license_residency_us_lo;
                    double scale = std::clamp(
                        period_us / p_.avx_residency_full_band_period_us, 0.0, 1.0);
                    double band = full * scale * scale;
                    std::uniform_real_distribution<double> res(
                        p_.avx_license_residency_us_hi - band, p_.avx_license_residency_us_hi);
                    res_us = std::min(res(rng_), duration_us);
                    c.license2 += static_cast<std::uint64_t>(std::llround(
                        res_us * static_cast<double>(p_.avx_license_khz) / 1000.0));
                }
                // the core sits at the license frequency while the residency lasts
                total = res_us * static_cast<double>(p_.avx_license_khz) / 1000.0 +
                        (duration_us - res_us) * eff_khz / 1000.0;
            }
            c.aperf += total;
            c.pperf += total;
            c.last_acct = now_;
            c.last_phase = kind;
        }
    }

    // Effective duty fraction under the current clock-modulation setting.
    double simulated_duty(int cpu) {
        check_cpu(cpu);
        std::uint64_t reg = cpus_[to_idx(cpu)].msr_clock_mod;
        if ((reg & 0x10) == 0)
            return 1.0;
        int level = static_cast<int>(reg & 0x0F);
        if (level == 0)
            level = 16;
        if (level < p_.tstate_min_implemented_level)
            return 1.0; // deepest state is not implemented; write is ineffective
        double nominal = static_cast<double>(level) / 16.0;
        return nominal * (1.0 - p_.tstate_overskip * (1.0 - nominal));
    }

    static double nominal_duty(int level) { return static_cast<double>(level) / 16.0; }

    std::int64_t current_uncore_khz() {
        process_uncore();
        return uncore_khz_;
    }

    // configuration/knob state only; counters and clocks excluded
    json control_state() {
        json per_cpu = json::array();
        for (auto& c : cpus_)
            per_cpu.push_back(json{{"requested_khz", c.requested_khz},
                                   {"clock_modulation", c.msr_clock_mod}});
        json disabled = json::array();
        for (const auto& [key, dis] : cstate_disabled_)
            if (dis)
                disabled.push_back(json{{"cpu", key.first}, {"cstate", to_string(key.second)}});
        return json{{"cpus", per_cpu},
                    {"uncore_ratio_limit", msr_0x620_},
                    {"cstates_disabled", disabled},
                    {"governor", "userspace"}};
    }

    // test hook: the n-th msr write from now on fails
    void fail_msr_writes_after(int n) { fail_msr_writes_after_ = n; }

    // data-dependent power workload descriptor for the power model
    void set_data_workload(int popcnt_v1, int popcnt_v2, int active_cores) {
        if (popcnt_v1 < 0 || popcnt_v1 > 512 || popcnt_v2 < 0 || popcnt_v2 > 512)
            throw Error(errc::invalid_argument, "popcounts must lie in [0, 512]");
        data_popcnt_v1_ = popcnt_v1;
        data_popcnt_v2_ = popcnt_v2;
        data_active_cores_ = active_cores;
    }

    void clear_data_workload() { data_active_cores_ = 0; }

private:
    struct CpuState {
        std::int64_t requested_khz = 0;
        std::int64_t effective_khz = 0;
        std::int64_t pending_khz = -1;
        std::uint64_t pending_at = 0;
        double aperf = 0.0;
        double pperf = 0.0;
        std::uint64_t throttle = 0;
        std::uint64_t license2 = 0;
        std::uint64_t last_acct = 0;
        std::uint64_t msr_clock_mod = 0;
        WorkloadClass workload = WorkloadClass::idle;
        PhaseKind last_phase = PhaseKind::Low;
    };

    struct UncoreTransition {
        bool active = false;
        std::int64_t target_khz = 0;
        std::uint64_t gap_start = 0;
        std::uint64_t gap_end = 0;
        bool artifact = false;
    };

    static std::size_t to_idx(int cpu) { return static_cast<std::size_t>(cpu); }

    void check_cpu(int cpu) const {
        if (cpu < 0 || cpu >= p_.num_cpus)
            throw Error(errc::invalid_cpu, "cpu " + std::to_string(cpu) + " not in topology");
    }

    static std::string to_hex(std::uint32_t v) {
        std::ostringstream os;
        os << std::hex << v;
        return os.str();
    }

    std::uint64_t cycles(double us) const {
        return static_cast<std::uint64_t>(
            std::llround(us * static_cast<double>(p_.tsc_khz) / 1000.0));
    }

    std::int64_t to_ns(std::uint64_t c) const {
        return static_cast<std::int64_t>(static_cast<double>(c) * 1e6 /
                                         static_cast<double>(p_.tsc_khz));
    }

    void process_pstate(CpuState& c) {
        if (c.pending_khz >= 0 && now_ >= c.pending_at) {
            // split the APERF accounting at the switch point
            if (c.pending_at > c.last_acct) {
                double dt = static_cast<double>(c.pending_at - c.last_acct);
                accumulate(c, dt);
                c.last_acct = c.pending_at;
            }
            c.effective_khz = c.pending_khz;
            c.pending_khz = -1;
        }
    }

    void accumulate(CpuState& c, double dt_cycles) {
        double ratio = static_cast<double>(c.effective_khz) / static_cast<double>(p_.tsc_khz);
        double cyc = dt_cycles * ratio;
        c.aperf += cyc;
        bool stalled = c.workload == WorkloadClass::llc_chase ||
                       c.workload == WorkloadClass::dram_chase ||
                       c.workload == WorkloadClass::stall;
        c.pperf += (p_.pperf_counts_stalled_cycles || !stalled) ? cyc : 0.05 * cyc;
    }

    void account(CpuState& c) {
        process_pstate(c);
        if (now_ > c.last_acct) {
            accumulate(c, static_cast<double>(now_ - c.last_acct));
            c.last_acct = now_;
        }
    }

    bool uncore_heavy() const {
        for (const auto& c : cpus_)
            if (c.workload == WorkloadClass::llc_chase || c.workload == WorkloadClass::dram_chase)
                return true;
        return false;
    }

    void process_uncore() {
        if (uncore_pending_.active && now_ >= uncore_pending_.gap_end) {
            if (!uncore_pending_.artifact)
                uncore_khz_ = uncore_pending_.target_khz;
            uncore_pending_.active = false;
        }
    }

    // Desired uncore frequency given register pin and workload demand,
    // clamped when the modeled package power would exceed the RAPL limit.
    std::int64_t uncore_target() {
        auto [min_ratio, max_ratio] = decode_uncore_ratio_limit(msr_0x620_);
        int ratio = min_ratio == max_ratio ? min_ratio : (uncore_heavy() ? max_ratio : min_ratio);
        while (ratio > p_.uncore_ratio_min &&
               modeled_power() / 2.0 > p_.rapl_limit_100s_w)
            --ratio; // power constrained: the uncore clocks down regardless of the pin
        return static_cast<std::int64_t>(ratio) * uncore_ratio_khz;
    }

    void reevaluate_uncore(double extra_delay_us) {
        process_uncore();
        std::int64_t target = uncore_target();
        if (uncore_pending_.active) {
            if (uncore_pending_.target_khz == target)
                return;
            uncore_pending_.active = false; // superseded before it happened
        }
        if (target == uncore_khz_)
            return;
        std::uniform_real_distribution<double> delay(0.0, p_.ufs_update_interval_us);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        bool artifact = u01(rng_) < p_.ufs_artifact_fraction;
        double gap_us;
        if (artifact) {
            std::uniform_real_distribution<double> g(p_.ufs_artifact_gap_us_lo,
                                                     p_.ufs_artifact_gap_us_hi);
            gap_us = g(rng_);
        } else {
            std::uniform_real_distribution<double> g(p_.ufs_gap_us_lo, p_.ufs_gap_us_hi);
            gap_us = g(rng_);
        }
        uncore_pending_.active = true;
        uncore_pending_.target_khz = target;
        uncore_pending_.artifact = artifact;
        uncore_pending_.gap_start = now_ + cycles(extra_delay_us + delay(rng_));
        uncore_pending_.gap_end = uncore_pending_.gap_start + cycles(gap_us);
    }

    double llc_access_cycles(std::int64_t uncore_khz) const {
        // linear in the uncore cycle time through the two measured points
        double f_lo = static_cast<double>(p_.ufs_llc_low_khz);
        double f_hi = static_cast<double>(p_.ufs_llc_high_khz);
        double b = (p_.ufs_llc_cycles_low - p_.ufs_llc_cycles_high) / (1.0 / f_lo - 1.0 / f_hi);
        double a = p_.ufs_llc_cycles_high - b / f_hi;
        return a + b / static_cast<double>(uncore_khz);
    }

    std::int64_t access_cycles(CpuState& c) {
        switch (c.workload) {
        case WorkloadClass::llc_chase:
            return std::llround(llc_access_cycles(uncore_khz_));
        case WorkloadClass::dram_chase:
            return std::llround(p_.dram_access_cycles);
        default:
            return std::llround(p_.l1_access_core_cycles * static_cast<double>(p_.tsc_khz) /
                                static_cast<double>(c.effective_khz));
        }
    }

    double interp(const std::map<std::int64_t, double>& table, std::int64_t khz) const {
        if (table.empty())
            throw Error(errc::invalid_argument, "empty power table");
        if (table.size() == 1)
            return table.begin()->second;
        auto hi = table.lower_bound(khz);
        if (hi == table.begin())
            ++hi;
        if (hi == table.end())
            --hi;
        auto lo = std::prev(hi);
        double x0 = static_cast<double>(lo->first), x1 = static_cast<double>(hi->first);
        double t = (static_cast<double>(khz) - x0) / (x1 - x0);
        return lo->second + t * (hi->second - lo->second);
    }

    double modeled_power() {
        std::int64_t khz = cpus_[0].effective_khz;
        double watts = interp(p_.power_base_w, khz);
        if (data_active_cores_ > 0) {
            double extra_bits = std::max(0, data_popcnt_v2_ - data_popcnt_v1_);
            watts += (interp(p_.power_coef_v1_mw, khz) * data_popcnt_v1_ +
                      interp(p_.power_coef_v2_mw, khz) * extra_bits) *
                     static_cast<double>(data_active_cores_) / 1000.0;
        }
        return watts;
    }

    BackendConfig cfg_;
    SimParameters p_;
    std::mt19937_64 rng_;
    std::uint64_t now_;
    std::vector<CpuState> cpus_;
    std::uint64_t msr_0x620_ = 0;
    std::int64_t uncore_khz_ = 0;
    UncoreTransition uncore_pending_;
    std::map<std::pair<int, CState>, bool> cstate_disabled_;
    int pinned_cpu_ = 0;
    int fail_msr_writes_after_ = -1;
    int data_popcnt_v1_ = 0;
    int data_popcnt_v2_ = 0;
    int data_active_cores_ = 0;
    std::unique_ptr<FilePowerReader> power_file_;
};

} // namespace eeprobe

#endif
