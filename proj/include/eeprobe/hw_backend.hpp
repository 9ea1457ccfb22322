#ifndef EEPROBE_HW_BACKEND_HPP
#define EEPROBE_HW_BACKEND_HPP

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eeprobe/core.hpp"
#include "eeprobe/error.hpp"
#include "eeprobe/hwif.hpp"
#include "eeprobe/sim_backend.hpp" // FilePowerReader

#if defined(__linux__)
#include <fcntl.h>
#include <sched.h>
#include <sys/ioctl.h>
#include <sys/syscall.h>
#include <unistd.h>
#if defined(__x86_64__)
#include <linux/perf_event.h>
#include <x86intrin.h>
#endif
#endif

namespace eeprobe {

inline std::string expand_cpu_path(const std::string& tmpl, int cpu) {
    std::string out = tmpl;
    std::string key = "{cpu}";
    auto pos = out.find(key);
    if (pos != std::string::npos)
        out.replace(pos, key.size(), std::to_string(cpu));
    return out;
}

#if defined(__linux__)

namespace detail {

inline std::string read_sysfs(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(errc::io_failure, "cannot read " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    while (!content.empty() && (content.back() == '\n' || content.back() == ' '))
        content.pop_back();
    return content;
}

inline void write_sysfs(const std::string& path, const std::string& value) {
    std::ofstream out(path);
    if (!out)
        throw Error(errc::permission_denied, "cannot write " + path);
    out << value;
    out.flush();
    if (!out)
        throw Error(errc::io_failure, "write to " + path + " failed");
}

// SKX CORE_POWER.* raw events
constexpr std::uint64_t raw_core_power_throttle = 0x4028; // umask 0x40, event 0x28
constexpr std::uint64_t raw_core_power_lvl2 = 0x2028;     // umask 0x20, event 0x28

} // namespace detail

// Real-hardware access: MSR device nodes, cpufreq sysfs, perf events and
// RAPL energy counters. Requires root (or equivalent capabilities) for
// most operations.
class HwBackend : public Backend {
public:
    explicit HwBackend(const BackendConfig& cfg) : cfg_(cfg) {
        num_cpus_ = static_cast<int>(std::thread::hardware_concurrency());
        if (num_cpus_ <= 0)
            num_cpus_ = 1;
        tsc_khz_ = calibrate_tsc_khz();
        if (cfg_.power_source == PowerSource::external_file)
            power_file_ = std::make_unique<FilePowerReader>(cfg_.power_file);
    }

    ~HwBackend() override {
        for (auto& [key, fd] : msr_fds_)
            ::close(fd);
        for (auto& [key, fd] : perf_fds_)
            ::close(fd);
    }

    BackendKind kind() const override { return BackendKind::hardware; }
    int num_cpus() const override { return num_cpus_; }
    std::int64_t tsc_khz() const override { return tsc_khz_; }

    std::uint64_t now_cycles(int cpu) override {
        (void)cpu;
#if defined(__x86_64__)
        unsigned aux = 0;
        return __rdtscp(&aux);
#else
        throw Error(errc::backend_unavailable, "TSC requires x86_64");
#endif
    }

    void advance_us(double us) override {
        std::this_thread::sleep_for(
            std::chrono::nanoseconds(static_cast<std::int64_t>(us * 1000.0)));
    }

    std::uint64_t read_msr(int cpu, std::uint32_t address) override {
        std::lock_guard<std::mutex> lock(msr_mutex_);
        int fd = msr_fd(cpu);
        std::uint64_t value = 0;
        if (::pread(fd, &value, sizeof(value), address) != sizeof(value))
            throw Error(errc::io_failure, "msr read 0x" + hex(address) + " on cpu " +
                                              std::to_string(cpu) + " failed");
        return value;
    }

    void write_msr(int cpu, std::uint32_t address, std::uint64_t value) override {
        std::lock_guard<std::mutex> lock(msr_mutex_);
        int fd = msr_fd(cpu);
        if (::pwrite(fd, &value, sizeof(value), address) != sizeof(value))
            throw Error(errc::permission_denied, "msr write 0x" + hex(address) + " on cpu " +
                                                     std::to_string(cpu) + " failed");
    }

    void set_uncore_range(int min_ratio, int max_ratio) override {
        if (min_ratio > max_ratio)
            throw Error(errc::range_violation, "min ratio above max ratio");
        write_msr(0, msr::UNCORE_RATIO_LIMIT, encode_uncore_ratio_limit(min_ratio, max_ratio));
    }

    std::pair<int, int> uncore_range() override {
        return decode_uncore_ratio_limit(read_msr(0, msr::UNCORE_RATIO_LIMIT));
    }

    std::vector<std::int64_t> selectable_frequencies(int cpu) override {
        std::string base = expand_cpu_path(cfg_.cpufreq_path_template, cpu);
        std::vector<std::int64_t> out;
        try {
            std::istringstream in(detail::read_sysfs(base + "/scaling_available_frequencies"));
            std::int64_t khz;
            while (in >> khz)
                out.push_back(khz);
        } catch (const Error&) {
            // fall back to the min/max pair
            out.push_back(std::stoll(detail::read_sysfs(base + "/scaling_min_freq")));
            out.push_back(std::stoll(detail::read_sysfs(base + "/scaling_max_freq")));
        }
        return out;
    }

    void set_core_frequency(int cpu, std::int64_t khz) override {
        check_cpu(cpu);
        auto available = selectable_frequencies(cpu);
        if (!available.empty() &&
            std::find(available.begin(), available.end(), khz) == available.end())
            throw Error(errc::unsupported_frequency,
                        std::to_string(khz) + " kHz is not a selectable P-state");
        std::string base = expand_cpu_path(cfg_.cpufreq_path_template, cpu);
        if (governor(cpu) != "userspace")
            throw Error(errc::governor_unavailable, "userspace governor not active on cpu " +
                                                        std::to_string(cpu));
        detail::write_sysfs(base + "/scaling_setspeed", std::to_string(khz));
    }

    std::int64_t core_frequency(int cpu) override {
        std::string base = expand_cpu_path(cfg_.cpufreq_path_template, cpu);
        return std::stoll(detail::read_sysfs(base + "/scaling_cur_freq"));
    }

    std::string governor(int cpu) override {
        std::string base = expand_cpu_path(cfg_.cpufreq_path_template, cpu);
        return detail::read_sysfs(base + "/scaling_governor");
    }

    std::uint64_t read_counter(int cpu, CounterEvent event) override {
        switch (event) {
        case CounterEvent::aperf: return read_msr(cpu, msr::IA32_APERF);
        case CounterEvent::pperf: return read_msr(cpu, msr::MSR_PPERF);
        case CounterEvent::throttle:
            return read_perf(cpu, detail::raw_core_power_throttle);
        case CounterEvent::license2:
            return read_perf(cpu, detail::raw_core_power_lvl2);
        }
        throw Error(errc::event_unavailable, "unknown event");
    }

    PowerSample sample_power() override {
        auto t_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                        std::chrono::steady_clock::now().time_since_epoch())
                        .count();
        switch (cfg_.power_source) {
        case PowerSource::external_file:
            return power_file_->next();
        case PowerSource::rapl: {
            // energy_uj counter, differenced over elapsed time
            std::uint64_t uj = std::stoull(detail::read_sysfs(rapl_energy_path()));
            if (last_rapl_ns_ == 0) {
                last_rapl_uj_ = uj;
                last_rapl_ns_ = t_ns;
                advance_us(50'000);
                return sample_power();
            }
            double dj = static_cast<double>(uj - last_rapl_uj_) / 1e6;
            double dt = static_cast<double>(t_ns - last_rapl_ns_) / 1e9;
            last_rapl_uj_ = uj;
            last_rapl_ns_ = t_ns;
            if (dt <= 0.0)
                throw Error(errc::source_unavailable, "rapl sampled too fast");
            return PowerSample(t_ns, dj / dt, PowerSource::rapl);
        }
        default:
            throw Error(errc::source_unavailable, "no power source configured");
        }
    }

    void pin_to_cpu(int cpu) override {
        check_cpu(cpu);
        cpu_set_t set;
        CPU_ZERO(&set);
        CPU_SET(static_cast<unsigned>(cpu), &set);
        if (sched_setaffinity(0, sizeof(set), &set) != 0)
            throw Error(errc::invalid_cpu, "cannot pin to cpu " + std::to_string(cpu));
    }

    int current_cpu() override { return sched_getcpu(); }

    void set_cstate_enabled(int cpu, CState state, bool enabled) override {
        detail::write_sysfs(cstate_disable_path(cpu, state), enabled ? "0" : "1");
    }

    bool cstate_enabled(int cpu, CState state) override {
        return detail::read_sysfs(cstate_disable_path(cpu, state)) == "0";
    }

private:
    void check_cpu(int cpu) const {
        if (cpu < 0 || cpu >= num_cpus_)
            throw Error(errc::invalid_cpu, "cpu " + std::to_string(cpu) + " not in topology");
    }

    static std::string hex(std::uint32_t v) {
        std::ostringstream os;
        os << std::hex << v;
        return os.str();
    }

    std::int64_t calibrate_tsc_khz() {
#if defined(__x86_64__)
        unsigned aux = 0;
        auto w0 = std::chrono::steady_clock::now();
        std::uint64_t t0 = __rdtscp(&aux);
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        std::uint64_t t1 = __rdtscp(&aux);
        auto w1 = std::chrono::steady_clock::now();
        double sec = std::chrono::duration<double>(w1 - w0).count();
        return static_cast<std::int64_t>(static_cast<double>(t1 - t0) / sec / 1000.0);
#else
        return 1'000'000;
#endif
    }

    int msr_fd(int cpu) {
        check_cpu(cpu);
        auto it = msr_fds_.find(cpu);
        if (it != msr_fds_.end())
            return it->second;
        std::string path = expand_cpu_path(cfg_.msr_path_template, cpu);
        int fd = ::open(path.c_str(), O_RDWR);
        if (fd < 0)
            throw Error(errc::permission_denied, "cannot open " + path);
        msr_fds_[cpu] = fd;
        return fd;
    }

    std::uint64_t read_perf(int cpu, std::uint64_t raw_config) {
#if defined(__x86_64__)
        auto key = std::make_pair(cpu, raw_config);
        auto it = perf_fds_.find(key);
        if (it == perf_fds_.end()) {
            perf_event_attr attr{};
            attr.type = PERF_TYPE_RAW;
            attr.size = sizeof(attr);
            attr.config = raw_config;
            attr.disabled = 0;
            int fd = static_cast<int>(
                ::syscall(SYS_perf_event_open, &attr, -1, cpu, -1, 0));
            if (fd < 0)
                throw Error(errc::event_unavailable,
                            "perf_event_open failed for raw 0x" + hex(static_cast<std::uint32_t>(
                                                                      raw_config)));
            it = perf_fds_.emplace(key, fd).first;
        }
        std::uint64_t value = 0;
        if (::read(it->second, &value, sizeof(value)) != sizeof(value))
            throw Error(errc::event_unavailable, "perf counter read failed");
        return value;
#else
        (void)cpu;
        (void)raw_config;
        throw Error(errc::event_unavailable, "perf events need x86_64");
#endif
    }

    std::string rapl_energy_path() const {
        return "/sys/class/powercap/intel-rapl/intel-rapl:0/energy_uj";
    }

    std::string cstate_disable_path(int cpu, CState state) const {
        // index mapping assumes the usual POLL,C1,C1E,C6 ordering
        int index;
        switch (state) {
        case CState::C0poll: index = 0; break;
        case CState::C1: index = 1; break;
        case CState::C1E: index = 2; break;
        default: index = 3; break;
        }
        return expand_cpu_path(cfg_.cpuidle_path_template, cpu) + "/state" +
               std::to_string(index) + "/disable";
    }

    BackendConfig cfg_;
    int num_cpus_ = 0;
    std::int64_t tsc_khz_ = 0;
    std::mutex msr_mutex_;
    std::map<int, int> msr_fds_;
    std::map<std::pair<int, std::uint64_t>, int> perf_fds_;
    std::unique_ptr<FilePowerReader> power_file_;
    std::uint64_t last_rapl_uj_ = 0;
    std::int64_t last_rapl_ns_ = 0;
};

#endif // __linux__

} // namespace eeprobe

#endif
