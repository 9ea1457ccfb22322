#ifndef EEPROBE_ERROR_HPP
#define EEPROBE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace eeprobe {

enum class errc {
    invalid_argument,
    backend_unavailable,
    permission_denied,
    unmodeled_register,
    range_violation,
    unsupported_frequency,
    governor_unavailable,
    event_unavailable,
    source_unavailable,
    parse_error,
    invalid_cpu,
    cstate_unavailable,
    allocation_failure,
    empty_input,
    rank_deficient,
    too_few_samples,
    io_failure,
    verification_failure,
    register_unavailable,
    counter_unavailable,
};

inline const char* errc_name(errc c) {
    switch (c) {
    case errc::invalid_argument: return "invalid-argument";
    case errc::backend_unavailable: return "backend-unavailable";
    case errc::permission_denied: return "permission-denied";
    case errc::unmodeled_register: return "unmodeled-register";
    case errc::range_violation: return "range-violation";
    case errc::unsupported_frequency: return "unsupported-frequency";
    case errc::governor_unavailable: return "governor-unavailable";
    case errc::event_unavailable: return "event-unavailable";
    case errc::source_unavailable: return "source-unavailable";
    case errc::parse_error: return "parse-error";
    case errc::invalid_cpu: return "invalid-cpu";
    case errc::cstate_unavailable: return "cstate-unavailable";
    case errc::allocation_failure: return "allocation-failure";
    case errc::empty_input: return "empty-input";
    case errc::rank_deficient: return "rank-deficient";
    case errc::too_few_samples: return "too-few-samples";
    case errc::io_failure: return "io-failure";
    case errc::verification_failure: return "verification-failure";
    case errc::register_unavailable: return "register-unavailable";
    case errc::counter_unavailable: return "counter-unavailable";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const { return code_; }

private:
    errc code_;
};

} // namespace eeprobe

#endif
