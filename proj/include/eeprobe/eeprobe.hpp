#ifndef EEPROBE_EEPROBE_HPP
#define EEPROBE_EEPROBE_HPP

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
#include "eeprobe/runner.hpp"
#include "eeprobe/sim_backend.hpp"

#endif
