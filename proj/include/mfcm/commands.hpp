#pragma once

#include <ostream>
#include <string>

#include "mfcm/config.hpp"
#include "mfcm/io.hpp"

namespace mfcm {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitNumerical = 1, kExitConfig = 2 };

OutputMeta make_meta(const RunConfig& cfg);

// Each command writes into cfg.out and returns an exit code; solver failures
// propagate as NumericalError / ConfigError.
int cmd_trace(const RunConfig& cfg, std::ostream& log);
int cmd_sweep(const RunConfig& cfg, std::ostream& log);
int cmd_stability(const RunConfig& cfg, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_validate(const RunConfig& cfg, std::ostream& log);
int cmd_ift_certify(const RunConfig& cfg, std::ostream& log);

/// Dispatches by name and maps exceptions to exit codes, writing error.json
/// into cfg.out (when writable) and a one-line message to err.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err);

} // namespace mfcm
