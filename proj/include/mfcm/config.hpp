#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfcm/continuation.hpp"
#include "mfcm/meanfield.hpp"
#include "mfcm/model.hpp"
#include "mfcm/particle.hpp"
#include "mfcm/stability.hpp"
#include "mfcm/transfer.hpp"

namespace mfcm {

struct TraceConfig {
    double nu_lo = 0.0;
    double nu_hi = 0.0;  // 0: model nu_max
    int count_points = 401;  // nu grid for the per-nu solution counts
    bool classify = true;
    TraceSettings settings;
};

struct SweepConfig {
    double nu_lo = 0.0;
    double nu_hi = 80.0;
    int count = 161;
};

struct StabilityConfig {
    std::vector<double> nus{10.0, 61.26};
};

struct SimulateConfig {
    double nu = 61.26;
    std::int64_t particles = 10000;
    std::int64_t steps = 10000;
    std::string init = "fixed_point";  // uniform | perturbative | fixed_point
    double omega0 = 1.0;               // selects the root nearest to it
    int sampling_grid = 0;
    ResidenceSettings residence;
};

struct CertifyConfig {
    double nu = 20.0;
    double omega = 0.0;  // 0: the root nearest to 1
    double delta_max = 0.05;
    double delta_min = 1e-10;
};

struct RunConfig {
    ModelConfig model;
    TransferSettings transfer;
    MeanFieldSettings meanfield;
    ClassifySettings classify;
    TraceConfig trace;
    SweepConfig sweep;
    StabilityConfig stability;
    SimulateConfig simulate;
    CertifyConfig certify;
    std::string out = "out";
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Parses a JSON config. Missing keys keep their defaults; unknown keys and
/// invalid values throw ConfigError naming the offending key.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Canonical JSON of every setting that can change an output (out and threads
/// are excluded).
std::string canonical_config(const RunConfig& cfg);
/// FNV-1a 64 of canonical_config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Thread count from MFCM_THREADS, or fallback when unset.
int threads_from_env(int fallback);

std::string toolkit_version();

} // namespace mfcm
