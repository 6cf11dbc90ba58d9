#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfcm/continuation.hpp"
#include "mfcm/meanfield.hpp"
#include "mfcm/particle.hpp"
#include "mfcm/stability.hpp"

namespace mfcm {

/// Version and config hash stamped into every output file.
struct OutputMeta {
    std::string config_hash;
    std::string version;
};

/// "mfcm_version=... config_hash=..." for CSV comment headers.
std::string meta_line(const OutputMeta& meta);
/// Adds version and config_hash to a JSON object.
nlohmann::json stamp(nlohmann::json j, const OutputMeta& meta);

/// Shortest decimal that round-trips (deterministic across runs).
std::string fmt_double(double v);

void write_branch_csv(std::ostream& os, const Branch& branch, const OutputMeta& meta);
void write_fixed_point_csv(std::ostream& os, const std::vector<FixedPointRecord>& recs, const OutputMeta& meta);
/// Fixed-point columns followed by stability and leading eigenvalue.
void write_sweep_csv(std::ostream& os, const std::vector<FixedPointRecord>& recs,
                     const std::vector<StabilityReport>& reports, const OutputMeta& meta);
/// Fourier coefficients as k1,k2,re,im rows, k1 ascending then k2 ascending
/// (k2 = 0 in one dimension).
void write_density_csv(std::ostream& os, const Density& h, const OutputMeta& meta);
void write_trajectory_csv(std::ostream& os, const std::vector<double>& omegas, const OutputMeta& meta);

nlohmann::json fold_json(const FoldRecord& f);
nlohmann::json residence_json(const RunResult& r);
nlohmann::json stability_json(const FixedPointRecord& fp, const StabilityReport& rep);
nlohmann::json certificate_json(const IFTCertificate& c);
nlohmann::json error_json(const std::string& code, const std::string& message, double residual);

/// Writes text to path through a temporary file and rename.
void write_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::json& j);

} // namespace mfcm
