#pragma once

#include <cstdint>
#include <vector>

#include "mfcm/density.hpp"
#include "mfcm/model.hpp"

namespace mfcm {

struct ParticleEnsemble {
    int dim = 2;
    TorusPoints positions;
    long n = 0;                      // steps taken
    std::uint64_t seed = 0;
    std::uint64_t index_offset = 0;  // global index of positions[0]
    std::vector<double> trajectory;  // omega_n before step n+1
    double clipped_mass = 0.0;
};

/// I.i.d. samples from a density by conditional inverse CDFs on a sampling
/// grid (piecewise-linear CDF per axis). Particle i uses the Philox stream
/// (seed, index_offset + i). Throws NumericalError("NegativeMass").
ParticleEnsemble init_ensemble(const Density& h, std::size_t N, std::uint64_t seed, std::uint64_t index_offset = 0,
                               int grid = 0);

/// (1/N) sum alpha(x_i), accumulated exactly in fixed point so the value does
/// not depend on particle order or thread count.
double mean_alpha(const ModelSpec& model, const TorusPoints& x, int threads = 1);

/// One step x_i <- T(x_i) + nu beta omega_n; appends omega_n.
void step(ParticleEnsemble& e, const ModelSpec& model, double nu, int threads = 1);

struct ResidenceSettings {
    double open_band = 0.0;   // 0: 5 mu
    double close_band = 0.0;  // 0: 7 mu
    int hold = 100;
    double capture = 0.0;     // 0: a quarter of the smallest stable-root spacing
};

struct Residence {
    long start = 0, end = 0;  // inclusive step range
    double plateau_mean = 0.0;
    double matched_omega = 0.0;
};

struct RunResult {
    std::vector<Residence> residences;
    int switches = 0;
    std::vector<long> switch_steps;
    double mean_omega = 0.0;
    double max_deviation = 0.0;  // max |omega_n - initial basin root| (zero switches only)
};

RunResult analyze_trajectory(const std::vector<double>& traj, const std::vector<double>& stable_omegas, double mu,
                             const ResidenceSettings& s = {});

/// Iterates `steps` times and analyzes the newly recorded part of the trajectory.
RunResult run(ParticleEnsemble& e, const ModelSpec& model, double nu, long steps,
              const std::vector<double>& stable_omegas, const ResidenceSettings& s = {}, int threads = 1);

} // namespace mfcm
