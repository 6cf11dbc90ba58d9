#include "mfcm/particle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "mfcm/errors.hpp"
#include "mfcm/philox.hpp"

namespace mfcm {

namespace {

// Position inside a unit cell for a linear density running from a to b.
double invert_linear_cell(double a, double b, double u) {
    const double d = b - a;
    const double total = 0.5 * (a + b);
    if (total <= 0.0) return u;
    if (std::abs(d) < 1e-12 * total) return u;
    const double disc = a * a + 2.0 * d * u * total;
    return std::clamp((-a + std::sqrt(std::max(0.0, disc))) / d, 0.0, 1.0);
}

// Cell index and offset for a periodic nodal profile f (cells [i, i+1]).
std::pair<std::size_t, double> sample_periodic(const std::vector<double>& cdf, const double* f, std::size_t g, double u) {
    const double target = u * cdf.back();
    std::size_t i = std::size_t(std::upper_bound(cdf.begin() + 1, cdf.end(), target) - cdf.begin()) - 1;
    if (i >= g) i = g - 1;
    const double cell = cdf[i + 1] - cdf[i];
    const double local = cell > 0 ? (target - cdf[i]) / cell : 0.5;
    return {i, invert_linear_cell(f[i], f[(i + 1) % g], std::clamp(local, 0.0, 1.0))};
}

std::vector<double> cell_cdf(const double* f, std::size_t g) {
    std::vector<double> cdf(g + 1, 0.0);
    for (std::size_t i = 0; i < g; ++i) cdf[i + 1] = cdf[i] + 0.5 * (f[i] + f[(i + 1) % g]);
    return cdf;
}

template <class F>
void parallel_for(std::size_t n, int threads, F body) {
    if (threads <= 1 || n < 65536) {
        body(std::size_t(0), n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + std::size_t(threads) - 1) / std::size_t(threads);
    for (int t = 0; t < threads; ++t) {
        const std::size_t lo = std::size_t(t) * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([=] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace

ParticleEnsemble init_ensemble(const Density& h, std::size_t N, std::uint64_t seed, std::uint64_t index_offset,
                               int grid) {
    if (N < 1) throw ConfigError("InvalidParameter", "ensemble size must be positive");
    const int d = h.dim();
    const int g = grid > 0 ? std::max(grid, h.side()) : (d == 1 ? 4096 : 512);
    std::vector<double> f = h.grid_values(g);
    double neg = 0.0, total = 0.0;
    for (auto& v : f) {
        total += std::abs(v);
        if (v < 0) {
            neg += -v;
            v = 0.0;
        }
    }
    ParticleEnsemble e;
    e.dim = d;
    e.seed = seed;
    e.index_offset = index_offset;
    e.clipped_mass = total > 0 ? neg / total : 0.0;
    if (e.clipped_mass > 1e-3) throw NumericalError("NegativeMass", "density has too much negative mass");
    e.positions.resize(N);
    const double cellw = kTwoPi / g;
    const std::size_t G = std::size_t(g);
    if (d == 1) {
        const auto cdf = cell_cdf(f.data(), G);
        for (std::size_t i = 0; i < N; ++i) {
            const auto u = philox_uniform2(seed, index_offset + i, 0);
            const auto [c, t] = sample_periodic(cdf, f.data(), G, u[0]);
            e.positions[i] = {wrap_angle((double(c) + t) * cellw), 0.0};
        }
        return e;
    }
    std::vector<double> rows(G);
    for (std::size_t i = 0; i < G; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < G; ++j) s += f[i * G + j];
        rows[i] = s;
    }
    const auto cdf1 = cell_cdf(rows.data(), G);
    std::vector<double> prof(G);
    for (std::size_t p = 0; p < N; ++p) {
        const auto u = philox_uniform2(seed, index_offset + p, 0);
        const auto [c, t] = sample_periodic(cdf1, rows.data(), G, u[0]);
        const std::size_t c2 = (c + 1) % G;
        for (std::size_t j = 0; j < G; ++j) prof[j] = (1.0 - t) * f[c * G + j] + t * f[c2 * G + j];
        const auto cdf2 = cell_cdf(prof.data(), G);
        const auto [c_y, t_y] = sample_periodic(cdf2, prof.data(), G, u[1]);
        e.positions[p] = {wrap_angle((double(c) + t) * cellw), wrap_angle((double(c_y) + t_y) * cellw)};
    }
    return e;
}

double mean_alpha(const ModelSpec& model, const TorusPoints& x, int threads) {
    constexpr double scale = 0x1.0p58;
    constexpr std::size_t block = 1024;
    const std::size_t nb = (x.size() + block - 1) / block;
    std::vector<__int128> sums(nb, 0);
    parallel_for(nb, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t b = lo; b < hi; ++b) {
            __int128 s = 0;
            const std::size_t end = std::min(x.size(), (b + 1) * block);
            for (std::size_t i = b * block; i < end; ++i) s += std::llround(model.alpha(x[i]) * scale);
            sums[b] = s;
        }
    });
    // fixed binary tree over block sums
    while (sums.size() > 1) {
        std::vector<__int128> next((sums.size() + 1) / 2);
        for (std::size_t i = 0; i < next.size(); ++i)
            next[i] = sums[2 * i] + (2 * i + 1 < sums.size() ? sums[2 * i + 1] : 0);
        sums.swap(next);
    }
    return double(sums[0]) / scale / double(x.size());
}

void step(ParticleEnsemble& e, const ModelSpec& model, double nu, int threads) {
    const double omega = mean_alpha(model, e.positions, threads);
    e.trajectory.push_back(omega);
    parallel_for(e.positions.size(), threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) e.positions[i] = model.apply_coupled_map(nu, omega, e.positions[i]);
    });
    ++e.n;
}

RunResult analyze_trajectory(const std::vector<double>& traj, const std::vector<double>& stable, double mu,
                             const ResidenceSettings& s) {
    RunResult r;
    if (traj.empty()) return r;
    const double open = s.open_band > 0 ? s.open_band : 5.0 * mu;
    const double close = s.close_band > 0 ? s.close_band : 7.0 * mu;
    double capture = s.capture;
    if (capture <= 0) {
        double spacing = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < stable.size(); ++i) spacing = std::min(spacing, std::abs(stable[i + 1] - stable[i]));
        capture = std::isfinite(spacing) ? 0.25 * spacing : close;
    }

    double sum = 0.0;
    for (double w : traj) sum += w;
    r.mean_omega = sum / double(traj.size());

    std::vector<int> run(stable.size(), 0);
    int open_root = -1;
    long start = 0;
    auto close_res = [&](long end) {
        Residence res;
        res.start = start;
        res.end = end;
        double acc = 0.0;
        for (long n = start; n <= end; ++n) acc += traj[std::size_t(n)];
        res.plateau_mean = acc / double(end - start + 1);
        res.matched_omega = stable[std::size_t(open_root)];
        r.residences.push_back(res);
        open_root = -1;
        std::fill(run.begin(), run.end(), 0);
    };
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const double w = traj[n];
        if (open_root >= 0) {
            if (std::abs(w - stable[std::size_t(open_root)]) > close) close_res(long(n) - 1);
            else continue;
        }
        int best = -1;
        for (std::size_t k = 0; k < stable.size(); ++k) {
            run[k] = std::abs(w - stable[k]) <= open ? run[k] + 1 : 0;
            if (run[k] >= s.hold && (best < 0 || std::abs(w - stable[k]) < std::abs(w - stable[std::size_t(best)])))
                best = int(k);
        }
        if (best >= 0) {
            open_root = best;
            start = long(n) - s.hold + 1;
        }
    }
    if (open_root >= 0) close_res(long(traj.size()) - 1);

    int label = -1;
    double label_root = 0.0;
    for (std::size_t n = 0; n < traj.size(); ++n) {
        const double w = traj[n];
        int best = -1;
        for (std::size_t k = 0; k < stable.size(); ++k)
            if (std::abs(w - stable[k]) <= capture && (best < 0 || std::abs(w - stable[k]) < std::abs(w - stable[std::size_t(best)])))
                best = int(k);
        if (best >= 0 && best != label) {
            if (label >= 0) {
                ++r.switches;
                r.switch_steps.push_back(long(n));
            } else {
                label_root = stable[std::size_t(best)];
            }
            label = best;
        }
    }
    if (label >= 0 && r.switches == 0)
        for (double w : traj) r.max_deviation = std::max(r.max_deviation, std::abs(w - label_root));
    return r;
}

RunResult run(ParticleEnsemble& e, const ModelSpec& model, double nu, long steps,
              const std::vector<double>& stable_omegas, const ResidenceSettings& s, int threads) {
    const std::size_t first = e.trajectory.size();
    for (long i = 0; i < steps; ++i) step(e, model, nu, threads);
    const std::vector<double> part(e.trajectory.begin() + long(first), e.trajectory.end());
    RunResult r = analyze_trajectory(part, stable_omegas, model.mu(), s);
    for (auto& res : r.residences) {
        res.start += long(first);
        res.end += long(first);
    }
    for (auto& sw : r.switch_steps) sw += long(first);
    return r;
}

} // namespace mfcm
