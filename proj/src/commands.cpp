#include "mfcm/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "mfcm/errors.hpp"
#include "mfcm/philox.hpp"

namespace mfcm {

using nlohmann::json;

namespace {

struct Setup {
    ModelSpec model;
    MeanFieldSystem sys;
    explicit Setup(const RunConfig& c)
        : model(build_model(c.model)), sys(model, c.transfer, c.meanfield) {}
};

std::string out_path(const RunConfig& c, const std::string& name) {
    return (std::filesystem::path(c.out) / name).string();
}

// Runs body(i) for i in [0, n) on up to `threads` workers; results are stored
// by index so the merge order never depends on scheduling.
template <class F>
void parallel_indices(std::size_t n, int threads, F body) {
    const int workers = int(std::min<std::size_t>(std::size_t(std::max(threads, 1)), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                    next = n;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<double> nu_grid(double lo, double hi, int count) {
    std::vector<double> v(std::size_t(std::max(count, 1)));
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = v.size() == 1 ? lo : lo + (hi - lo) * double(i) / double(v.size() - 1);
    return v;
}

struct CellResult {
    std::vector<FixedPointRecord> recs;
    std::vector<StabilityReport> reports;
};

CellResult solve_cell(const Setup& s, const RunConfig& c, double nu, bool keep_density = false) {
    CellResult cell;
    for (double om : solve_scalar_all(s.sys, nu)) {
        auto rec = s.sys.record(nu, om, true);
        cell.reports.push_back(classify(s.sys, rec, c.classify));
        if (!keep_density) rec.density.reset();
        cell.recs.push_back(std::move(rec));
    }
    return cell;
}

} // namespace

OutputMeta make_meta(const RunConfig& cfg) { return {config_hash(cfg), toolkit_version()}; }

int cmd_trace(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    const double nu_hi = c.trace.nu_hi > 0 ? c.trace.nu_hi : s.model.nu_max();
    if (nu_hi <= c.trace.nu_lo) throw ConfigError("InvalidValue", "key 'trace.nu_hi' must exceed trace.nu_lo");
    const auto start = start_point(s.sys, c.trace.nu_lo);
    Branch br = trace_branch(s.sys, c.trace.nu_lo, nu_hi, start, c.trace.settings);
    if (c.trace.classify) classify_branch(s.sys, br, c.classify);

    std::ostringstream csv;
    write_branch_csv(csv, br, meta);
    write_file(out_path(c, "branch.csv"), csv.str());

    const auto grid = nu_grid(c.trace.nu_lo, nu_hi, c.trace.count_points);
    // pieces of the solution set that reach nu_hi without joining the branch
    const auto comps = trace_residual_components(s.sys, br);
    std::vector<const Branch*> traced{&br};
    for (const auto& cb : comps) traced.push_back(&cb);

    std::vector<std::vector<double>> roots(grid.size()), missed(grid.size());
    parallel_indices(grid.size(), c.threads, [&](std::size_t i) {
        roots[i] = solve_scalar_all(s.sys, grid[i]);
        std::vector<double> known;
        for (const Branch* b : traced) {
            const auto w = branch_omegas_at(s.sys, *b, grid[i]);
            known.insert(known.end(), w.begin(), w.end());
        }
        for (double r : roots[i])
            if (std::none_of(known.begin(), known.end(), [&](double w) { return std::abs(w - r) <= 1e-8; }))
                missed[i].push_back(r);
    });
    json count_list = json::array();
    json unmatched = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        count_list.push_back({{"nu", grid[i]}, {"count", roots[i].size()}});
        if (!missed[i].empty()) unmatched.push_back({{"nu", grid[i]}, {"omegas", missed[i]}});
    }
    json folds = json::array();
    for (const auto& f : br.folds) folds.push_back(fold_json(f));
    json components = json::array();
    for (const auto& cb : comps) {
        json cf = json::array();
        for (const auto& f : cb.folds) cf.push_back(fold_json(f));
        components.push_back({{"start_nu", cb.points.front().rec.nu},
                              {"start_omega", cb.points.front().rec.omega},
                              {"points", cb.points.size()},
                              {"folds", cf}});
    }
    json summary = {{"nu_lo", c.trace.nu_lo},
                    {"nu_hi", nu_hi},
                    {"points", br.points.size()},
                    {"folds", folds},
                    {"solution_counts", count_list},
                    {"residual_components", components},
                    {"unmatched_roots", unmatched},
                    {"corrector_runs", br.stats.corrector_runs},
                    {"rejected_steps", br.stats.rejected_steps},
                    {"max_run_contraction", br.stats.max_run_contraction},
                    {"max_certificate_contraction", br.stats.max_certificate_contraction}};
    write_json_file(out_path(c, "branch.json"), stamp(summary, meta));
    log << "trace: " << br.points.size() << " points, " << br.folds.size() << " folds on [" << c.trace.nu_lo << ", "
        << nu_hi << "], " << comps.size() << " residual components\n";
    return kExitOk;
}

int cmd_sweep(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    const auto grid = nu_grid(c.sweep.nu_lo, c.sweep.nu_hi, c.sweep.count);
    std::vector<CellResult> cells(grid.size());
    parallel_indices(grid.size(), c.threads, [&](std::size_t i) { cells[i] = solve_cell(s, c, grid[i]); });
    std::vector<FixedPointRecord> recs;
    std::vector<StabilityReport> reps;
    json counts = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        int physical = 0;
        for (const auto& r : cells[i].reports) physical += r.classification == Stability::Physical;
        counts.push_back({{"nu", grid[i]}, {"count", cells[i].recs.size()}, {"physical", physical}});
        recs.insert(recs.end(), cells[i].recs.begin(), cells[i].recs.end());
        reps.insert(reps.end(), cells[i].reports.begin(), cells[i].reports.end());
    }
    std::ostringstream csv;
    write_sweep_csv(csv, recs, reps, meta);
    write_file(out_path(c, "sweep.csv"), csv.str());
    write_json_file(out_path(c, "sweep.json"), stamp({{"solution_counts", counts}}, meta));
    log << "sweep: " << recs.size() << " fixed points over " << grid.size() << " values of nu\n";
    return kExitOk;
}

int cmd_stability(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    std::vector<CellResult> cells(c.stability.nus.size());
    parallel_indices(cells.size(), c.threads,
                     [&](std::size_t i) { cells[i] = solve_cell(s, c, c.stability.nus[i], true); });
    json reports = json::array();
    std::vector<FixedPointRecord> recs;
    for (auto& cell : cells)
        for (std::size_t j = 0; j < cell.recs.size(); ++j) {
            // one density file per fixed_points.csv row, numbered from 0
            const std::string name = "density_" + std::to_string(recs.size()) + ".csv";
            std::ostringstream dcsv;
            write_density_csv(dcsv, *cell.recs[j].density, meta);
            write_file(out_path(c, name), dcsv.str());
            json rep = stability_json(cell.recs[j], cell.reports[j]);
            rep["density_file"] = name;
            reports.push_back(rep);
            cell.recs[j].density.reset();
            recs.push_back(cell.recs[j]);
        }
    std::ostringstream csv;
    write_fixed_point_csv(csv, recs, meta);
    write_file(out_path(c, "fixed_points.csv"), csv.str());
    write_json_file(out_path(c, "stability.json"), stamp({{"reports", reports}}, meta));
    log << "stability: classified " << recs.size() << " fixed points\n";
    return kExitOk;
}

int cmd_simulate(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    const auto& sim = c.simulate;
    const auto cell = solve_cell(s, c, sim.nu);
    std::vector<double> stable;
    for (std::size_t i = 0; i < cell.recs.size(); ++i)
        if (cell.reports[i].classification == Stability::Physical) stable.push_back(cell.recs[i].omega);

    Density h0;
    if (sim.init == "uniform") {
        h0 = Density::uniform(s.model.dim(), s.sys.cutoff());
    } else if (sim.init == "perturbative") {
        h0 = perturbative_density(s.model, sim.nu, sim.omega0, s.sys.cutoff());
    } else {
        const auto roots = solve_scalar_all(s.sys, sim.nu);
        const double om = *std::min_element(roots.begin(), roots.end(), [&](double a, double b) {
            return std::abs(a - sim.omega0) < std::abs(b - sim.omega0);
        });
        h0 = *s.sys.record(sim.nu, om, true).density;
    }
    auto ens = init_ensemble(h0, std::size_t(sim.particles), c.seed, 0, sim.sampling_grid);
    const auto result = run(ens, s.model, sim.nu, sim.steps, stable, sim.residence, c.threads);

    std::ostringstream csv;
    write_trajectory_csv(csv, ens.trajectory, meta);
    write_file(out_path(c, "trajectory.csv"), csv.str());
    json j = residence_json(result);
    j["nu"] = sim.nu;
    j["particles"] = sim.particles;
    j["steps"] = sim.steps;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["stable_omegas"] = stable;
    j["clipped_mass"] = ens.clipped_mass;
    write_json_file(out_path(c, "residence.json"), stamp(j, meta));
    log << "simulate: " << sim.steps << " steps, " << result.residences.size() << " residences, " << result.switches
        << " switches\n";
    return kExitOk;
}

int cmd_ift_certify(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    const double nu0 = c.certify.nu;
    const auto roots = solve_scalar_all(s.sys, nu0);
    const double want = c.certify.omega > 0 ? c.certify.omega : 1.0;
    const double om0 = *std::min_element(roots.begin(), roots.end(), [&](double a, double b) {
        return std::abs(a - want) < std::abs(b - want);
    });
    const auto& sys = s.sys;
    ScalarFSystem F{[&sys](double x, double l) { return x - sys.mean_field_map(l, x); },
                    [&sys](double x, double l) { return 1.0 - sys.gamma(l, x); },
                    [&sys](double x, double l) { return -sys.dM_dnu(l, x); }};
    const auto cert = certify_adaptive(F, om0, nu0, c.certify.delta_max, c.certify.delta_min);
    const double target = nu0 + 0.5 * cert.delta1;
    const auto corr = newton_corrector(F, cert, target);
    json j = {{"certificate", certificate_json(cert)},
              {"corrector",
               {{"nu", target},
                {"omega", corr.x},
                {"iterations", corr.iterations},
                {"residual", corr.residual},
                {"contraction", corr.contraction}}}};
    write_json_file(out_path(c, "certificate.json"), stamp(j, meta));
    log << "ift-certify: delta=" << cert.delta << " delta1=" << cert.delta1 << " contraction=" << cert.contraction
        << " corrector contraction=" << corr.contraction << "\n";
    return kExitOk;
}

namespace {

struct Check {
    std::string suite, name;
    double measured = 0.0, threshold = 0.0;
    bool upper = true;  // measured must stay <= threshold (else >=)
    bool pass() const { return std::isfinite(measured) && (upper ? measured <= threshold : measured >= threshold); }
    double margin() const { return upper ? threshold - measured : measured - threshold; }
};

Point philox_point(std::uint64_t seed, std::uint64_t i) {
    const auto u = philox_uniform2(seed, i, 0);
    return {kTwoPi * u[0], kTwoPi * u[1]};
}

} // namespace

int cmd_validate(const RunConfig& c, std::ostream& log) {
    Setup s(c);
    const auto meta = make_meta(c);
    const auto& m = s.model;
    const double mu = m.mu();
    std::vector<Check> checks;

    {  // model
        double rt = 0.0;
        for (std::uint64_t i = 0; i < 1000; ++i) {
            Point x = philox_point(c.seed, i);
            if (m.dim() == 1) x[1] = 0.0;
            const Point y = m.invert_rho(m.rho(x));
            for (int d = 0; d < m.dim(); ++d)
                rt = std::max(rt, std::abs(std::remainder(y[std::size_t(d)] - x[std::size_t(d)], kTwoPi)));
        }
        checks.push_back({"model", "rho_roundtrip", rt, 1e-11});
        if (mu > 0) {
            auto expansion_err = [&](double mu_) {
                ModelConfig mc = c.model;
                mc.mu = mu_;
                const ModelSpec mm = build_model(mc);
                double e = 0.0;
                for (std::uint64_t i = 0; i < 400; ++i) {
                    Point y = philox_point(c.seed + 1, i);
                    if (m.dim() == 1) y[1] = 0.0;
                    const auto [a, b] = mm.coefficients_ab(y);
                    e = std::max(e, std::abs(mm.inverse_jacobian_det(y) - (1.0 + a * mu_ + b * mu_ * mu_)));
                }
                return e;
            };
            const double slope = std::log2(expansion_err(mu) / expansion_err(mu / 2));
            checks.push_back({"model", "jacobian_expansion_order", slope, 2.7, false});
        }
    }
    {  // transfer
        // a smooth positive bump
        Density g(m.dim(), s.sys.cutoff());
        const int K = std::min(4, s.sys.cutoff());
        for (int a = -K; a <= K; ++a)
            for (int b = (m.dim() == 1 ? 0 : -K); b <= (m.dim() == 1 ? 0 : K); ++b)
                g.at(a, b) = std::exp(-0.5 * double(a * a + b * b)) / std::pow(kTwoPi, m.dim()) / 4.0;
        g.set_zero_mode(1.0 / std::pow(kTwoPi, m.dim()));
        ApplyStats st;
        s.sys.core()->apply_generic(g, &st);
        checks.push_back({"transfer", "mass_drift_generic", st.mass_drift, c.transfer.max_mass_drift});
        if (s.sys.core()->annihilates()) {
            const Density sc = s.sys.core()->apply(g);
            checks.push_back({"transfer", "shortcut_matches_generic",
                              (s.sys.core()->apply_generic(g) - sc).max_abs_coeff() * std::pow(kTwoPi, m.dim()),
                              1e-8});
        }
    }
    {  // meanfield
        double fd = 0.0, xi = 0.0;
        for (double nu : {5.0, 20.0, 40.0}) {
            for (double om : {0.97, 1.0, 1.03}) {
                const double hstep = 1e-5;
                const double d = (s.sys.mean_field_map(nu, om + hstep) - s.sys.mean_field_map(nu, om - hstep)) / (2 * hstep);
                fd = std::max(fd, std::abs(s.sys.gamma(nu, om) - d));
            }
            // Xi(1) = Gamma holds at fixed points only
            for (double om : solve_scalar_all(s.sys, nu)) {
                const auto rec = s.sys.record(nu, om, true);
                xi = std::max(xi, std::abs(rec.xi1 - cplx(rec.gamma, 0.0)));
            }
        }
        checks.push_back({"meanfield", "gamma_vs_finite_difference", fd, 1e-6});
        checks.push_back({"meanfield", "xi1_equals_gamma", xi, 1e-8});
    }
    json crossings = json::array();
    {  // continuation + stability on a window holding the first folds
        const double hi = std::min(s.model.nu_max(), 70.0);
        const auto start = start_point(s.sys, 0.0);
        Branch br = trace_branch(s.sys, 0.0, hi, start, c.trace.settings);
        classify_branch(s.sys, br, c.classify);
        checks.push_back({"continuation", "max_corrector_contraction", br.stats.max_run_contraction, 0.5});
        double nu1 = 0.0, nu2 = 0.0;
        for (const auto& f : br.folds) {
            // fitted slope against the slope nu'' * hw at the window edge
            nu1 = std::max(nu1, std::abs(f.nu1_fit) / (1e-5 * std::abs(f.nu2_formula) * f.fit_half_width));
            if (std::isfinite(f.nu2_formula) && f.nu2_formula != 0.0)
                nu2 = std::max(nu2, std::abs(f.nu2_fit - f.nu2_formula) / std::abs(f.nu2_formula));
        }
        if (!br.folds.empty()) {
            checks.push_back({"continuation", "fold_first_derivative_ratio", nu1, 1.0});
            checks.push_back({"continuation", "fold_curvature_relative", nu2, 1e-3});
        }
        // Stability may only change across a fold; z = -1 crossings are listed apart.
        int bad = 0;
        Stability last = Stability::Unknown;
        bool fold_since = false;
        for (std::size_t i = 0; i < br.points.size(); ++i) {
            const auto& p = br.points[i];
            if (p.fold) fold_since = true;
            if (p.stability != Stability::Physical && p.stability != Stability::Unstable) continue;
            if (last != Stability::Unknown && p.stability != last && !fold_since) {
                if (p.leading_eig.real() < 0 || (i > 0 && br.points[i - 1].leading_eig.real() < 0))
                    crossings.push_back({{"nu", p.rec.nu}, {"omega", p.rec.omega}});
                else
                    ++bad;
            }
            last = p.stability;
            fold_since = false;
        }
        checks.push_back({"stability", "changes_only_at_folds", double(bad), 0.0});
        const auto rec = s.sys.record(std::min(10.0, hi), solve_scalar_all(s.sys, std::min(10.0, hi)).front(), true);
        const auto rep = classify(s.sys, rec, c.classify);
        checks.push_back({"stability", "weak_coupling_physical", rep.classification == Stability::Physical ? 0.0 : 1.0, 0.0});
    }
    {  // particle
        const Density u = Density::uniform(m.dim(), s.sys.cutoff());
        auto e = init_ensemble(u, 3000, c.seed);
        auto p = e;
        std::vector<std::size_t> perm(e.positions.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::reverse(perm.begin(), perm.end());
        for (std::size_t i = 0; i < perm.size(); ++i) p.positions[i] = e.positions[perm[i]];
        step(e, m, 20.0);
        step(p, m, 20.0);
        int mismatch = 0;
        for (std::size_t i = 0; i < perm.size(); ++i) mismatch += p.positions[i] != e.positions[perm[i]];
        mismatch += e.trajectory != p.trajectory;
        checks.push_back({"particle", "permutation_equivariance_mismatches", double(mismatch), 0.0});
        auto big = init_ensemble(u, 70000, c.seed);
        const double a1 = mean_alpha(m, big.positions, 1), a4 = mean_alpha(m, big.positions, 4);
        checks.push_back({"particle", "thread_count_invariance", a1 == a4 ? 0.0 : std::abs(a1 - a4), 0.0});
    }

    json list = json::array();
    bool ok = true;
    for (const auto& ch : checks) {
        ok = ok && ch.pass();
        list.push_back({{"suite", ch.suite},
                        {"name", ch.name},
                        {"measured", ch.measured},
                        {"threshold", ch.threshold},
                        {"kind", ch.upper ? "max" : "min"},
                        {"margin", ch.margin()},
                        {"pass", ch.pass()}});
        log << (ch.pass() ? "PASS " : "FAIL ") << ch.suite << "." << ch.name << " measured=" << fmt_double(ch.measured)
            << " threshold=" << fmt_double(ch.threshold) << " margin=" << fmt_double(ch.margin()) << "\n";
    }
    log << "z=-1 crossings: " << crossings.size() << "\n";
    write_json_file(out_path(c, "validate.json"),
                    stamp({{"checks", list}, {"all_pass", ok}, {"flip_crossings", crossings}}, meta));
    return ok ? kExitOk : kExitNumerical;
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    auto fail = [&](int code, const std::string& ecode, const std::string& what, double residual) {
        err << "error: " << what << "\n";
        try {
            write_json_file(out_path(cfg, "error.json"), stamp(error_json(ecode, what, residual), make_meta(cfg)));
        } catch (...) {
        }
        return code;
    };
    try {
        if (name == "trace") return cmd_trace(cfg, log);
        if (name == "sweep") return cmd_sweep(cfg, log);
        if (name == "stability") return cmd_stability(cfg, log);
        if (name == "simulate") return cmd_simulate(cfg, log);
        if (name == "validate") return cmd_validate(cfg, log);
        if (name == "ift-certify") return cmd_ift_certify(cfg, log);
        return fail(kExitConfig, "UnknownCommand", "UnknownCommand: unknown subcommand '" + name + "'", NAN);
    } catch (const ConfigError& e) {
        return fail(kExitConfig, e.code(), e.what(), NAN);
    } catch (const NumericalError& e) {
        return fail(kExitNumerical, e.code(), e.what(), e.residual());
    } catch (const std::exception& e) {
        return fail(kExitNumerical, "InternalError", std::string("InternalError: ") + e.what(), NAN);
    }
}

} // namespace mfcm
