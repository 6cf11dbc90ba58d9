#include "mfcm/continuation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfcm/errors.hpp"

namespace mfcm {

std::string to_string(Stability s) {
    switch (s) {
    case Stability::Physical: return "physical";
    case Stability::Unstable: return "unstable";
    case Stability::Marginal: return "marginal";
    default: return "unknown";
    }
}

IFTCertificate certify(const ScalarFSystem& sys, double x0, double lambda0, double delta, int samples) {
    IFTCertificate c;
    c.x0 = x0;
    c.lambda0 = lambda0;
    c.delta = delta;
    c.a0 = sys.dFdx(x0, lambda0);
    if (c.a0 == 0.0 || !std::isfinite(c.a0)) {
        c.contraction = std::numeric_limits<double>::infinity();
        return c;
    }
    const double cap = 1e6;
    const double up_center = std::abs(sys.dFdlambda(x0, lambda0) / c.a0);
    double box = std::min(cap, delta / (2.0 * std::max(up_center, delta / (2.0 * cap))));
    double sup_contr = 0.0, sup_up = 0.0, sup_dx = 0.0, sup_dl = 0.0, lip = 0.0;
    for (int pass = 0; pass < 4; ++pass) {
        sup_contr = sup_up = sup_dx = sup_dl = lip = 0.0;
        for (int i = 0; i < samples; ++i) {
            const double x = x0 + delta * (2.0 * i / (samples - 1) - 1.0);
            for (int j = 0; j < samples; ++j) {
                const double l = lambda0 + box * (2.0 * j / (samples - 1) - 1.0);
                const double dx = sys.dFdx(x, l), dl = sys.dFdlambda(x, l);
                sup_contr = std::max(sup_contr, std::abs(1.0 - dx / c.a0));
                sup_up = std::max(sup_up, std::abs(dl / c.a0));
                sup_dx = std::max(sup_dx, std::abs(dx));
                sup_dl = std::max(sup_dl, std::abs(dl));
                lip = std::max(lip, std::abs(dx - c.a0) / delta);
            }
        }
        const double wanted = std::min(cap, delta / (2.0 * std::max(sup_up, delta / (2.0 * cap))));
        if (wanted <= box * (1.0 + 1e-12)) {
            box = wanted;
            if (pass > 0) break;
        } else {
            // sampled box is smaller than the bound would allow: keep it and
            // report the matching (conservative) upsilon
            sup_up = delta / (2.0 * box);
            break;
        }
    }
    c.delta1 = box;
    c.upsilon = delta / (2.0 * box);
    c.contraction = sup_contr;
    c.cbar = std::max({1.0, sup_dx, sup_dl, lip});
    const double q = 1.0 / std::abs(c.a0) + 1.0;
    c.formula_delta = 1.0 / (4.0 * c.cbar * c.cbar * q * q);
    c.formula_delta1 = c.formula_delta / (2.0 * std::max(c.upsilon, 1e-300));
    return c;
}

IFTCertificate certify_adaptive(const ScalarFSystem& sys, double x0, double lambda0, double delta_max,
                                double delta_min, int samples) {
    for (double d = delta_max; d >= delta_min; d *= 0.5) {
        IFTCertificate c = certify(sys, x0, lambda0, d, samples);
        if (c.valid()) return c;
    }
    std::ostringstream os;
    os << "no certified radius at x=" << x0 << " lambda=" << lambda0;
    throw NumericalError("CertificateFailed", os.str());
}

CorrectorResult newton_corrector(const ScalarFSystem& sys, const IFTCertificate& cert, double lambda,
                                 double x_start, double tol, int max_iter) {
    if (std::abs(lambda - cert.lambda0) > cert.delta1 * (1.0 + 1e-12))
        throw NumericalError("OutsideCertificate", "parameter outside the certified radius");
    if (!cert.valid()) throw NumericalError("ContractionViolated", "certificate contraction exceeds 1/2");
    CorrectorResult r;
    double x = std::isnan(x_start) ? cert.x0 : x_start;
    if (std::abs(x - cert.x0) > cert.delta) x = cert.x0 + std::copysign(cert.delta, x - cert.x0);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int it = 1; it <= max_iter; ++it) {
        const double f = sys.F(x, lambda);
        const double step = f / cert.a0;
        const double xn = x - step;
        r.iterations = it;
        if (std::abs(xn - cert.x0) > cert.delta * (1.0 + 1e-9))
            throw NumericalError("OutsideCertificate", "corrector iterate left the certified ball");
        const double floor = 1e-13 * (1.0 + std::abs(x));
        if (!std::isnan(prev) && std::abs(prev) > floor && std::abs(step) > 0.01 * floor) {
            const double ratio = std::abs(step) / std::abs(prev);
            r.contraction = std::max(r.contraction, ratio);
            if (ratio > 0.5) throw NumericalError("ContractionViolated", "measured contraction above 1/2", ratio);
        }
        x = xn;
        prev = step;
        if (std::abs(step) <= tol * (1.0 + std::abs(x))) {
            r.x = x;
            r.residual = std::abs(sys.F(x, lambda));
            return r;
        }
    }
    throw NumericalError("NoConvergence", "frozen-slope corrector did not converge");
}

std::vector<double> solve_scalar_all(const MeanFieldSystem& sys, double nu, int grid, double tol) {
    const auto& k = sys.model().k();
    const double knorm = std::hypot(double(k[0]), double(k[1]));
    const double w = sys.model().mu() * std::max(1.0, knorm);
    if (w == 0.0) return {sys.mean_field_map(nu, 1.0)};
    auto g = [&](double om) { return om - sys.mean_field_map(nu, om); };
    std::vector<double> om(static_cast<std::size_t>(grid)), gv(static_cast<std::size_t>(grid));
    for (int i = 0; i < grid; ++i) {
        om[std::size_t(i)] = 1.0 - w + 2.0 * w * double(i) / double(grid - 1);
        gv[std::size_t(i)] = g(om[std::size_t(i)]);
    }
    std::vector<double> roots;
    for (int i = 0; i < grid; ++i) {
        if (gv[std::size_t(i)] == 0.0) {
            roots.push_back(om[std::size_t(i)]);
            continue;
        }
        if (i + 1 < grid && gv[std::size_t(i + 1)] != 0.0 &&
            std::signbit(gv[std::size_t(i)]) != std::signbit(gv[std::size_t(i + 1)])) {
            double a = om[std::size_t(i)], b = om[std::size_t(i + 1)], ga = gv[std::size_t(i)];
            while (b - a > tol) {
                const double m = 0.5 * (a + b);
                const double gm = g(m);
                if (gm == 0.0) {
                    a = b = m;
                    break;
                }
                if (std::signbit(gm) == std::signbit(ga)) {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

FixedPointRecord start_point(const MeanFieldSystem& sys, double nu) {
    const auto roots = solve_scalar_all(sys, nu);
    if (roots.size() != 1) throw NumericalError("NotUnique", "start point is not the unique root");
    return sys.record(nu, roots[0]);
}

double solve_nu_at_omega(const MeanFieldSystem& sys, double omega, double nu_guess, double tol) {
    double nu = nu_guess;
    for (int it = 0; it < 100; ++it) {
        const double f = omega - sys.mean_field_map(nu, omega);
        const double d = -sys.dM_dnu(nu, omega);
        if (d == 0.0) throw NumericalError("Singular", "dM/dnu vanishes");
        const double step = f / d;
        nu -= step;
        if (std::abs(step) <= tol * (1.0 + std::abs(nu))) return nu;
    }
    throw NumericalError("NoConvergence", "nu(omega) Newton solve did not converge");
}

double fold_curvature_formula(const MeanFieldSystem& sys, double nu0, double omega0) {
    const Density H = sys.frozen_srb(nu0, omega0);
    const Density d2 = sys.d2F_dh2_along_theta(nu0, H);
    return nu0 * nu0 * nu0 * sys.Z(d2) / omega0;
}

FoldRecord detect_fold(const MeanFieldSystem& sys, const BranchPoint& a, const BranchPoint& b,
                       const TraceSettings& s) {
    const double pa = 1.0 - a.rec.gamma, pb = 1.0 - b.rec.gamma;
    if (std::signbit(pa) == std::signbit(pb)) throw NumericalError("NoCrossing", "Gamma does not cross 1");
    double wa = a.rec.omega, wb = b.rec.omega, fa = pa, fb = pb;
    double nua = a.rec.nu, nub = b.rec.nu;
    double w = wa, nu = nua, f = fa;
    int side = 0;
    for (int it = 0; it < 200; ++it) {
        w = (wa * fb - wb * fa) / (fb - fa);
        if (!(w > std::min(wa, wb) && w < std::max(wa, wb))) w = 0.5 * (wa + wb);
        const double t = (w - wa) / (wb - wa);
        nu = solve_nu_at_omega(sys, w, nua + t * (nub - nua));
        f = 1.0 - sys.gamma(nu, w);
        if (std::abs(f) <= s.fold_tol || std::abs(wb - wa) < 1e-15) break;
        if (std::signbit(f) == std::signbit(fa)) {
            wa = w;
            nua = nu;
            fa = f;
            if (side == -1) fb *= 0.5;
            side = -1;
        } else {
            wb = w;
            nub = nu;
            fb = f;
            if (side == 1) fa *= 0.5;
            side = 1;
        }
    }
    FoldRecord r;
    r.nu = nu;
    r.omega = w;
    r.gamma = 1.0 - f;
    if (s.fold_curvature) {
        r.nu2_formula = fold_curvature_formula(sys, nu, w);
        // Fit nu(omega), which stays a smooth graph through the fold, and
        // convert to tau = nu - omega afterwards. nu(omega) turns singular
        // where dM/dnu vanishes, so the window is a fraction of that distance.
        const double mn = sys.dM_dnu(nu, w);
        const double e = 1e-7;
        const double dmn = (sys.dM_dnu(nu, w + e) - sys.dM_dnu(nu, w - e)) / (2.0 * e);
        double reach = 1.0 / std::max(1.0, std::abs(nu));
        if (dmn != 0.0) reach = std::min(reach, std::abs(mn / dmn));
        const double hw = s.fit_scale * reach;
        const int m = 9;
        Eigen::MatrixXd V(m, 5);
        Eigen::VectorXd y(m);
        for (int j = 0; j < m; ++j) {
            const double tj = double(j - 4) / 4.0;
            const double nj = solve_nu_at_omega(sys, w + hw * tj, nu);
            for (int p = 0; p < 5; ++p) V(j, p) = std::pow(tj, p);
            y(j) = nj - nu;
        }
        const Eigen::VectorXd c = V.colPivHouseholderQr().solve(y);
        const double n1 = c(1) / hw, n2 = 2.0 * c(2) / (hw * hw);
        // d nu/d tau = n1 / (n1 - 1), d2 nu/d tau2 = -n2 / (n1 - 1)^3
        r.nu1_fit = n1 / (n1 - 1.0);
        r.nu2_fit = -n2 / std::pow(n1 - 1.0, 3);
        r.fit_half_width = hw;
        r.kind = r.nu2_formula < 0 ? +1 : -1;
    } else {
        r.kind = 0;
    }
    return r;
}

namespace {

struct Eval {
    double gamma, mnu;
};

} // namespace

Branch trace_branch(const MeanFieldSystem& sys, double nu_lo, double nu_hi, const FixedPointRecord& start,
                    const TraceSettings& s) {
    Branch br;
    br.settings = s;
    br.nu_lo = nu_lo;
    br.nu_hi = nu_hi;
    auto eval = [&](double nu, double om) { return Eval{sys.gamma(nu, om), sys.dM_dnu(nu, om)}; };

    BranchPoint cur;
    cur.rec = start;
    cur.tau = 0.0;
    Eval ec = eval(start.nu, start.omega);
    const double orient = ((1.0 - ec.gamma) >= 0 ? 1.0 : -1.0) * (s.start_direction < 0 ? -1.0 : 1.0);
    int chart = std::abs(1.0 - ec.gamma) >= s.switch_threshold ? 0 : 1;
    cur.chart = chart;
    br.points.push_back(cur);

    ScalarFSystem nu_chart{
        [&](double x, double l) { return x - sys.mean_field_map(l, x); },
        [&](double x, double l) { return 1.0 - sys.gamma(l, x); },
        [&](double x, double l) { return -sys.dM_dnu(l, x); }};
    ScalarFSystem om_chart{
        [&](double x, double l) { return l - sys.mean_field_map(x, l); },
        [&](double x, double l) { return -sys.dM_dnu(x, l); },
        [&](double x, double l) { return 1.0 - sys.gamma(x, l); }};

    double hfac = 1.0;
    bool done = false;
    const std::size_t max_points = 4000000;
    while (!done) {
        if (br.points.size() > max_points) throw NumericalError("StepCollapse", "too many branch points");
        const double a = std::abs(1.0 - ec.gamma);
        if (chart == 0 && a < s.switch_threshold) chart = 1;
        else if (chart == 1 && a > s.switch_back) chart = 0;
        const double tnu = orient * (1.0 - ec.gamma), tom = orient * ec.mnu;
        const double nu0 = cur.rec.nu, om0 = cur.rec.omega;
        const ScalarFSystem& fs = chart == 0 ? nu_chart : om_chart;
        const double x0 = chart == 0 ? om0 : nu0;
        const double l0 = chart == 0 ? nu0 : om0;
        const double dir = chart == 0 ? (tnu >= 0 ? 1.0 : -1.0) : (tom >= 0 ? 1.0 : -1.0);
        const double slope = chart == 0 ? tom / tnu : tnu / tom;
        double base = s.max_step / std::sqrt(1.0 + slope * slope);
        if (chart == 1) base = std::min(base, s.max_omega_step);
        if (a < s.slow_threshold) base *= 0.5;

        IFTCertificate cert;
        try {
            cert = certify_adaptive(fs, x0, l0, chart == 0 ? 1e-2 : 1.0, 1e-13);
        } catch (const NumericalError&) {
            std::ostringstream os;
            os << "no certified step at nu=" << nu0 << " omega=" << om0;
            throw NumericalError("StepCollapse", os.str());
        }
        br.stats.max_certificate_contraction = std::max(br.stats.max_certificate_contraction, cert.contraction);
        double h = std::min(base * hfac, cert.delta1 * 0.999);

        while (true) {
            if (h < s.min_step) {
                std::ostringstream os;
                os << "step below floor at nu=" << nu0 << " omega=" << om0;
                throw NumericalError("StepCollapse", os.str());
            }
            double l1 = l0 + dir * h;
            bool last = false;
            if (chart == 0 && dir > 0 && l1 >= nu_hi) {
                l1 = nu_hi;
                last = true;
            } else if (chart == 0 && dir < 0 && l1 <= nu_lo) {
                l1 = nu_lo;
                last = true;
            }
            const double xpred = x0 + slope * (l1 - l0);
            CorrectorResult cr;
            try {
                cr = newton_corrector(fs, cert, l1, xpred, s.corrector_tol);
            } catch (const NumericalError&) {
                h *= 0.5;
                hfac *= 0.5;
                ++br.stats.rejected_steps;
                continue;
            }
            ++br.stats.corrector_runs;
            br.stats.max_run_contraction = std::max(br.stats.max_run_contraction, cr.contraction);
            const double nu1 = chart == 0 ? l1 : cr.x;
            const double om1 = chart == 0 ? cr.x : l1;
            const Eval e1 = eval(nu1, om1);
            const double dist = std::hypot(nu1 - nu0, om1 - om0);
            const bool crossed = std::signbit(1.0 - e1.gamma) != std::signbit(1.0 - ec.gamma);
            if ((chart == 0 && crossed) || dist > s.max_step * (1.0 + 1e-9)) {
                h *= 0.5;
                hfac *= 0.5;
                ++br.stats.rejected_steps;
                continue;
            }
            if (chart == 1 && (nu1 > nu_hi || nu1 < nu_lo)) {
                // close the branch on the boundary so roots there are matched
                const double bound = nu1 > nu_hi ? nu_hi : nu_lo;
                double wa = om0, wb = om1, ga = nu0 - bound, gb = nu1 - bound;
                double w = wb;
                for (int it = 0; it < 200 && ga * gb < 0; ++it) {
                    w = 0.5 * (wa + wb);
                    const double gw = solve_nu_at_omega(sys, w, nu0 + (nu1 - nu0) * (w - om0) / (om1 - om0)) - bound;
                    if (gw == 0.0 || std::abs(wb - wa) < 1e-15) break;
                    if ((gw < 0) == (ga < 0)) wa = w, ga = gw;
                    else wb = w, gb = gw;
                }
                BranchPoint endp;
                endp.rec = sys.record(bound, w);
                endp.chart = 1;
                endp.tau = cur.tau + std::hypot(bound - nu0, w - om0);
                br.points.push_back(endp);
                done = true;
                break;
            }
            br.stats.smallest_step = std::min(br.stats.smallest_step, dist);
            BranchPoint next;
            next.rec = sys.record(nu1, om1);
            next.chart = chart;
            if (crossed) {
                FoldRecord fr = detect_fold(sys, cur, next, s);
                BranchPoint fp;
                fp.rec = sys.record(fr.nu, fr.omega);
                fp.fold = true;
                fp.chart = 1;
                fp.tau = cur.tau + std::hypot(fr.nu - nu0, fr.omega - om0);
                fr.tau = fp.tau;
                fr.index = br.points.size();
                br.points.push_back(fp);
                br.folds.push_back(fr);
                next.tau = fp.tau + std::hypot(nu1 - fr.nu, om1 - fr.omega);
            } else {
                next.tau = cur.tau + dist;
            }
            br.points.push_back(next);
            cur = next;
            ec = e1;
            hfac = std::min(1.0, hfac * 1.5);
            if (last) done = true;
            break;
        }
    }
    return br;
}

std::vector<double> branch_omegas_at(const MeanFieldSystem& sys, const Branch& branch, double nu) {
    std::vector<double> out;
    const auto& P = branch.points;
    for (std::size_t i = 0; i + 1 < P.size(); ++i) {
        const double na = P[i].rec.nu, nb = P[i + 1].rec.nu;
        if ((nu - na) * (nu - nb) > 0 || na == nb) continue;
        const double t = (nu - na) / (nb - na);
        double om = P[i].rec.omega + t * (P[i + 1].rec.omega - P[i].rec.omega);
        const bool by_omega = P[i].chart == 1 || P[i + 1].chart == 1;
        if (!by_omega) {
            for (int it = 0; it < 100; ++it) {
                const double f = om - sys.mean_field_map(nu, om);
                const double step = f / (1.0 - sys.gamma(nu, om));
                om -= step;
                if (std::abs(step) < 1e-15) break;
            }
        } else {
            // secant on nu(omega) - nu over the segment
            double wa = P[i].rec.omega, wb = P[i + 1].rec.omega;
            double fa = na - nu, fb = nb - nu;
            for (int it = 0; it < 200 && std::abs(wb - wa) > 1e-16; ++it) {
                double w = (wa * fb - wb * fa) / (fb - fa);
                if (!(w >= std::min(wa, wb) && w <= std::max(wa, wb))) w = 0.5 * (wa + wb);
                const double nw = solve_nu_at_omega(sys, w, na + (nb - na) * (w - P[i].rec.omega) /
                                                               (P[i + 1].rec.omega - P[i].rec.omega));
                const double fw = nw - nu;
                om = w;
                if (std::abs(fw) < 1e-13 * (1.0 + nu)) break;
                if (std::signbit(fw) == std::signbit(fa)) {
                    wa = w;
                    fa = fw;
                } else {
                    wb = w;
                    fb = fw;
                }
            }
        }
        out.push_back(om);
    }
    std::sort(out.begin(), out.end());
    std::vector<double> uniq;
    for (double v : out)
        if (uniq.empty() || std::abs(v - uniq.back()) > 1e-9) uniq.push_back(v);
    return uniq;
}

std::vector<double> unmatched_roots(const MeanFieldSystem& sys, const std::vector<const Branch*>& branches,
                                    double nu, double match_tol) {
    std::vector<double> known;
    for (const Branch* b : branches) {
        const auto w = branch_omegas_at(sys, *b, nu);
        known.insert(known.end(), w.begin(), w.end());
    }
    std::vector<double> out;
    for (double r : solve_scalar_all(sys, nu)) {
        const bool hit = std::any_of(known.begin(), known.end(), [&](double w) { return std::abs(w - r) <= match_tol; });
        if (!hit) out.push_back(r);
    }
    return out;
}

std::vector<Branch> trace_residual_components(const MeanFieldSystem& sys, const Branch& main, double match_tol) {
    std::vector<Branch> comps;
    TraceSettings s = main.settings;
    s.start_direction = -1.0;
    while (true) {
        std::vector<const Branch*> all{&main};
        for (const auto& c : comps) all.push_back(&c);
        const auto left = unmatched_roots(sys, all, main.nu_hi, match_tol);
        if (left.empty()) break;
        const double seed = left.front();
        comps.push_back(trace_branch(sys, main.nu_lo, main.nu_hi, sys.record(main.nu_hi, seed), s));
        // a component that misses its own seed would be traced again forever
        const auto own = branch_omegas_at(sys, comps.back(), main.nu_hi);
        if (std::none_of(own.begin(), own.end(), [&](double w) { return std::abs(w - seed) <= match_tol; }))
            throw NumericalError("NoConvergence", "residual component does not contain its seed");
    }
    return comps;
}

} // namespace mfcm
