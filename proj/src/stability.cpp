#include "mfcm/stability.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "mfcm/errors.hpp"

namespace mfcm {

namespace {

Density fixed_density(const MeanFieldSystem& sys, const FixedPointRecord& fp) {
    if (fp.density) return *fp.density;
    return sys.frozen_srb(fp.nu, fp.omega);
}

Density coupling_vector(const MeanFieldSystem& sys, const TransferOp& op, double nu, const Density& h) {
    Density u = divergence_coupling(op, h);
    u *= -nu;
    u.set_zero_mode(0.0);
    (void)sys;
    return u;
}

} // namespace

Linearization::Linearization(const MeanFieldSystem& sys, double nu, const Density& h)
    : sys_(&sys), op_(sys.op(nu, sys.Z(h))), u_(coupling_vector(sys, op_, nu, h)) {}

Density Linearization::apply(const Density& phi) const {
    Density r = op_.apply(phi);
    r.axpy(sys_->Zc(phi), u_);
    return r;
}

Linearization linearize(const MeanFieldSystem& sys, const FixedPointRecord& fp) {
    return Linearization(sys, fp.nu, fixed_density(sys, fp));
}

SecularFunction::SecularFunction(const MeanFieldSystem& sys, double nu, const Density& h)
    : sys_(&sys), op_(sys.op(nu, sys.Z(h))), u_(coupling_vector(sys, op_, nu, h)) {
    closed_form_ = op_.core().annihilates() && op_.core().settings().structural_shortcut;
    if (closed_form_) zu_ = sys.Zc(u_);
}

cplx SecularFunction::value(cplx z) const {
    if (closed_form_) return zu_ / z;
    return sys_->Zc(resolvent_solve(op_, z, u_, sys_->settings().resolvent_tol));
}

cplx SecularFunction::derivative(cplx z) const {
    if (closed_form_) return -zu_ / (z * z);
    const double tol = sys_->settings().resolvent_tol;
    const Density w = resolvent_solve(op_, z, u_, tol);
    return -sys_->Zc(resolvent_solve(op_, z, w, tol));
}

double SecularFunction::rank_one_norm() const {
    const double vol = u_.volume();
    return u_.norm_l2() * std::sqrt(1.5 * vol);
}

namespace {

struct ContourSums {
    std::vector<cplx> moments;  // s_0..s_p
    double clearance = 0.0;     // min |Xi - 1| on the contour
};

ContourSums contour(const SecularFunction& xi, double r, int m, int pmax) {
    ContourSums cs;
    cs.moments.assign(std::size_t(pmax + 1), 0.0);
    cs.clearance = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
        // half-step offset keeps the real axis off the nodes
        const cplx z = std::polar(r, kTwoPi * (j + 0.5) / m);
        const cplx v = xi.value(z) - 1.0;
        cs.clearance = std::min(cs.clearance, std::abs(v));
        const cplx w = z * xi.derivative(z) / v;
        cplx zp = 1.0;
        for (int p = 0; p <= pmax; ++p) {
            cs.moments[std::size_t(p)] += w * zp;
            zp *= z;
        }
    }
    for (auto& s : cs.moments) s /= double(m);
    return cs;
}

} // namespace

SecularResult secular_roots(const SecularFunction& xi, double gap, const SecularSettings& s) {
    SecularResult res;
    double r_in = std::max(s.inner_radius, gap > 0 ? gap * 1.1 + 0.02 : 0.0);
    double R = 1.0 + xi.rank_one_norm() + gap;
    for (int t = 0; t < 30; ++t) {
        bool ok = true;
        for (int j = 0; j < 64 && ok; ++j)
            if (std::abs(xi.value(std::polar(R, kTwoPi * (j + 0.5) / 64))) >= 0.9) ok = false;
        if (ok) break;
        R *= 2.0;
    }
    if (R <= r_in) R = r_in * 2.0;

    for (int attempt = 0; attempt < 8; ++attempt) {
        int m = s.min_points;
        double count = 0.0;
        bool close = false;
        ContourSums outer, inner;
        double prev = std::numeric_limits<double>::quiet_NaN();
        for (; m <= s.max_points; m *= 2) {
            outer = contour(xi, R, m, 0);
            inner = contour(xi, r_in, m, 0);
            if (std::min(outer.clearance, inner.clearance) < s.contour_clearance) {
                close = true;
                break;
            }
            count = (outer.moments[0] - inner.moments[0]).real();
            if (std::abs(count - std::round(count)) < 1e-6 && prev == std::round(count)) break;
            prev = std::round(count);
        }
        if (close) {
            r_in *= 1.0 + 0.017 * (attempt + 1);
            R *= 1.0 + 0.013 * (attempt + 1);
            continue;
        }
        m = std::min(m, s.max_points);
        const int n = int(std::lround(count));
        res.inner_radius = r_in;
        res.outer_radius = R;
        res.contour_points = m;
        res.count_defect = std::abs(count - double(n));
        if (n <= 0) return res;

        outer = contour(xi, R, m, n);
        inner = contour(xi, r_in, m, n);
        std::vector<cplx> p(std::size_t(n + 1));
        for (int q = 0; q <= n; ++q) p[std::size_t(q)] = outer.moments[std::size_t(q)] - inner.moments[std::size_t(q)];
        // power sums -> elementary symmetric polynomials (Newton identities)
        std::vector<cplx> e(std::size_t(n + 1), 0.0);
        e[0] = 1.0;
        for (int q = 1; q <= n; ++q) {
            cplx acc = 0.0;
            for (int i = 1; i <= q; ++i) acc += (i % 2 == 1 ? 1.0 : -1.0) * e[std::size_t(q - i)] * p[std::size_t(i)];
            e[std::size_t(q)] = acc / double(q);
        }
        Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
        for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
        for (int i = 0; i < n; ++i) {
            // monic polynomial z^n - e1 z^{n-1} + e2 z^{n-2} - ...
            const int q = n - i;
            C(i, n - 1) = (q % 2 == 1 ? 1.0 : -1.0) * e[std::size_t(q)];
        }
        Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(C, false);
        for (int i = 0; i < n; ++i) {
            cplx z = es.eigenvalues()(i);
            for (int it = 0; it < 60; ++it) {
                const cplx step = (xi.value(z) - 1.0) / xi.derivative(z);
                z -= step;
                if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(z))) break;
            }
            res.roots.push_back({z, std::abs(xi.value(z) - 1.0)});
        }
        std::sort(res.roots.begin(), res.roots.end(),
                  [](const SecularRoot& a, const SecularRoot& b) { return std::abs(a.z) > std::abs(b.z); });
        return res;
    }
    throw NumericalError("ContourTooClose", "a secular root stays within the contour clearance");
}

SecularResult secular_roots(const MeanFieldSystem& sys, const FixedPointRecord& fp, const SecularSettings& s) {
    const Density h = fixed_density(sys, fp);
    SecularFunction xi(sys, fp.nu, h);
    return secular_roots(xi, spectral_gap_estimate(xi.op()), s);
}

StabilityReport classify(const MeanFieldSystem& sys, const FixedPointRecord& fp, const ClassifySettings& s) {
    StabilityReport rep;
    const Density h = fixed_density(sys, fp);
    SecularFunction xi(sys, fp.nu, h);
    for (int j = 0; j < s.circle_points; ++j)
        rep.circle_sup = std::max(rep.circle_sup, std::abs(xi.value(std::polar(1.0, kTwoPi * j / s.circle_points))));
    rep.gap = spectral_gap_estimate(xi.op());
    const SecularResult sr = secular_roots(xi, rep.gap, s.secular);
    rep.secular_roots = sr.roots;
    rep.inner_radius = sr.inner_radius;
    rep.outer_radius = sr.outer_radius;
    rep.xi1 = xi.value(1.0);
    rep.xi1_gamma_defect = std::abs(rep.xi1 - cplx(sys.gamma(fp.nu, fp.omega)));

    double max_out = 0.0, max_in = 0.0;
    rep.leading_eig = rep.gap;
    for (const auto& r : rep.secular_roots) {
        const double a = std::abs(r.z);
        if (a > std::abs(rep.leading_eig)) rep.leading_eig = r.z;
        if (a > 1.0 + s.tol) max_out = std::max(max_out, a);
        if (a < 1.0) max_in = std::max(max_in, a);
    }
    rep.kappa = std::max(rep.gap, max_in);
    if (max_out > 0.0) {
        rep.classification = Stability::Unstable;
    } else if (rep.circle_sup < 1.0 && std::abs(rep.xi1 - 1.0) > s.tol) {
        rep.classification = Stability::Physical;
    } else {
        rep.classification = Stability::Marginal;
        rep.undecidable = true;
        rep.note = std::abs(rep.xi1 - 1.0) <= s.tol ? "Xi(1) within tolerance of 1" : "secular root near the unit circle";
    }

    if (s.eigenvector && std::abs(1.0 - rep.xi1) > 1e-12) {
        const Density th1 = resolvent_solve(xi.op(), 1.0, xi.u(), sys.settings().resolvent_tol);
        Density phi = h;
        phi.axpy(sys.Zc(h) / (1.0 - rep.xi1), th1);
        const Linearization D(sys, fp.nu, h);
        rep.eigvec_residual = (D.apply(phi) - phi).norm_l2() / phi.norm_l2();
        rep.eigvec_at_one = std::make_shared<const Density>(std::move(phi));
    }
    return rep;
}

void classify_branch(const MeanFieldSystem& sys, Branch& branch, const ClassifySettings& s) {
    ClassifySettings cs = s;
    cs.eigenvector = false;
    for (auto& p : branch.points) {
        const StabilityReport rep = classify(sys, p.rec, cs);
        p.stability = rep.classification;
        p.leading_eig = rep.leading_eig;
    }
}

} // namespace mfcm
