#include "mfcm/meanfield.hpp"

#include <cmath>
#include <deque>

#include "mfcm/errors.hpp"

namespace mfcm {

MeanFieldSystem::MeanFieldSystem(const ModelSpec& model, const TransferSettings& ts, const MeanFieldSettings& ms)
    : core_(std::make_shared<const TransferCore>(model, ts)), settings_(ms) {
    const auto& k = model.k();
    const auto& img = core_->constant_image();
    fast_ = core_->annihilates() && ts.structural_shortcut && img.in_range(k[0], model.dim() == 1 ? 0 : k[1]);
    if (fast_) {
        const std::int64_t k2 = model.dim() == 1 ? 0 : k[1];
        h0_ = img.at(0, 0);
        hk_ = img.at(k[0], k2);
        hmk_ = img.at(-k[0], -k2);
    }
}

MeanFieldSystem::Modes MeanFieldSystem::fast_modes(double nu, double omega) const {
    const Point s = model().shift(nu, omega);
    const auto& k = model().k();
    const double ks = double(k[0]) * s[0] + (model().dim() == 1 ? 0.0 : double(k[1]) * s[1]);
    return {h0_, hk_ * std::polar(1.0, -ks), hmk_ * std::polar(1.0, ks)};
}

namespace {

double kbeta(const ModelSpec& m) {
    return double(m.k()[0]) * m.beta()[0] + (m.dim() == 1 ? 0.0 : double(m.k()[1]) * m.beta()[1]);
}

double volume(const ModelSpec& m) { return m.dim() == 1 ? kTwoPi : kTwoPi * kTwoPi; }

} // namespace

Density MeanFieldSystem::nonlinear_step(double nu, const Density& h) const {
    return op(nu, Z(h)).apply(h);
}

Density MeanFieldSystem::frozen_srb(double nu, double omega) const {
    const TransferOp o = op(nu, omega);
    if (fast_) return o.translate(core_->constant_image());
    return srb_density(o, settings_.srb_tol, settings_.max_srb_iter);
}

double MeanFieldSystem::mean_field_map(double nu, double omega) const {
    if (fast_) {
        const Modes m = fast_modes(nu, omega);
        return volume(model()) * (m.c0 - 0.5 * (m.ck + m.cmk)).real();
    }
    return Z(frozen_srb(nu, omega));
}

Density MeanFieldSystem::theta_of(double nu, double omega, const Density& H) const {
    const TransferOp o = op(nu, omega);
    Density v = divergence_coupling(o, H);
    return -1.0 * resolvent_solve(o, 1.0, v, settings_.resolvent_tol);
}

Density MeanFieldSystem::theta(double nu, double omega) const { return theta_of(nu, omega, frozen_srb(nu, omega)); }

double MeanFieldSystem::gamma(double nu, double omega) const {
    if (fast_) {
        const Modes m = fast_modes(nu, omega);
        const cplx z = 0.5 * volume(model()) * cplx(0.0, kbeta(model())) * (m.ck - m.cmk);
        return nu * z.real();
    }
    return nu * Z(theta(nu, omega));
}

double MeanFieldSystem::dM_dnu(double nu, double omega) const {
    if (fast_) {
        const Modes m = fast_modes(nu, omega);
        const cplx z = 0.5 * volume(model()) * cplx(0.0, kbeta(model())) * (m.ck - m.cmk);
        return omega * z.real();
    }
    return omega * Z(theta(nu, omega));
}

double MeanFieldSystem::d2M_domega2(double nu, double omega) const {
    const double kb = kbeta(model());
    if (fast_) {
        const Modes m = fast_modes(nu, omega);
        return nu * nu * 0.5 * volume(model()) * kb * kb * (m.ck + m.cmk).real();
    }
    const Density H = frozen_srb(nu, omega);
    const TransferOp o = op(nu, omega);
    const Density Th = theta_of(nu, omega, H);
    Density rhs = second_derivative_along(H, model().beta());
    rhs.axpy(-2.0, derivative_along(o.apply(Th), model().beta()));
    return nu * nu * Z(resolvent_solve(o, 1.0, rhs, settings_.resolvent_tol));
}

cplx MeanFieldSystem::xi(double nu, const Density& h, cplx z) const {
    const TransferOp o = op(nu, Z(h));
    Density u = divergence_coupling(o, h);
    u *= -nu;
    return Zc(resolvent_solve(o, z, u, settings_.resolvent_tol));
}

Density MeanFieldSystem::F(double nu, const Density& h) const { return h - frozen_srb(nu, Z(h)); }

Density MeanFieldSystem::dF_dh(double nu, const Density& h, const Density& phi) const {
    Density r = phi;
    r.axpy(-nu * Zc(phi), theta(nu, Z(h)));
    return r;
}

Density MeanFieldSystem::dF_dnu(double nu, const Density& h) const {
    const double w = Z(h);
    return -w * theta(nu, w);
}

Density MeanFieldSystem::d2F_dh2_along_theta(double nu, const Density& h) const {
    const double w = Z(h);
    const Density H = frozen_srb(nu, w);
    const TransferOp o = op(nu, w);
    const Density Th = theta_of(nu, w, H);
    const double zt = Z(Th);
    Density rhs = second_derivative_along(H, model().beta());
    rhs.axpy(-2.0, derivative_along(o.apply(Th), model().beta()));
    Density r = resolvent_solve(o, 1.0, rhs, settings_.resolvent_tol);
    r *= -nu * nu * zt * zt;
    return r;
}

Density MeanFieldSystem::dF_dh_inverse(double nu, const Density& h, const Density& psi) const {
    const Density Th = theta(nu, Z(h));
    const double g = nu * Z(Th);
    if (g == 1.0) throw NumericalError("Singular", "D_hF is not invertible at Gamma = 1");
    Density r = psi;
    r.axpy(nu * Zc(psi) / (1.0 - g), Th);
    return r;
}

FixedPointRecord MeanFieldSystem::record(double nu, double omega, bool with_density) const {
    FixedPointRecord r;
    r.nu = nu;
    r.omega = omega;
    r.residual = std::abs(omega - mean_field_map(nu, omega));
    r.gamma = gamma(nu, omega);
    auto H = std::make_shared<const Density>(frozen_srb(nu, omega));
    r.xi1 = xi(nu, *H, 1.0);
    if (with_density) r.density = H;
    return r;
}

IterationOutcome MeanFieldSystem::find_fixed_by_iteration(double nu, const Density& h0, int max_steps, double tol,
                                                          int max_period) const {
    IterationOutcome out;
    std::deque<Density> recent;  // most recent first
    Density h = h0;
    recent.push_front(h);
    out.omega_history.push_back(Z(h));
    for (int n = 1; n <= max_steps; ++n) {
        Density next = nonlinear_step(nu, h);
        out.omega_history.push_back(Z(next));
        out.steps = n;
        if ((next - h).norm_l2() <= tol) {
            const double w = Z(next);
            out.kind = IterationOutcome::Kind::Fixed;
            out.fixed = record(nu, w, false);
            out.fixed.density = std::make_shared<const Density>(next);
            return out;
        }
        for (int p = 2; p <= max_period && p <= int(recent.size()); ++p) {
            if ((next - recent[std::size_t(p - 1)]).norm_l2() <= tol) {
                out.kind = IterationOutcome::Kind::Cycle;
                out.period = p;
                const auto& hist = out.omega_history;
                out.cycle_omegas.assign(hist.end() - p, hist.end());
                return out;
            }
        }
        recent.push_front(next);
        if (int(recent.size()) > max_period) recent.pop_back();
        h = std::move(next);
    }
    throw NumericalError("NoConvergence", "fixed-point iteration did not settle within max_steps");
}

} // namespace mfcm
