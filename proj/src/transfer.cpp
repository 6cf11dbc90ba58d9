#include "mfcm/transfer.hpp"

#include <cmath>
#include <string>

#include "mfcm/errors.hpp"
#include "mfcm/krylov.hpp"

namespace mfcm {

int default_cutoff(int dim) { return dim == 1 ? 128 : 64; }

namespace {

// Values of a truncated series at arbitrary points.
std::vector<cplx> evaluate_at(const Density& h, const std::vector<Point>& pts) {
    const int K = h.cutoff();
    const int s = h.side();
    const auto& c = h.coeffs();
    std::vector<cplx> out(pts.size());

    std::vector<std::size_t> nz;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i] != cplx(0.0)) nz.push_back(i);
    if (nz.size() * 4 < c.size()) {
        for (std::size_t p = 0; p < pts.size(); ++p) {
            cplx acc = 0.0;
            for (auto i : nz) {
                const auto m = h.mode(i);
                acc += c[i] * std::polar(1.0, m[0] * pts[p][0] + (h.dim() == 2 ? m[1] * pts[p][1] : 0.0));
            }
            out[p] = acc;
        }
        return out;
    }

    std::vector<cplx> e1(static_cast<std::size_t>(s)), e2(static_cast<std::size_t>(s));
    auto powers = [K, s](double x, std::vector<cplx>& e) {
        const cplx step = std::polar(1.0, x);
        e[0] = std::polar(1.0, -K * x);
        for (int m = 1; m < s; ++m) e[std::size_t(m)] = e[std::size_t(m - 1)] * step;
        e[std::size_t(K)] = 1.0;
    };
    for (std::size_t p = 0; p < pts.size(); ++p) {
        powers(pts[p][0], e1);
        if (h.dim() == 1) {
            cplx acc = 0.0;
            for (int m = 0; m < s; ++m) acc += c[std::size_t(m)] * e1[std::size_t(m)];
            out[p] = acc;
            continue;
        }
        powers(pts[p][1], e2);
        cplx acc = 0.0;
        for (int a = 0; a < s; ++a) {
            const cplx* row = &c[std::size_t(a) * s];
            cplx r = 0.0;
            for (int b = 0; b < s; ++b) r += row[b] * e2[std::size_t(b)];
            acc += r * e1[std::size_t(a)];
        }
        out[p] = acc;
    }
    return out;
}

} // namespace

TransferCore::TransferCore(const ModelSpec& model, const TransferSettings& settings)
    : model_(model), settings_(settings) {
    K_ = settings.cutoff > 0 ? settings.cutoff : default_cutoff(model.dim());
    n_ = 2 * K_ + 2;
    const int d = model.dim();

    taper_.assign(std::size_t(K_ + 1), 1.0);
    const int L = std::max(1, int(std::lround(settings.mollifier_fraction * K_)));
    const int K0 = K_ - L;
    if (settings.mollifier_fraction > 0)
        for (int m = K0 + 1; m <= K_; ++m)
            taper_[std::size_t(m)] = 0.5 * (1.0 + std::cos(M_PI * double(m - K0) / double(L + 1)));

    if (model.mu() > 0) {
        const std::size_t total = d == 1 ? std::size_t(n_) : std::size_t(n_) * n_;
        rho_pts_.resize(total);
        rho_w_.resize(total);
        rhoinv_pts_.resize(total);
        rhoinv_w_.resize(total);
        for (std::size_t j = 0; j < total; ++j) {
            const Point x = d == 1 ? Point{kTwoPi * double(j) / n_, 0.0}
                                   : Point{kTwoPi * double(j / n_) / n_, kTwoPi * double(j % n_) / n_};
            rho_pts_[j] = model.rho(x);
            rho_w_[j] = model.jacobian_det(x);
            rhoinv_pts_[j] = model.invert_rho(x, settings.newton_tol);
            rhoinv_w_[j] = 1.0 / model.jacobian_det(rhoinv_pts_[j]);
        }
    }

    Density proto(d, K_);
    source_.assign(proto.size(), -1);
    const auto& P = model.base_power();
    annihilates_ = true;
    for (std::size_t i = 0; i < proto.size(); ++i) {
        const auto m = proto.mode(i);
        std::int64_t s1, s2 = 0;
        if (d == 1) s1 = P[0] * m[0];
        else {
            s1 = P[0] * m[0] + P[2] * m[1];  // P^T m
            s2 = P[1] * m[0] + P[3] * m[1];
        }
        if (proto.in_range(s1, s2)) {
            source_[i] = long(proto.index(s1, s2));
            if (m[0] != 0 || m[1] != 0) annihilates_ = false;
        }
    }
    constant_image_ = apply_generic(Density::uniform(d, K_));
}

void TransferCore::mollify(Density& h) const {
    auto& c = h.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto m = h.mode(i);
        c[i] *= mollifier_weight(m[0]) * (h.dim() == 2 ? mollifier_weight(m[1]) : 1.0);
    }
}

Density TransferCore::interpolate_factor(const Density& h, const std::vector<Point>& pts,
                                         const std::vector<double>& w) const {
    auto vals = evaluate_at(h, pts);
    for (std::size_t j = 0; j < vals.size(); ++j) vals[j] *= w[j];
    return Density::from_grid_complex(h.dim(), K_, vals, n_);
}

Density TransferCore::apply_rho(const Density& h) const {
    if (model_.mu() == 0.0) return h;
    Density g = interpolate_factor(h, rhoinv_pts_, rhoinv_w_);
    mollify(g);
    return g;
}

Density TransferCore::apply_rho_inverse(const Density& h) const {
    if (model_.mu() == 0.0) return h;
    Density g = interpolate_factor(h, rho_pts_, rho_w_);
    mollify(g);
    return g;
}

Density TransferCore::apply_base(const Density& h) const {
    Density g(h.dim(), K_);
    auto& out = g.coeffs();
    const auto& in = h.coeffs();
    for (std::size_t i = 0; i < out.size(); ++i)
        if (source_[i] >= 0) out[i] = in[std::size_t(source_[i])];
    return g;
}

Density TransferCore::apply_generic(const Density& h, ApplyStats* stats) const {
    if (h.cutoff() != K_ || h.dim() != model_.dim())
        throw ConfigError("InvalidParameter", "density shape does not match transfer operator");
    const cplx c0 = h.at(0, 0);
    Density g = apply_rho(apply_base(apply_rho_inverse(h)));
    const double drift = std::abs(g.at(0, 0) - c0) * g.volume();
    g.set_zero_mode(c0);
    if (stats) {
        stats->mass_drift = drift;
        stats->drift_reported = drift > 1e-10;
    }
    const double scale = std::max(std::abs(c0) * g.volume(), h.norm_l2());
    if (drift > settings_.max_mass_drift * std::max(scale, 1e-300))
        throw NumericalError("CutoffTooSmall", "mass drift " + std::to_string(drift) + " in one application", drift);
    return g;
}

Density TransferCore::apply(const Density& h, ApplyStats* stats) const {
    if (annihilates_ && settings_.structural_shortcut) {
        if (h.cutoff() != K_ || h.dim() != model_.dim())
            throw ConfigError("InvalidParameter", "density shape does not match transfer operator");
        if (stats) *stats = ApplyStats{};
        return h.mass_complex() * constant_image_;
    }
    return apply_generic(h, stats);
}

TransferOp::TransferOp(std::shared_ptr<const TransferCore> core, double nu, double omega)
    : core_(std::move(core)), nu_(nu), omega_(omega) {
    shift_ = core_->model().shift(nu, omega);
    Density proto(core_->model().dim(), core_->cutoff());
    phase_.resize(proto.size());
    for (std::size_t i = 0; i < proto.size(); ++i) {
        const auto m = proto.mode(i);
        phase_[i] = std::polar(1.0, -(m[0] * shift_[0] + m[1] * shift_[1]));
    }
}

Density TransferOp::translate(const Density& h) const {
    Density g = h;
    auto& c = g.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= phase_[i];
    return g;
}

Density TransferOp::apply(const Density& h, ApplyStats* stats) const { return translate(core_->apply(h, stats)); }

Density transfer_apply(const TransferOp& op, const Density& h, ApplyStats* stats) { return op.apply(h, stats); }

Density srb_density(const TransferOp& op, double tol, int max_iter) {
    Density h = Density::uniform(op.model().dim(), op.core().cutoff());
    for (int it = 0; it < max_iter; ++it) {
        Density next = op.apply(h);
        const double diff = (next - h).norm_l2();
        h = std::move(next);
        if (diff <= tol) return h;
    }
    throw NumericalError("NoConvergence", "power iteration for the SRB density did not converge");
}

Density resolvent_solve(const TransferOp& op, cplx z, const Density& v, double tol, SolveInfo* info) {
    Density rhs = v;
    rhs.set_zero_mode(0.0);
    if (op.core().annihilates() && op.core().settings().structural_shortcut) {
        // L vanishes on mean-zero densities, so (z - L)^{-1} = 1/z there
        if (info) *info = SolveInfo{0, 0.0};
        return (1.0 / z) * rhs;
    }
    const double bnorm = rhs.norm_l2();
    if (bnorm == 0.0) {
        if (info) *info = SolveInfo{0, 0.0};
        return rhs;
    }
    auto apply = [&](const Density& w) {
        Density r = z * w;
        r -= op.apply(w);
        return r;
    };
    GmresResult res = gmres(apply, rhs, (1.0 / z) * rhs, tol);
    if (info) *info = SolveInfo{res.iterations, res.relative_residual};
    if (!res.converged)
        throw NumericalError("SolverStall",
                             "resolvent solve stalled, relative residual " + std::to_string(res.relative_residual),
                             res.relative_residual);
    res.x.set_zero_mode(0.0);
    return res.x;
}

Density divergence_coupling(const TransferOp& op, const Density& h) {
    return derivative_along(op.apply(h), op.model().beta());
}

double spectral_gap_estimate(const TransferOp& op, int iterations) {
    Density v(op.model().dim(), op.core().cutoff());
    std::uint64_t state = 0x9E3779B97F4A7C15ull;
    auto next = [&state]() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return double(state >> 11) * 0x1.0p-53 - 0.5;
    };
    auto& c = v.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto m = v.mode(i);
        const double decay = 1.0 / (1.0 + double(m[0] * m[0] + m[1] * m[1]));
        c[i] = cplx(next(), next()) * decay;
    }
    v.set_zero_mode(0.0);
    v *= 1.0 / v.norm_l2();
    const int half = iterations / 2;
    double log_sum = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Density w = op.apply(v);
        w.set_zero_mode(0.0);
        const double n = w.norm_l2();
        if (!(n > 1e-300)) return 0.0;
        if (it >= half) log_sum += std::log(n);
        v = (1.0 / n) * w;
    }
    return std::exp(log_sum / double(iterations - half));
}

} // namespace mfcm
