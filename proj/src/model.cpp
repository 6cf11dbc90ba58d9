#include "mfcm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mfcm/density.hpp"
#include "mfcm/errors.hpp"

namespace mfcm {

double wrap_angle(double x) {
    constexpr double inv = 1.0 / kTwoPi;
    const double q = x * inv;
    if (!(std::abs(q) < 9e15)) return 0.0;
    // truncating conversion is much cheaper than floor() without SSE4.1
    double f = double(static_cast<std::int64_t>(q));
    if (f > q) f -= 1.0;
    double r = x - kTwoPi * f;
    if (r >= kTwoPi || r < 0.0) r = 0.0;
    return r;
}

Point wrap_point(const Point& x) { return {wrap_angle(x[0]), wrap_angle(x[1])}; }

namespace {

std::array<std::int64_t, 4> mat_mul(const std::array<std::int64_t, 4>& a,
                                    const std::array<std::int64_t, 4>& b) {
    const std::int64_t lim = std::int64_t(1) << 40;
    std::array<std::int64_t, 4> c{a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                                  a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
    for (auto v : c)
        if (v > lim || v < -lim) throw ConfigError("InvalidParameter", "base map power overflows");
    return c;
}

} // namespace

ModelSpec build_model(const ModelConfig& cfg) {
    ModelSpec m;
    m.config_ = cfg;
    if (cfg.dim != 1 && cfg.dim != 2) throw ConfigError("InvalidParameter", "dim must be 1 or 2");
    if (cfg.n_star < 1) throw ConfigError("InvalidParameter", "n_star must be positive");
    if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu)) throw ConfigError("InvalidParameter", "mu must be >= 0");
    m.dim_ = cfg.dim;
    m.n_star_ = cfg.n_star;
    m.mu_ = cfg.mu;
    m.k_ = cfg.k;
    if (cfg.dim == 1) m.k_[1] = 0;
    if (m.k_[0] == 0 && m.k_[1] == 0) throw ConfigError("ZeroLattice", "k must be nonzero");
    const double knorm = std::hypot(double(m.k_[0]), double(m.k_[1]));
    // sup |D chi| = |k| for chi = (cos, sin) or sin of the lattice phase
    if (cfg.mu * knorm >= 1.0)
        throw ConfigError("RhoNotDiffeo", "mu*|k| = " + std::to_string(cfg.mu * knorm) + " >= 1");

    if (cfg.dim == 2) {
        const auto& A = cfg.A;
        const std::int64_t det = A[0] * A[3] - A[1] * A[2];
        if (det != 1) throw ConfigError("NonHyperbolic", "det A must be 1");
        if (A[0] + A[3] <= 2) throw ConfigError("NonHyperbolic", "trace A must exceed 2");
        m.A_ = A;
        std::array<std::int64_t, 4> P{1, 0, 0, 1};
        for (int i = 0; i < cfg.n_star; ++i) P = mat_mul(P, A);
        m.power_ = P;
    } else {
        if (cfg.expansion < 2) throw ConfigError("NonHyperbolic", "expansion factor must be >= 2");
        m.expansion_ = cfg.expansion;
        std::int64_t p = 1;
        for (int i = 0; i < cfg.n_star; ++i) {
            p *= cfg.expansion;
            if (p > (std::int64_t(1) << 40)) throw ConfigError("InvalidParameter", "base map power overflows");
        }
        m.power_ = {p, 0, 0, 0};
    }

    m.theta_ = std::atan2(double(m.k_[0]) / knorm, double(m.k_[1]) / knorm);
    if (m.theta_ < 0) m.theta_ += kTwoPi;
    if (cfg.beta == BetaMode::Eigenvector && cfg.dim == 2) {
        const double a = double(cfg.A[0]), b = double(cfg.A[1]), c = double(cfg.A[2]), d = double(cfg.A[3]);
        const double tr = a + d;
        const double lam = 0.5 * (tr + std::sqrt(tr * tr - 4.0));
        Point v = std::abs(b) > 0 ? Point{b, lam - a} : Point{lam - d, c};
        const double n = std::hypot(v[0], v[1]);
        v = {v[0] / n, v[1] / n};
        if (v[0] < 0 || (v[0] == 0 && v[1] < 0)) v = {-v[0], -v[1]};
        m.beta_ = v;
    } else {
        m.beta_ = {double(m.k_[0]) / knorm, double(m.k_[1]) / knorm};
    }
    if (cfg.nu_max > 0) m.nu_max_ = cfg.nu_max;
    else m.nu_max_ = cfg.mu > 0 ? 1.0 / (cfg.mu * cfg.mu) : 400.0;
    return m;
}

double ModelSpec::alpha(const Point& x) const { return 1.0 - std::cos(phase(x)); }

Point ModelSpec::chi(const Point& x) const {
    const double th = phase(x);
    if (dim_ == 1) return {std::sin(th), 0.0};
    return {std::cos(th), std::sin(th)};
}

double ModelSpec::s_of_phase(double th) const {
    if (dim_ == 1) return double(k_[0]) * std::sin(th);
    return double(k_[0]) * std::cos(th) + double(k_[1]) * std::sin(th);
}

double ModelSpec::ds_of_phase(double th) const {
    if (dim_ == 1) return double(k_[0]) * std::cos(th);
    return -double(k_[0]) * std::sin(th) + double(k_[1]) * std::cos(th);
}

Point ModelSpec::rho(const Point& x) const {
    const Point c = chi(x);
    return wrap_point({x[0] + mu_ * c[0], x[1] + mu_ * c[1]});
}

double ModelSpec::jacobian_det(const Point& x) const { return 1.0 + mu_ * ds_of_phase(phase(x)); }

Point ModelSpec::invert_rho(const Point& y, double tol, int max_iter) const {
    if (mu_ == 0.0) return wrap_point(y);
    // rho moves x along chi(theta), so the phase alone satisfies a scalar equation
    const double ty = phase(y);
    double th = ty - mu_ * s_of_phase(ty);
    bool done = false;
    const double k1 = double(k_[0]), k2 = double(k_[1]);
    for (int it = 0; it < max_iter; ++it) {
        // s and s' share one sine/cosine pair
        const double sn = std::sin(th), cs = std::cos(th);
        const double s = dim_ == 1 ? k1 * sn : k1 * cs + k2 * sn;
        const double ds = dim_ == 1 ? k1 * cs : -k1 * sn + k2 * cs;
        const double r = th + mu_ * s - ty;
        const double step = r / (1.0 + mu_ * ds);
        th -= step;
        if (std::abs(step) <= 0.25 * tol * (1.0 + std::abs(ty))) {
            done = true;
            break;
        }
    }
    if (!done) throw NumericalError("NoConvergence", "rho inversion did not converge");
    Point c;
    if (dim_ == 1) c = {std::sin(th), 0.0};
    else c = {std::cos(th), std::sin(th)};
    return wrap_point({y[0] - mu_ * c[0], y[1] - mu_ * c[1]});
}

TorusPoints ModelSpec::invert_rho(const TorusPoints& y, double tol) const {
    TorusPoints out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = invert_rho(y[i], tol);
    return out;
}

double ModelSpec::inverse_jacobian_det(const Point& y) const { return 1.0 / jacobian_det(invert_rho(y)); }

Point ModelSpec::base_map(const Point& x) const {
    Point p = x;
    if (dim_ == 1) {
        if (power_[0] <= (std::int64_t(1) << 20)) return {wrap_angle(double(power_[0]) * p[0]), 0.0};
        const double e = double(expansion_);
        for (int i = 0; i < n_star_; ++i) p[0] = wrap_angle(e * p[0]);
        p[1] = 0.0;
        return p;
    }
    const auto& P = power_;
    const std::int64_t big =
        std::max(std::max(std::abs(P[0]), std::abs(P[1])), std::max(std::abs(P[2]), std::abs(P[3])));
    if (big <= (std::int64_t(1) << 20)) {
        // one product with the integer power loses no more than the iterated
        // map, whose rounding is amplified by the same factor
        return wrap_point({double(P[0]) * p[0] + double(P[1]) * p[1], double(P[2]) * p[0] + double(P[3]) * p[1]});
    }
    const double a = double(A_[0]), b = double(A_[1]), c = double(A_[2]), d = double(A_[3]);
    for (int i = 0; i < n_star_; ++i) p = wrap_point({a * p[0] + b * p[1], c * p[0] + d * p[1]});
    return p;
}

Point ModelSpec::apply_coupled_map(double nu, double omega, const Point& x) const {
    const Point t = rho(base_map(invert_rho(x)));
    const Point s = shift(nu, omega);
    Point r = wrap_point({t[0] + s[0], t[1] + s[1]});
    if (dim_ == 1) r[1] = 0.0;
    return r;
}

TorusPoints ModelSpec::apply_coupled_map(double nu, double omega, const TorusPoints& x) const {
    TorusPoints out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = apply_coupled_map(nu, omega, x[i]);
    return out;
}

std::pair<double, double> ModelSpec::coefficients_ab(const Point& y) const {
    // 1/(1 + mu g(theta_x)) with theta_x = theta_y - mu s + O(mu^2) gives
    // a = -g, b = g^2 + g' s and g' = -s for both families.
    const double th = phase(y);
    const double s = s_of_phase(th), g = ds_of_phase(th);
    return {-g, g * g - s * s};
}

Density perturbative_density(const ModelSpec& model, double nu, double omega, int cutoff) {
    const int n = 2 * cutoff + 2;
    const int d = model.dim();
    const Point sh = model.shift(nu, omega);
    const double mu = model.mu();
    const double norm = d == 1 ? 1.0 / kTwoPi : 1.0 / (kTwoPi * kTwoPi);
    std::vector<double> vals(d == 1 ? n : std::size_t(n) * n);
    for (int i = 0; i < n; ++i) {
        const int jmax = d == 1 ? 1 : n;
        for (int j = 0; j < jmax; ++j) {
            const Point y{kTwoPi * i / n - sh[0], d == 1 ? 0.0 : kTwoPi * j / n - sh[1]};
            const auto [a, b] = model.coefficients_ab(y);
            vals[std::size_t(i) * jmax + j] = norm * (1.0 + a * mu + b * mu * mu);
        }
    }
    Density h = Density::from_grid(d, cutoff, vals, n);
    h.set_mass(1.0);
    return h;
}

} // namespace mfcm
