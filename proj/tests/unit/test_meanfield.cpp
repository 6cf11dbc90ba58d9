#include <doctest.h>

#include <cmath>
#include <random>

#include "mfcm/continuation.hpp"
#include "mfcm/errors.hpp"
#include "mfcm/meanfield.hpp"
#include "oracles.hpp"

using namespace mfcm;

namespace {

MeanFieldSystem two_d(double mu) {
    ModelConfig c;
    c.mu = mu;
    return MeanFieldSystem(build_model(c));
}

// Circle family without the annihilation shortcut: every functional goes
// through power iteration and GMRES.
MeanFieldSystem one_d(double mu = 0.2) {
    ModelConfig c;
    c.dim = 1;
    c.n_star = 1;
    c.mu = mu;
    c.k = {1, 0};
    TransferSettings ts;
    ts.cutoff = 64;
    return MeanFieldSystem(build_model(c), ts);
}

Density perturbation(int dim, int K, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    Density p(dim, K);
    const double c0 = 1.0 / (dim == 1 ? kTwoPi : kTwoPi * kTwoPi);
    for (int a = 0; a <= 3; ++a)
        for (int b = (dim == 1 ? 0 : -3); b <= (dim == 1 ? 0 : 3); ++b) {
            if (a == 0 && b <= 0) continue;
            const cplx v(N(rng) * c0, N(rng) * c0);
            p.at(a, b) = v;
            p.at(-a, -b) = std::conj(v);
        }
    return p;
}

double rel(const Density& a, const Density& b) {
    return (a - b).norm_l2() / std::max(b.norm_l2(), 1e-300);
}

} // namespace

TEST_CASE("unperturbed system is trivial") {
    const auto sys = two_d(0.0);
    for (double nu : {0.0, 10.0, 150.0})
        for (double om : {0.9, 1.0, 1.3}) {
            CHECK(sys.mean_field_map(nu, om) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(std::abs(sys.gamma(nu, om)) < 1e-15);
            CHECK(sys.theta(nu, om).max_abs_coeff() < 1e-17);
            const Density h = sys.frozen_srb(nu, om);
            CHECK(std::abs(sys.xi(nu, h, cplx(1.5, 0.3))) < 1e-15);
        }
    const Density u = Density::uniform(2, sys.cutoff());
    const Density p = perturbation(2, sys.cutoff(), 1);
    CHECK(rel(sys.dF_dh(20.0, u, p), p) < 1e-15);
    CHECK(sys.dF_dnu(20.0, u).max_abs_coeff() < 1e-17);
    CHECK(sys.d2F_dh2_along_theta(20.0, u).max_abs_coeff() < 1e-17);
    // one step of the nonlinear operator lands on the constant density
    const Density out = sys.nonlinear_step(20.0, u + p);
    CHECK((out - u).max_abs_coeff() < 1e-17);
    const auto it = sys.find_fixed_by_iteration(20.0, u + p, 10);
    CHECK(it.kind == IterationOutcome::Kind::Fixed);
    CHECK(it.steps <= 2);
    CHECK(it.fixed.omega == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("nonlinear step preserves mass and fixes fixed points") {
    const auto sys = two_d(0.05);
    const double nu = 20.0;
    const auto roots = solve_scalar_all(sys, nu);
    REQUIRE(roots.size() == 1);
    const auto rec = sys.record(nu, roots[0], true);
    const Density out = sys.nonlinear_step(nu, *rec.density);
    CHECK(rel(out, *rec.density) < 1e-12);
    const Density g = Density::uniform(2, sys.cutoff()) + perturbation(2, sys.cutoff(), 2);
    CHECK(sys.nonlinear_step(nu, g).mass() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("iteration converges to the unique fixed point at weak coupling") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const double nu = generic ? 1.0 : 15.0;
        const auto roots = solve_scalar_all(sys, nu, generic ? 64 : 4096);
        REQUIRE(roots.size() == 1);
        const auto it = sys.find_fixed_by_iteration(nu, Density::uniform(sys.model().dim(), sys.cutoff()), 500);
        CHECK(it.kind == IterationOutcome::Kind::Fixed);
        CHECK(it.fixed.omega == doctest::Approx(roots[0]).epsilon(1e-9));
    }
}

TEST_CASE("iteration leaves an unstable fixed point") {
    const auto sys = two_d(0.05);
    const double nu = 61.26;
    const auto roots = solve_scalar_all(sys, nu);
    REQUIRE(roots.size() == 3);
    const double w_mid = roots[1];
    REQUIRE(std::abs(sys.gamma(nu, w_mid)) > 1.0);
    // scalar cobweb oracle: omega -> M(omega) from a nearby start moves away
    double w = w_mid + 1e-6;
    for (int i = 0; i < 5; ++i) w = sys.mean_field_map(nu, w);
    CHECK(std::abs(w - w_mid) > 1e-6);
    const Density h0 = sys.frozen_srb(nu, w_mid + 1e-6);
    Density h = h0;
    std::vector<double> dist;
    for (int i = 0; i < 5; ++i) {
        h = sys.nonlinear_step(nu, h);
        dist.push_back(std::abs(sys.Z(h) - w_mid));
    }
    for (std::size_t i = 1; i < dist.size(); ++i) CHECK(dist[i] > dist[i - 1]);
}

TEST_CASE("frozen srb delegates to the transfer operator") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const Density a = sys.frozen_srb(3.0, 1.02);
        const Density b = srb_density(sys.op(3.0, 1.02));
        CHECK(rel(a, b) < 1e-11);
    }
}

TEST_CASE("mean-field map follows the corrected leading-order law") {
    // M = 1 + (mu/2) cos(nu omega) + O(mu^3) for k = (0,1)
    std::vector<double> mus{0.01, 0.02, 0.04}, errs;
    for (double mu : mus) {
        const auto sys = two_d(mu);
        double e = 0.0;
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j) {
                const double nu = 5.0 + 195.0 * i / 19.0, om = 1.0 - mu + 2.0 * mu * j / 19.0;
                e = std::max(e, std::abs(sys.mean_field_map(nu, om) - (1.0 + 0.5 * mu * std::cos(nu * om))));
            }
        errs.push_back(e);
        CHECK(e <= 5 * mu * mu);
    }
    const double slope = std::log(errs[2] / errs[0]) / std::log(mus[2] / mus[0]);
    INFO("slope " << slope);
    CHECK(slope >= 2.7);
}

TEST_CASE("mean-field map matches quadrature of the closed-form density") {
    const double mu = 0.05;
    const auto sys = two_d(mu);
    const ModelSpec& m = sys.model();
    for (auto [nu, om] : {std::pair{3.0, 1.0}, {40.0, 0.99}, {120.0, 1.01}}) {
        const Point s = m.shift(nu, om);
        auto q = [&](double x, double y) {
            const Point p{x - s[0], y - s[1]};
            const auto [a, b] = m.coefficients_ab(p);
            return m.alpha({x, y}) * (1.0 + a * mu + b * mu * mu);
        };
        auto dens = [&](double x, double y) {
            const auto [a, b] = m.coefficients_ab({x, y});
            return 1.0 + a * mu + b * mu * mu;
        };
        const double Q = oracle::torus_mean(2, 96, q) / oracle::torus_mean(2, 96, dens);
        CHECK(std::abs(sys.mean_field_map(nu, om) - Q) <= 10 * mu * mu * mu);
    }
}

TEST_CASE("theta and gamma") {
    const double mu = 0.05;
    const auto sys = two_d(mu);
    CHECK(sys.gamma(0.0, 1.0) == 0.0);
    for (double nu : {5.0, 30.0, 90.0})
        for (double om : {0.97, 1.0, 1.02}) {
            CHECK(sys.theta(nu, om).norm_l2() > 1e-6);
            // corrected sign: Gamma = dM/domega = -(mu nu / 2) sin(nu omega) + O(nu mu^2)
            CHECK(std::abs(sys.gamma(nu, om) + 0.5 * mu * nu * std::sin(nu * om)) <= 5 * nu * mu * mu);
        }
}

TEST_CASE("gamma equals dM/domega and dM/dnu equals omega Z(Theta)") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const double eps = 1e-5;
        for (double nu : {2.0, 7.0, 45.0})
            for (double om : {0.98, 1.01}) {
                const double d = (sys.mean_field_map(nu, om + eps) - sys.mean_field_map(nu, om - eps)) / (2 * eps);
                const double g = sys.gamma(nu, om);
                CHECK(std::abs(g - d) <= 1e-6 + 1e-4 * std::abs(d));
                const double dn = (sys.mean_field_map(nu + eps, om) - sys.mean_field_map(nu - eps, om)) / (2 * eps);
                CHECK(std::abs(sys.dM_dnu(nu, om) - dn) <= 1e-6 + 1e-4 * std::abs(dn));
                CHECK(sys.dM_dnu(nu, om) == doctest::Approx(om * sys.Z(sys.theta(nu, om))).epsilon(1e-9));
                // Richardson-extrapolated second difference
                auto sd = [&](double e) {
                    return (sys.mean_field_map(nu, om + e) - 2 * sys.mean_field_map(nu, om) +
                            sys.mean_field_map(nu, om - e)) / (e * e);
                };
                const double d2 = (4.0 * sd(5e-5) - sd(1e-4)) / 3.0;
                INFO("generic " << generic << " nu " << nu << " om " << om << " d2 " << d2);
                CHECK(std::abs(sys.d2M_domega2(nu, om) - d2) <= 1e-4 * std::max(1.0, std::abs(d2)));
            }
    }
}

TEST_CASE("partial derivative of H in nu is Theta times omega") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const double nu = 6.0, om = 1.01, eps = 1e-5;
        Density fd = sys.frozen_srb(nu + eps, om) - sys.frozen_srb(nu - eps, om);
        fd *= 1.0 / (2 * eps);
        Density th = sys.theta(nu, om);
        th *= om;
        CHECK(rel(fd, th) <= 1e-4);
    }
}

TEST_CASE("secular function") {
    const double mu = 0.05;
    const auto sys = two_d(mu);
    for (double nu : {10.0, 33.0, 61.26}) {
        for (double om : solve_scalar_all(sys, nu)) {
            const auto rec = sys.record(nu, om, true);
            CHECK(std::abs(rec.xi1 - rec.gamma) <= 1e-8);
            for (cplx z : {cplx(1.0, 0.0), cplx(0.0, 1.0), cplx(-1.5, 0.5), cplx(3.0, 0.0)}) {
                const cplx lead = nu * mu / (2.0 * z) * (-std::sin(nu * om));
                CHECK(std::abs(sys.xi(nu, *rec.density, z) - lead) <= 10 * nu * mu * mu * mu);
            }
        }
    }
    const auto g = one_d();
    for (double om : solve_scalar_all(g, 3.0, 64)) {
        const auto rec = g.record(3.0, om, true);
        CHECK(std::abs(rec.xi1 - rec.gamma) <= 1e-8);
    }
}

TEST_CASE("derivatives of F against finite differences") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const int d = sys.model().dim();
        const double nu = generic ? 2.5 : 25.0;
        const Density h = sys.frozen_srb(nu, 1.0);
        const Density phi = perturbation(d, sys.cutoff(), 3);
        const double eps = 1e-4;

        Density fd = sys.F(nu, h + eps * phi) - sys.F(nu, h - eps * phi);
        fd *= 1.0 / (2 * eps);
        CHECK(rel(fd, sys.dF_dh(nu, h, phi)) <= 1e-4);

        Density fn = sys.F(nu + eps, h) - sys.F(nu - eps, h);
        fn *= 1.0 / (2 * eps);
        CHECK(rel(fn, sys.dF_dnu(nu, h)) <= 1e-4);

        // second derivative along Theta: central second difference
        const Density th = sys.theta(nu, sys.Z(h));
        const double e2 = 1e-3;
        Density f2 = sys.F(nu, h + e2 * th) - 2.0 * sys.F(nu, h) + sys.F(nu, h - e2 * th);
        f2 *= 1.0 / (e2 * e2);
        CHECK(rel(f2, sys.d2F_dh2_along_theta(nu, h)) <= 1e-4);
    }
}

TEST_CASE("closed-form inverse of D_hF") {
    for (bool generic : {false, true}) {
        const auto sys = generic ? one_d() : two_d(0.05);
        const int d = sys.model().dim();
        for (double nu : {3.0, 20.0}) {
            const double om = solve_scalar_all(sys, nu, generic ? 64 : 4096).front();
            const Density h = sys.frozen_srb(nu, om);
            if (std::abs(1.0 - sys.gamma(nu, om)) < 0.1) continue;
            const Density psi = perturbation(d, sys.cutoff(), 4);
            const Density back = sys.dF_dh(nu, h, sys.dF_dh_inverse(nu, h, psi));
            CHECK(rel(back, psi) <= 1e-9);
        }
    }
}

TEST_CASE("fold curvature functional is of order mu and nonzero") {
    const double mu = 0.05;
    const auto sys = two_d(mu);
    const auto br = trace_branch(sys, 0.0, 50.0, start_point(sys, 0.0));
    REQUIRE(!br.folds.empty());
    for (const auto& f : br.folds) {
        const Density h = sys.frozen_srb(f.nu, f.omega);
        const double z = sys.Z(sys.d2F_dh2_along_theta(f.nu, h));
        CHECK(std::abs(z) <= mu);
        CHECK(std::abs(z) >= 1e-2 * mu);
    }
}

TEST_CASE("fixed-point equivalence") {
    const auto sys = two_d(0.05);
    for (double nu : {12.0, 55.0, 61.26}) {
        for (double om : solve_scalar_all(sys, nu)) {
            const Density h = sys.frozen_srb(nu, om);
            CHECK(sys.Z(h) == doctest::Approx(om).epsilon(1e-10));
            CHECK(sys.F(nu, h).norm_l2() <= 1e-10 * h.norm_l2());
        }
        // a non-root gives a nonzero residual
        const Density h = sys.frozen_srb(nu, 1.3);
        CHECK(sys.F(nu, h).norm_l2() > 1e-4 * h.norm_l2());
    }
}
