#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mfcm/continuation.hpp"
#include "mfcm/stability.hpp"
#include "oracles.hpp"

using namespace mfcm;

namespace {

MeanFieldSystem two_d(double mu) {
    ModelConfig c;
    c.mu = mu;
    return MeanFieldSystem(build_model(c));
}

MeanFieldSystem one_d(double mu, int cutoff) {
    ModelConfig c;
    c.dim = 1;
    c.n_star = 1;
    c.mu = mu;
    c.k = {1, 0};
    TransferSettings ts;
    ts.cutoff = cutoff;
    return MeanFieldSystem(build_model(c), ts);
}

Density random_density(int dim, int K, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N;
    Density p = Density::uniform(dim, K);
    const double c0 = p.coeff(0, 0).real();
    for (int a = 0; a <= 4; ++a)
        for (int b = (dim == 1 ? 0 : -4); b <= (dim == 1 ? 0 : 4); ++b) {
            if (a == 0 && b <= 0) continue;
            const cplx v(0.1 * N(rng) * c0, 0.1 * N(rng) * c0);
            p.at(a, b) = v;
            p.at(-a, -b) = std::conj(v);
        }
    return p;
}

const MeanFieldSystem& sys05() {
    static const MeanFieldSystem s = two_d(0.05);
    return s;
}

} // namespace

TEST_CASE("unperturbed linearization is the transfer operator") {
    const auto sys = two_d(0.0);
    const auto fp = sys.record(30.0, 1.0, true);
    const auto D = linearize(sys, fp);
    CHECK(D.rank_one_vector().max_abs_coeff() == 0.0);
    const Density phi = random_density(2, sys.cutoff(), 1);
    CHECK((D.apply(phi) - D.op().apply(phi)).max_abs_coeff() == 0.0);
    const auto rep = classify(sys, fp);
    CHECK(rep.secular_roots.empty());
    CHECK(rep.classification == Stability::Physical);
    CHECK(rep.circle_sup == 0.0);
}

TEST_CASE("linearization preserves mass") {
    const auto& sys = sys05();
    for (double nu : {10.0, 61.26}) {
        for (double w : solve_scalar_all(sys, nu)) {
            const auto D = linearize(sys, sys.record(nu, w, true));
            const Density phi = random_density(2, sys.cutoff(), 2);
            CHECK(D.apply(phi).mass() == doctest::Approx(phi.mass()).epsilon(1e-13));
            Density zm = phi;
            zm.set_mass(0.0);
            CHECK(std::abs(D.apply(zm).mass()) <= 1e-14);
        }
    }
}

TEST_CASE("dense linearization and secular roots in the circle family") {
    const int K = 24;
    const auto sys = one_d(0.2, K);
    bool saw_root = false;
    for (double nu : {2.0, 6.0, 9.0}) {
        for (double w : solve_scalar_all(sys, nu, 64)) {
            const auto fp = sys.record(nu, w, true);
            const auto D = linearize(sys, fp);
            const auto L = oracle::dense_matrix(1, K, [&](const Density& p) { return D.op().apply(p); });
            const auto Dm = oracle::dense_matrix(1, K, [&](const Density& p) { return D.apply(p); });
            // D = L + u (alpha row)
            const Eigen::MatrixXcd R =
                L + oracle::coeff_vector(D.rank_one_vector()) * oracle::alpha_functional(1, K, sys.model().k());
            CHECK((Dm - R).cwiseAbs().maxCoeff() <= 1e-12);

            const auto evD = oracle::eigenvalues(Dm);
            const auto evL = oracle::eigenvalues(L);
            const auto rep = classify(sys, fp);
            auto dist_to = [](const std::vector<cplx>& s, cplx z) {
                double d = 1e300;
                for (cplx v : s) d = std::min(d, std::abs(v - z));
                return d;
            };
            for (const auto& r : rep.secular_roots) {
                saw_root = true;
                CHECK(r.residual <= 1e-10);
                CHECK(dist_to(evD, r.z) <= 1e-8);
            }
            // every eigenvalue of D between the contours that is not one of L's is found
            std::vector<cplx> found;
            for (const auto& r : rep.secular_roots) found.push_back(r.z);
            for (cplx z : evD) {
                const double a = std::abs(z);
                if (a <= rep.inner_radius * 1.01 || a >= rep.outer_radius * 0.99) continue;
                if (dist_to(evL, z) <= 1e-6) continue;
                CHECK(dist_to(found, z) <= 1e-8);
            }
            CHECK(rep.xi1_gamma_defect <= 1e-8);
            if (rep.eigvec_at_one) CHECK(rep.eigvec_residual <= 1e-8);
        }
    }
    CHECK(saw_root);
}

TEST_CASE("secular roots in the annihilating example are Gamma") {
    const auto& sys = sys05();
    for (double nu : {30.0, 48.7, 61.26, 66.0}) {
        for (double w : solve_scalar_all(sys, nu)) {
            const auto fp = sys.record(nu, w, true);
            const auto rep = classify(sys, fp);
            CHECK(rep.xi1_gamma_defect <= 1e-8);
            if (std::abs(fp.gamma) > rep.inner_radius * 1.05) {
                REQUIRE(rep.secular_roots.size() == 1);
                CHECK(std::abs(rep.secular_roots[0].z - fp.gamma) <= 1e-10);
            } else {
                CHECK(rep.secular_roots.empty());
            }
            const bool stable = std::abs(fp.gamma) < 1.0;
            CHECK(rep.classification == (stable ? Stability::Physical : Stability::Unstable));
            REQUIRE(rep.eigvec_at_one);
            CHECK(rep.eigvec_residual <= 1e-8);
            CHECK(rep.eigvec_at_one->mass() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(sys.Z(*rep.eigvec_at_one) == doctest::Approx(w / (1.0 - fp.gamma)).epsilon(1e-9));
        }
    }
}

TEST_CASE("weak coupling is physical") {
    const auto& sys = sys05();
    for (double nu = 0.0; nu <= 38.0; nu += 1.9) {
        const auto r = solve_scalar_all(sys, nu);
        REQUIRE(r.size() == 1);
        CHECK(classify(sys, sys.record(nu, r[0], true)).classification == Stability::Physical);
    }
}

TEST_CASE("stability along the traced branch") {
    const auto& sys = sys05();
    Branch br = trace_branch(sys, 0.0, 70.0, start_point(sys, 0.0));
    classify_branch(sys, br);
    const auto& P = br.points;
    REQUIRE(br.folds.size() == 10);

    // neighbours of each fold sit on different sides of z = 1
    for (const auto& f : br.folds) {
        const auto& a = P[f.index - 1];
        const auto& b = P[f.index + 1];
        CHECK(P[f.index].stability == Stability::Marginal);
        const bool pa = a.stability == Stability::Physical, pb = b.stability == Stability::Physical;
        if (a.rec.gamma > -1.0 && b.rec.gamma > -1.0) CHECK(pa != pb);
    }

    // every change of classification away from a fold is a z = -1 crossing
    int flips = 0;
    for (std::size_t i = 1; i < P.size(); ++i) {
        if (P[i].fold || P[i - 1].fold) continue;
        if (P[i].stability != P[i - 1].stability) {
            const double g0 = P[i - 1].rec.gamma, g1 = P[i].rec.gamma;
            CHECK((g0 + 1.0) * (g1 + 1.0) <= 0.0);
            ++flips;
        }
    }
    CHECK(flips > 0);
    for (const auto& p : P) {
        if (p.fold) continue;
        const bool inside = std::abs(p.rec.gamma) < 1.0;
        CHECK(p.stability == (inside ? Stability::Physical : Stability::Unstable));
    }

    // on the segment carrying the three roots at nu = 61.26 the middle root is
    // the only unstable one
    const auto roots = solve_scalar_all(sys, 61.26);
    REQUIRE(roots.size() == 3);
    CHECK(classify(sys, sys.record(61.26, roots[0], true)).classification == Stability::Physical);
    CHECK(classify(sys, sys.record(61.26, roots[1], true)).classification == Stability::Unstable);
    CHECK(classify(sys, sys.record(61.26, roots[2], true)).classification == Stability::Physical);
}

TEST_CASE("real secular root crosses one at a fold") {
    // along the branch in the omega chart the root z = Gamma passes through 1
    // with dz/domega = M_omega_omega
    const auto& sys = sys05();
    const auto br = trace_branch(sys, 40.0, 44.0, start_point(sys, 40.0));
    REQUIRE(!br.folds.empty());
    const auto& f = br.folds[0];
    const double e = 1e-6;
    auto root_at = [&](double w) {
        const double nu = solve_nu_at_omega(sys, w, f.nu);
        const auto rep = classify(sys, sys.record(nu, w, true));
        REQUIRE(rep.secular_roots.size() == 1);
        return rep.secular_roots[0].z.real();
    };
    const double slope = (root_at(f.omega + e) - root_at(f.omega - e)) / (2 * e);
    CHECK(slope == doctest::Approx(sys.d2M_domega2(f.nu, f.omega)).epsilon(1e-4));
    CHECK(root_at(f.omega) == doctest::Approx(1.0).epsilon(1e-9));
}
