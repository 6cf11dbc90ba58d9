#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mfcm/meanfield.hpp"

namespace mfcm {

/// Scalar equation F(x, lambda) = 0 with its partial derivatives.
struct ScalarFSystem {
    std::function<double(double, double)> F;
    std::function<double(double, double)> dFdx;
    std::function<double(double, double)> dFdlambda;
};

/// Radii of the quantitative implicit function theorem around (x0, lambda0),
/// measured by sampling the box |x - x0| <= delta, |lambda - lambda0| <= delta1.
struct IFTCertificate {
    double x0 = 0.0, lambda0 = 0.0;
    double a0 = 0.0;           // frozen slope dF/dx(x0, lambda0)
    double delta = 0.0;
    double delta1 = 0.0;       // delta / (2 upsilon)
    double upsilon = 0.0;      // sup |a0^{-1} dF/dlambda|
    double contraction = 0.0;  // sup |1 - a0^{-1} dF/dx|
    double cbar = 0.0;         // measured stand-in for the existential constant
    double formula_delta = 0.0;   // closed-form radii from cbar, reported next to the measured ones
    double formula_delta1 = 0.0;
    bool valid() const { return contraction <= 0.5; }
};

IFTCertificate certify(const ScalarFSystem& sys, double x0, double lambda0, double delta, int samples = 7);
/// Halves delta from delta_max until the sampled contraction is <= 1/2.
/// Throws NumericalError("CertificateFailed") below delta_min.
IFTCertificate certify_adaptive(const ScalarFSystem& sys, double x0, double lambda0, double delta_max,
                                double delta_min, int samples = 7);

struct CorrectorResult {
    double x = 0.0;
    int iterations = 0;
    double residual = 0.0;
    double contraction = 0.0;  // largest observed ratio of successive steps
};

/// Frozen-slope Newton map x -> x - a0^{-1} F(x, lambda) inside a certificate.
/// Throws NumericalError OutsideCertificate or ContractionViolated.
CorrectorResult newton_corrector(const ScalarFSystem& sys, const IFTCertificate& cert, double lambda,
                                 double x_start = std::numeric_limits<double>::quiet_NaN(), double tol = 1e-14,
                                 int max_iter = 200);

enum class Stability { Physical, Unstable, Marginal, Unknown };
std::string to_string(Stability s);

struct BranchPoint {
    double tau = 0.0;  // arclength in the (nu, omega) plane
    FixedPointRecord rec;
    bool fold = false;
    int chart = 0;     // 0: nu is the parameter, 1: omega is the parameter
    cplx leading_eig = 0.0;
    Stability stability = Stability::Unknown;
};

struct FoldRecord {
    double tau = 0.0;
    double nu = 0.0;
    double omega = 0.0;
    double gamma = 0.0;
    double nu2_formula = 0.0;  // nu''(tau0) from the second-derivative formula
    double nu2_fit = 0.0;      // from a quartic least-squares fit of nu(omega)
    double nu1_fit = 0.0;
    double fit_half_width = 0.0;  // in omega
    int kind = 0;              // +1 local maximum of nu, -1 local minimum
    std::size_t index = 0;     // position of the fold point in Branch::points
};

struct TraceSettings {
    double max_step = 0.05;          // Euclidean step bound in (nu, omega)
    double min_step = 1e-8;
    double switch_threshold = 0.3;   // |1 - Gamma| below this: omega is the parameter
    double switch_back = 0.4;
    double slow_threshold = 0.2;     // step halves below this |1 - Gamma|
    double max_omega_step = 2e-3;
    double corrector_tol = 1e-14;
    double fold_tol = 1e-10;
    double fit_scale = 0.02;         // fit half-width as a fraction of the distance to dM/dnu = 0
    bool fold_curvature = true;
    double start_direction = 1.0;    // sign of the initial nu increment
};

struct TraceStats {
    int corrector_runs = 0;
    int rejected_steps = 0;
    double max_run_contraction = 0.0;
    double max_certificate_contraction = 0.0;
    double smallest_step = std::numeric_limits<double>::infinity();
};

struct Branch {
    std::vector<BranchPoint> points;
    std::vector<FoldRecord> folds;
    TraceStats stats;
    TraceSettings settings;
    double nu_lo = 0.0, nu_hi = 0.0;
};

/// Every root of omega = M_nu(omega) on [1 - mu, 1 + mu], sorted, to 1e-10.
std::vector<double> solve_scalar_all(const MeanFieldSystem& sys, double nu, int grid = 4096, double tol = 1e-12);

/// Unique fixed point at nu (throws NumericalError NotUnique otherwise).
FixedPointRecord start_point(const MeanFieldSystem& sys, double nu);

/// Newton solve of omega - M(nu, omega) = 0 for nu at fixed omega.
double solve_nu_at_omega(const MeanFieldSystem& sys, double omega, double nu_guess, double tol = 1e-15);

Branch trace_branch(const MeanFieldSystem& sys, double nu_lo, double nu_hi, const FixedPointRecord& start,
                    const TraceSettings& settings = {});

/// Refines a fold between two consecutive branch points whose 1 - Gamma differ
/// in sign. Throws NumericalError("NoCrossing") otherwise.
FoldRecord detect_fold(const MeanFieldSystem& sys, const BranchPoint& a, const BranchPoint& b,
                       const TraceSettings& settings = {});

/// nu''(tau0) = nu0^3 Z(D^2F(Theta, Theta)) / omega0 at a fold.
double fold_curvature_formula(const MeanFieldSystem& sys, double nu0, double omega0);

/// All branch omegas at a given nu, refined on the scalar equation.
std::vector<double> branch_omegas_at(const MeanFieldSystem& sys, const Branch& branch, double nu);

/// Components of the solution set in [nu_lo, nu_hi] that the traced branch
/// misses but which reach nu_hi: each root of the scalar equation at nu_hi
/// not on `main` (or on an earlier component) is traced with nu decreasing.
/// Closed curves that stay inside the interval are not found this way.
std::vector<Branch> trace_residual_components(const MeanFieldSystem& sys, const Branch& main,
                                              double match_tol = 1e-8);

/// Roots of the scalar equation at nu that none of the branches passes through.
std::vector<double> unmatched_roots(const MeanFieldSystem& sys, const std::vector<const Branch*>& branches,
                                    double nu, double match_tol = 1e-8);

} // namespace mfcm
