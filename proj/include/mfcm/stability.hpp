#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mfcm/continuation.hpp"
#include "mfcm/meanfield.hpp"

namespace mfcm {

/// Matrix-free D_h(phi) = L phi - nu div(L beta h) Z(phi).
class Linearization {
public:
    Linearization(const MeanFieldSystem& sys, double nu, const Density& h);
    Density apply(const Density& phi) const;
    const Density& rank_one_vector() const { return u_; }  // -nu div(L beta h)
    const TransferOp& op() const { return op_; }

private:
    const MeanFieldSystem* sys_;
    TransferOp op_;
    Density u_;
};

Linearization linearize(const MeanFieldSystem& sys, const FixedPointRecord& fp);

/// Xi(z) = Z((z - L)^{-1} u) with u = -nu div(L beta h), and its z-derivative.
class SecularFunction {
public:
    SecularFunction(const MeanFieldSystem& sys, double nu, const Density& h);
    cplx value(cplx z) const;
    cplx derivative(cplx z) const;
    double rank_one_norm() const;  // ||u|| ||alpha||
    const TransferOp& op() const { return op_; }
    const Density& u() const { return u_; }

private:
    const MeanFieldSystem* sys_;
    TransferOp op_;
    Density u_;
    bool closed_form_ = false;
    cplx zu_ = 0.0;
};

struct SecularRoot {
    cplx z;
    double residual = 0.0;  // |Xi(z) - 1|
};

struct SecularSettings {
    double inner_radius = 0.5;
    int min_points = 64;
    int max_points = 4096;
    double contour_clearance = 1e-6;
};

struct SecularResult {
    std::vector<SecularRoot> roots;
    double inner_radius = 0.0, outer_radius = 0.0;
    int contour_points = 0;
    double count_defect = 0.0;  // distance of the contour count from an integer
};

/// Roots of Xi(z) = 1 in inner_radius < |z| < R by argument-principle moments
/// and Newton polishing. Throws NumericalError("ContourTooClose").
SecularResult secular_roots(const MeanFieldSystem& sys, const FixedPointRecord& fp, const SecularSettings& s = {});
SecularResult secular_roots(const SecularFunction& xi, double gap, const SecularSettings& s = {});

struct StabilityReport {
    double circle_sup = 0.0;
    std::vector<SecularRoot> secular_roots;
    cplx leading_eig = 0.0;
    Stability classification = Stability::Unknown;
    bool undecidable = false;
    std::string note;
    cplx xi1 = 0.0;
    double xi1_gamma_defect = 0.0;
    double gap = 0.0;
    double kappa = 0.0;
    double inner_radius = 0.0, outer_radius = 0.0;
    std::shared_ptr<const Density> eigvec_at_one;
    double eigvec_residual = 0.0;
};

struct ClassifySettings {
    int circle_points = 256;
    double tol = 1e-6;
    bool eigenvector = true;
    SecularSettings secular;
};

StabilityReport classify(const MeanFieldSystem& sys, const FixedPointRecord& fp, const ClassifySettings& s = {});

/// Fills stability and leading eigenvalue of every branch point.
void classify_branch(const MeanFieldSystem& sys, Branch& branch, const ClassifySettings& s = {});

} // namespace mfcm
