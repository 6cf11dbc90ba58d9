#pragma once

#include <memory>
#include <vector>

#include "mfcm/density.hpp"
#include "mfcm/model.hpp"

namespace mfcm {

struct TransferSettings {
    int cutoff = 0;                    // 0 selects 64 (2D) or 128 (1D)
    double mollifier_fraction = 0.25;  // tapered share of each axis
    double newton_tol = 1e-12;
    double max_mass_drift = 1e-6;      // CutoffTooSmall above this (relative)
    bool structural_shortcut = true;   // use the annihilation identity when it holds
};

int default_cutoff(int dim);

struct ApplyStats {
    double mass_drift = 0.0;   // |mass before renormalization - mass of input|
    bool drift_reported = false;  // drift above 1e-10
};

/// The (nu, omega)-independent part rho o T0^{n*} o rho^{-1} of the frozen
/// transfer operator, with all grid geometry precomputed. Immutable.
class TransferCore {
public:
    TransferCore(const ModelSpec& model, const TransferSettings& settings = {});

    const ModelSpec& model() const { return model_; }
    const TransferSettings& settings() const { return settings_; }
    int cutoff() const { return K_; }
    int grid_size() const { return n_; }

    /// True when T0^{n*} sends every nonzero mode outside the cutoff, so the
    /// core maps every density to mass(h) times constant_image().
    bool annihilates() const { return annihilates_; }
    /// Core applied to the uniform probability density.
    const Density& constant_image() const { return constant_image_; }

    Density apply(const Density& h, ApplyStats* stats = nullptr) const;
    Density apply_generic(const Density& h, ApplyStats* stats = nullptr) const;

    /// Single factors, exposed for tests.
    Density apply_rho(const Density& h) const;          // L_rho
    Density apply_rho_inverse(const Density& h) const;  // L_{rho^{-1}}
    Density apply_base(const Density& h) const;         // L_{T0^{n*}}
    void mollify(Density& h) const;
    double mollifier_weight(int m) const { return taper_[std::size_t(m < 0 ? -m : m)]; }

private:
    Density interpolate_factor(const Density& h, const std::vector<Point>& pts, const std::vector<double>& w) const;

    ModelSpec model_;
    TransferSettings settings_;
    int K_ = 0;
    int n_ = 0;
    std::vector<Point> rho_pts_;       // rho(x_j)
    std::vector<double> rho_w_;        // J(x_j)
    std::vector<Point> rhoinv_pts_;    // rho^{-1}(x_j)
    std::vector<double> rhoinv_w_;     // 1 / J(rho^{-1} x_j)
    std::vector<long> source_;         // index map of L_{T0^{n*}}
    std::vector<double> taper_;
    bool annihilates_ = false;
    Density constant_image_;
};

/// Frozen transfer operator L_{T_{nu,omega}} = L_Phi o core.
class TransferOp {
public:
    TransferOp(std::shared_ptr<const TransferCore> core, double nu, double omega);

    const TransferCore& core() const { return *core_; }
    std::shared_ptr<const TransferCore> core_ptr() const { return core_; }
    const ModelSpec& model() const { return core_->model(); }
    double nu() const { return nu_; }
    double omega() const { return omega_; }
    Point shift() const { return shift_; }

    Density apply(const Density& h, ApplyStats* stats = nullptr) const;
    /// Applies only the shift factor.
    Density translate(const Density& h) const;

private:
    std::shared_ptr<const TransferCore> core_;
    double nu_, omega_;
    Point shift_;
    std::vector<cplx> phase_;
};

Density transfer_apply(const TransferOp& op, const Density& h, ApplyStats* stats = nullptr);

/// Power iteration from the uniform density. Throws NoConvergence.
Density srb_density(const TransferOp& op, double tol = 1e-13, int max_iter = 2000);

struct SolveInfo {
    int iterations = 0;
    double residual = 0.0;  // relative residual
};

/// Solves (z - L) w = v on mean-zero densities. Throws SolverStall.
Density resolvent_solve(const TransferOp& op, cplx z, const Density& v, double tol = 1e-13,
                        SolveInfo* info = nullptr);

/// div(L beta h) = directional derivative of L h along beta.
Density divergence_coupling(const TransferOp& op, const Density& h);

/// Empirical modulus of the second eigenvalue (power iteration on mean-zero modes).
double spectral_gap_estimate(const TransferOp& op, int iterations = 80);

} // namespace mfcm
