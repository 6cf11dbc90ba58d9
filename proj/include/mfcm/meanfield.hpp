#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "mfcm/density.hpp"
#include "mfcm/model.hpp"
#include "mfcm/transfer.hpp"

namespace mfcm {

struct FixedPointRecord {
    double nu = 0.0;
    double omega = 0.0;
    std::shared_ptr<const Density> density;  // may be empty for branch points
    double residual = 0.0;                   // |omega - M_nu(omega)|
    double gamma = 0.0;
    cplx xi1 = 0.0;
};

struct MeanFieldSettings {
    double srb_tol = 1e-13;
    double resolvent_tol = 1e-13;
    int max_srb_iter = 2000;
};

/// Result of iterating the nonlinear operator: either a fixed point or a cycle.
struct IterationOutcome {
    enum class Kind { Fixed, Cycle } kind = Kind::Fixed;
    FixedPointRecord fixed;
    int period = 1;
    std::vector<double> cycle_omegas;
    std::vector<double> omega_history;
    int steps = 0;
};

/// Mean-field system for one model: the scalar reduction M, the response
/// field Theta, the fold functional Gamma and the derivative formulas.
/// Immutable and safe to share between threads.
class MeanFieldSystem {
public:
    explicit MeanFieldSystem(const ModelSpec& model, const TransferSettings& ts = {},
                             const MeanFieldSettings& ms = {});

    const ModelSpec& model() const { return core_->model(); }
    std::shared_ptr<const TransferCore> core() const { return core_; }
    int cutoff() const { return core_->cutoff(); }
    const MeanFieldSettings& settings() const { return settings_; }
    /// True when the scalar functionals are read from cached modes of h*.
    bool fast_path() const { return fast_; }

    TransferOp op(double nu, double omega) const { return TransferOp(core_, nu, omega); }
    double Z(const Density& h) const { return alpha_pairing(h, model().k()).real(); }
    cplx Zc(const Density& h) const { return alpha_pairing(h, model().k()); }

    Density nonlinear_step(double nu, const Density& h) const;
    Density frozen_srb(double nu, double omega) const;
    double mean_field_map(double nu, double omega) const;
    Density theta(double nu, double omega) const;
    double gamma(double nu, double omega) const;
    /// Partial derivatives of M: dM/dnu = omega Z(Theta), d2M/domega2.
    double dM_dnu(double nu, double omega) const;
    double d2M_domega2(double nu, double omega) const;

    /// Xi(z) for a density h (normally a fixed point) at coupling nu.
    cplx xi(double nu, const Density& h, cplx z) const;

    Density F(double nu, const Density& h) const;
    Density dF_dh(double nu, const Density& h, const Density& phi) const;
    Density dF_dnu(double nu, const Density& h) const;
    Density d2F_dh2_along_theta(double nu, const Density& h) const;
    /// Closed-form inverse of D_hF (requires Gamma != 1).
    Density dF_dh_inverse(double nu, const Density& h, const Density& psi) const;

    /// Record for a root omega of omega = M_nu(omega); the density is attached
    /// only when with_density is set.
    FixedPointRecord record(double nu, double omega, bool with_density = false) const;

    IterationOutcome find_fixed_by_iteration(double nu, const Density& h0, int max_steps, double tol = 1e-12,
                                             int max_period = 8) const;

private:
    struct Modes {
        cplx c0, ck, cmk;  // coefficients of H at 0, k, -k
    };
    Modes fast_modes(double nu, double omega) const;
    Density theta_of(double nu, double omega, const Density& H) const;

    std::shared_ptr<const TransferCore> core_;
    MeanFieldSettings settings_;
    bool fast_ = false;
    cplx h0_ = 0.0, hk_ = 0.0, hmk_ = 0.0;  // cached modes of the constant image
};

} // namespace mfcm
