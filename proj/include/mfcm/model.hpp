#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace mfcm {

using Point = std::array<double, 2>;   // 1D models use only the first coordinate
using TorusPoints = std::vector<Point>;

constexpr double kTwoPi = 6.283185307179586476925286766559;

enum class BetaMode { Lattice, Eigenvector };

/// Raw parameter set. nu_max <= 0 selects the calibrated default 1/mu^2.
struct ModelConfig {
    int dim = 2;
    std::array<std::int64_t, 4> A{2, 1, 1, 1};  // row-major, 2D only
    std::int64_t expansion = 2;                 // 1D base map x -> expansion * x
    int n_star = 10;
    double mu = 0.05;
    std::array<std::int64_t, 2> k{0, 1};        // 1D uses k[0]
    double nu_max = 0.0;
    BetaMode beta = BetaMode::Lattice;
};

class ModelSpec {
public:
    int dim() const { return dim_; }
    int n_star() const { return n_star_; }
    double mu() const { return mu_; }
    double theta() const { return theta_; }
    double nu_max() const { return nu_max_; }
    const std::array<std::int64_t, 2>& k() const { return k_; }
    const std::array<std::int64_t, 4>& A() const { return A_; }
    std::int64_t expansion() const { return expansion_; }
    /// Displacement direction of the mean-field shift.
    const Point& beta() const { return beta_; }
    /// A^{n*} (2D, row-major) or expansion^{n*} in entry 0 (1D).
    const std::array<std::int64_t, 4>& base_power() const { return power_; }
    const ModelConfig& config() const { return config_; }

    double phase(const Point& x) const { return double(k_[0]) * x[0] + double(k_[1]) * x[1]; }
    double alpha(const Point& x) const;
    Point chi(const Point& x) const;
    /// s(theta) = <k, chi> as a function of the phase, and its derivative.
    double s_of_phase(double th) const;
    double ds_of_phase(double th) const;

    Point rho(const Point& x) const;
    Point invert_rho(const Point& y, double tol = 1e-12, int max_iter = 50) const;
    double jacobian_det(const Point& x) const;          // det D rho(x)
    double inverse_jacobian_det(const Point& y) const;  // det D rho^{-1}(y)
    Point base_map(const Point& x) const;                 // T0^{n*}
    Point shift(double nu, double omega) const { return {nu * omega * beta_[0], nu * omega * beta_[1]}; }
    Point apply_coupled_map(double nu, double omega, const Point& x) const;
    TorusPoints apply_coupled_map(double nu, double omega, const TorusPoints& x) const;
    TorusPoints invert_rho(const TorusPoints& y, double tol = 1e-12) const;

    /// Exact a, b with det D rho^{-1}(y) = 1 + a(y) mu + b(y) mu^2 + O(mu^3).
    std::pair<double, double> coefficients_ab(const Point& y) const;

private:
    friend ModelSpec build_model(const ModelConfig&);
    ModelConfig config_;
    int dim_ = 2;
    std::array<std::int64_t, 4> A_{};
    std::int64_t expansion_ = 2;
    std::array<std::int64_t, 4> power_{};
    int n_star_ = 1;
    double mu_ = 0.0;
    std::array<std::int64_t, 2> k_{};
    double theta_ = 0.0;
    double nu_max_ = 0.0;
    Point beta_{};
};

/// Validates a parameter set. Throws ConfigError with code NonHyperbolic,
/// RhoNotDiffeo, ZeroLattice or InvalidParameter.
ModelSpec build_model(const ModelConfig& cfg);

double wrap_angle(double x);
Point wrap_point(const Point& x);

class Density;
/// Closed-form second-order density of the frozen map, shifted by nu*beta*omega.
/// Independent oracle: never used inside the solvers.
Density perturbative_density(const ModelSpec& model, double nu, double omega, int cutoff);

} // namespace mfcm
