#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mfcm/model.hpp"

namespace mfcm {

using cplx = std::complex<double>;

/// Truncated Fourier series on the torus [0, 2pi)^dim, modes |k_i| <= K.
/// Coefficients are taken against unnormalized Lebesgue measure, so a
/// probability density has coeff(0) = 1/(2pi)^dim. Storage is row-major over
/// k1 then k2, both ascending.
class Density {
public:
    Density() = default;
    Density(int dim, int cutoff);
    static Density uniform(int dim, int cutoff);

    int dim() const { return dim_; }
    int cutoff() const { return K_; }
    int side() const { return 2 * K_ + 1; }
    std::size_t size() const { return c_.size(); }

    bool in_range(std::int64_t k1, std::int64_t k2 = 0) const {
        return k1 >= -K_ && k1 <= K_ && (dim_ == 1 ? k2 == 0 : (k2 >= -K_ && k2 <= K_));
    }
    std::size_t index(std::int64_t k1, std::int64_t k2 = 0) const {
        return dim_ == 1 ? std::size_t(k1 + K_) : std::size_t(k1 + K_) * side() + std::size_t(k2 + K_);
    }
    /// Mode vector for a flat index.
    std::array<int, 2> mode(std::size_t idx) const;

    cplx& at(std::int64_t k1, std::int64_t k2 = 0) { return c_[index(k1, k2)]; }
    const cplx& at(std::int64_t k1, std::int64_t k2 = 0) const { return c_[index(k1, k2)]; }
    /// Coefficient or zero when outside the cutoff.
    cplx coeff(std::int64_t k1, std::int64_t k2 = 0) const { return in_range(k1, k2) ? at(k1, k2) : cplx(0.0); }

    std::vector<cplx>& coeffs() { return c_; }
    const std::vector<cplx>& coeffs() const { return c_; }

    double volume() const { return dim_ == 1 ? kTwoPi : kTwoPi * kTwoPi; }
    /// Total integral (real part of the zero mode times the torus volume).
    double mass() const { return volume() * c_[index(0, 0)].real(); }
    cplx mass_complex() const { return volume() * c_[index(0, 0)]; }
    void set_mass(double m) { c_[index(0, 0)] = cplx(m / volume(), 0.0); }
    void set_zero_mode(cplx v) { c_[index(0, 0)] = v; }

    Density& operator+=(const Density& o);
    Density& operator-=(const Density& o);
    Density& operator*=(cplx s);
    void axpy(cplx a, const Density& x);  // this += a*x
    friend Density operator+(Density a, const Density& b) { return a += b; }
    friend Density operator-(Density a, const Density& b) { return a -= b; }
    friend Density operator*(cplx s, Density a) { return a *= s; }

    /// L2 norm of the represented function (Parseval).
    double norm_l2() const;
    cplx dot(const Density& o) const;  // sum conj(this_k) o_k, scaled like norm_l2
    double max_abs_coeff() const;
    double hermitian_defect() const;

    /// Real samples on the n^dim grid x_j = 2 pi j / n (n >= 2K+1).
    std::vector<double> grid_values(int n) const;
    std::vector<cplx> grid_values_complex(int n) const;
    static Density from_grid(int dim, int cutoff, const std::vector<double>& values, int n);
    static Density from_grid_complex(int dim, int cutoff, const std::vector<cplx>& values, int n);

    cplx eval(const Point& x) const;
    Density with_cutoff(int cutoff) const;

private:
    int dim_ = 1;
    int K_ = 0;
    std::vector<cplx> c_;
};

/// Integral of alpha(x) = 1 - cos<k,x> against h, read from modes 0 and +-k.
cplx alpha_pairing(const Density& h, const std::array<std::int64_t, 2>& k);

/// h(x - s): modewise phase factor exp(-i<m,s>).
Density translate(const Density& h, const Point& s);
/// Directional derivative along b: modewise factor i<m,b>.
Density derivative_along(const Density& h, const Point& b);
/// Second directional derivative along b: modewise factor -<m,b>^2.
Density second_derivative_along(const Density& h, const Point& b);

/// CSV rows k1,k2,re,im in storage order; lines starting with '#' are comments.
void write_density_csv(std::ostream& os, const Density& h, const std::vector<std::string>& header = {});
Density read_density_csv(std::istream& is);
/// Little-endian binary: magic "MFCD", u32 version, u32 dim, u32 K, then per
/// mode in storage order i32 k1, i32 k2, f64 re, f64 im.
void write_density_binary(std::ostream& os, const Density& h);
Density read_density_binary(std::istream& is);

} // namespace mfcm
