#include "mfcm/density.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <bit>
#include <cstdio>

#include "mfcm/errors.hpp"
#include "mfcm/fft.hpp"

namespace mfcm {

Density::Density(int dim, int cutoff) : dim_(dim), K_(cutoff) {
    if (dim != 1 && dim != 2) throw ConfigError("InvalidParameter", "density dim must be 1 or 2");
    if (cutoff < 1) throw ConfigError("InvalidParameter", "mode cutoff must be positive");
    const std::size_t s = std::size_t(2 * cutoff + 1);
    c_.assign(dim == 1 ? s : s * s, cplx(0.0));
}

Density Density::uniform(int dim, int cutoff) {
    Density h(dim, cutoff);
    h.set_mass(1.0);
    return h;
}

std::array<int, 2> Density::mode(std::size_t idx) const {
    if (dim_ == 1) return {int(idx) - K_, 0};
    const std::size_t s = std::size_t(side());
    return {int(idx / s) - K_, int(idx % s) - K_};
}

Density& Density::operator+=(const Density& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
}

Density& Density::operator-=(const Density& o) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
}

Density& Density::operator*=(cplx s) {
    for (auto& v : c_) v *= s;
    return *this;
}

void Density::axpy(cplx a, const Density& x) {
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += a * x.c_[i];
}

double Density::norm_l2() const {
    double s = 0.0;
    for (const auto& v : c_) s += std::norm(v);
    return std::sqrt(volume() * s);
}

cplx Density::dot(const Density& o) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) s += std::conj(c_[i]) * o.c_[i];
    return volume() * s;
}

double Density::max_abs_coeff() const {
    double m = 0.0;
    for (const auto& v : c_) m = std::max(m, std::abs(v));
    return m;
}

double Density::hermitian_defect() const {
    double m = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
        const auto md = mode(i);
        m = std::max(m, std::abs(c_[i] - std::conj(at(-md[0], -md[1]))));
    }
    return m;
}

std::vector<cplx> Density::grid_values_complex(int n) const {
    if (n < side()) throw ConfigError("InvalidParameter", "grid too coarse for cutoff");
    const std::size_t total = dim_ == 1 ? std::size_t(n) : std::size_t(n) * n;
    std::vector<cplx> g(total, cplx(0.0));
    auto wrap = [n](int m) { return m < 0 ? m + n : m; };
    for (std::size_t i = 0; i < c_.size(); ++i) {
        const auto md = mode(i);
        if (dim_ == 1) g[wrap(md[0])] = c_[i];
        else g[std::size_t(wrap(md[0])) * n + wrap(md[1])] = c_[i];
    }
    fft::transform(g, dim_, n, +1);
    return g;
}

std::vector<double> Density::grid_values(int n) const {
    const auto g = grid_values_complex(n);
    std::vector<double> r(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) r[i] = g[i].real();
    return r;
}

Density Density::from_grid_complex(int dim, int cutoff, const std::vector<cplx>& values, int n) {
    Density h(dim, cutoff);
    if (n < h.side()) throw ConfigError("InvalidParameter", "grid too coarse for cutoff");
    std::vector<cplx> g = values;
    fft::transform(g, dim, n, -1);
    const double scale = dim == 1 ? 1.0 / n : 1.0 / (double(n) * n);
    auto wrap = [n](int m) { return m < 0 ? m + n : m; };
    for (std::size_t i = 0; i < h.c_.size(); ++i) {
        const auto md = h.mode(i);
        const std::size_t src = dim == 1 ? std::size_t(wrap(md[0])) : std::size_t(wrap(md[0])) * n + wrap(md[1]);
        h.c_[i] = g[src] * scale;
    }
    return h;
}

Density Density::from_grid(int dim, int cutoff, const std::vector<double>& values, int n) {
    std::vector<cplx> g(values.begin(), values.end());
    return from_grid_complex(dim, cutoff, g, n);
}

cplx Density::eval(const Point& x) const {
    cplx s = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
        if (c_[i] == cplx(0.0)) continue;
        const auto md = mode(i);
        s += c_[i] * std::polar(1.0, md[0] * x[0] + md[1] * (dim_ == 1 ? 0.0 : x[1]));
    }
    return s;
}

Density Density::with_cutoff(int cutoff) const {
    Density h(dim_, cutoff);
    for (std::size_t i = 0; i < c_.size(); ++i) {
        const auto md = mode(i);
        if (h.in_range(md[0], md[1])) h.at(md[0], md[1]) = c_[i];
    }
    return h;
}

cplx alpha_pairing(const Density& h, const std::array<std::int64_t, 2>& k) {
    const std::int64_t k2 = h.dim() == 1 ? 0 : k[1];
    return h.volume() * (h.at(0, 0) - 0.5 * (h.coeff(k[0], k2) + h.coeff(-k[0], -k2)));
}

namespace {

template <class F>
Density modewise(const Density& h, F f) {
    Density r = h;
    auto& c = r.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= f(h.mode(i));
    return r;
}

} // namespace

Density translate(const Density& h, const Point& s) {
    const double s1 = h.dim() == 1 ? 0.0 : s[1];
    return modewise(h, [&](const std::array<int, 2>& m) { return std::polar(1.0, -(m[0] * s[0] + m[1] * s1)); });
}

Density derivative_along(const Density& h, const Point& b) {
    const double b1 = h.dim() == 1 ? 0.0 : b[1];
    return modewise(h, [&](const std::array<int, 2>& m) { return cplx(0.0, m[0] * b[0] + m[1] * b1); });
}

Density second_derivative_along(const Density& h, const Point& b) {
    const double b1 = h.dim() == 1 ? 0.0 : b[1];
    return modewise(h, [&](const std::array<int, 2>& m) {
        const double t = m[0] * b[0] + m[1] * b1;
        return cplx(-t * t, 0.0);
    });
}

void write_density_csv(std::ostream& os, const Density& h, const std::vector<std::string>& header) {
    for (const auto& line : header) os << "# " << line << '\n';
    os << "# dim=" << h.dim() << " cutoff=" << h.cutoff() << '\n';
    os << "k1,k2,re,im\n";
    char buf[128];
    for (std::size_t i = 0; i < h.size(); ++i) {
        const auto m = h.mode(i);
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", m[0], m[1], h.coeffs()[i].real(), h.coeffs()[i].imag());
        os << buf;
    }
}

Density read_density_csv(std::istream& is) {
    std::string line;
    int dim = 0, K = 0;
    Density h;
    bool have_shape = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (std::sscanf(line.c_str(), "# dim=%d cutoff=%d", &dim, &K) == 2) {
                h = Density(dim, K);
                have_shape = true;
            }
            continue;
        }
        if (line.rfind("k1", 0) == 0) continue;
        if (!have_shape) throw ConfigError("BadDensityFile", "missing dim/cutoff comment line");
        int k1, k2;
        double re, im;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &k1, &k2, &re, &im) != 4)
            throw ConfigError("BadDensityFile", "malformed row: " + line);
        if (!h.in_range(k1, k2)) throw ConfigError("BadDensityFile", "mode outside cutoff: " + line);
        h.at(k1, k2) = cplx(re, im);
    }
    if (!have_shape) throw ConfigError("BadDensityFile", "empty density file");
    return h;
}

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    // x86 and aarch64 are little-endian; swap on big-endian hosts
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ConfigError("BadDensityFile", "truncated binary density");
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace

void write_density_binary(std::ostream& os, const Density& h) {
    os.write("MFCD", 4);
    put_le<std::uint32_t>(os, 1);
    put_le<std::uint32_t>(os, std::uint32_t(h.dim()));
    put_le<std::uint32_t>(os, std::uint32_t(h.cutoff()));
    for (std::size_t i = 0; i < h.size(); ++i) {
        const auto m = h.mode(i);
        put_le<std::int32_t>(os, m[0]);
        put_le<std::int32_t>(os, m[1]);
        put_le<double>(os, h.coeffs()[i].real());
        put_le<double>(os, h.coeffs()[i].imag());
    }
}

Density read_density_binary(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "MFCD", 4) != 0) throw ConfigError("BadDensityFile", "bad magic");
    if (get_le<std::uint32_t>(is) != 1) throw ConfigError("BadDensityFile", "unsupported version");
    const int dim = int(get_le<std::uint32_t>(is));
    const int K = int(get_le<std::uint32_t>(is));
    Density h(dim, K);
    for (std::size_t i = 0; i < h.size(); ++i) {
        const int k1 = get_le<std::int32_t>(is), k2 = get_le<std::int32_t>(is);
        const double re = get_le<double>(is), im = get_le<double>(is);
        if (!h.in_range(k1, k2)) throw ConfigError("BadDensityFile", "mode outside cutoff");
        h.at(k1, k2) = cplx(re, im);
    }
    return h;
}

} // namespace mfcm
