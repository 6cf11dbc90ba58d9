#include "mfcm/krylov.hpp"

namespace mfcm {

GmresResult gmres(const std::function<Density(const Density&)>& apply, const Density& rhs, const Density& x0,
                  double tol, int restart, int max_iter) {
    GmresResult out;
    out.x = x0;
    const double bnorm = rhs.norm_l2();
    if (bnorm == 0.0) {
        out.x *= 0.0;
        out.converged = true;
        return out;
    }
    int total = 0;
    while (total < max_iter) {
        Density r = rhs - apply(out.x);
        double beta = r.norm_l2();
        out.relative_residual = beta / bnorm;
        if (out.relative_residual <= tol) {
            out.converged = true;
            break;
        }
        std::vector<Density> V;
        V.push_back((1.0 / beta) * r);
        std::vector<std::vector<cplx>> H;  // column j has j+2 entries
        std::vector<cplx> cs, sn, g{cplx(beta)};
        int j = 0;
        for (; j < restart && total < max_iter; ++j, ++total) {
            Density w = apply(V[std::size_t(j)]);
            std::vector<cplx> h(std::size_t(j + 2), 0.0);
            for (int pass = 0; pass < 2; ++pass)
                for (int i = 0; i <= j; ++i) {
                    const cplx hij = V[std::size_t(i)].dot(w);
                    h[std::size_t(i)] += hij;
                    w.axpy(-hij, V[std::size_t(i)]);
                }
            const double hn = w.norm_l2();
            h[std::size_t(j + 1)] = hn;
            for (int i = 0; i < j; ++i) {
                const cplx t = std::conj(cs[std::size_t(i)]) * h[std::size_t(i)] + std::conj(sn[std::size_t(i)]) * h[std::size_t(i + 1)];
                h[std::size_t(i + 1)] = -sn[std::size_t(i)] * h[std::size_t(i)] + cs[std::size_t(i)] * h[std::size_t(i + 1)];
                h[std::size_t(i)] = t;
            }
            const cplx a = h[std::size_t(j)], b = h[std::size_t(j + 1)];
            const double denom = std::sqrt(std::norm(a) + std::norm(b));
            cplx c = 1.0, s = 0.0;
            if (denom > 0) {
                c = a / denom;
                s = b / denom;
            }
            cs.push_back(c);
            sn.push_back(s);
            h[std::size_t(j)] = std::conj(c) * a + std::conj(s) * b;
            h[std::size_t(j + 1)] = 0.0;
            g.push_back(-s * g[std::size_t(j)]);
            g[std::size_t(j)] = std::conj(c) * g[std::size_t(j)];
            H.push_back(h);
            out.relative_residual = std::abs(g[std::size_t(j + 1)]) / bnorm;
            if (hn > 0) V.push_back((1.0 / hn) * w);
            if (out.relative_residual <= tol || hn == 0.0) {
                ++j;
                ++total;
                break;
            }
        }
        // back substitution on the j x j triangle
        std::vector<cplx> y(std::size_t(j), 0.0);
        for (int i = j - 1; i >= 0; --i) {
            cplx s = g[std::size_t(i)];
            for (int k = i + 1; k < j; ++k) s -= H[std::size_t(k)][std::size_t(i)] * y[std::size_t(k)];
            y[std::size_t(i)] = s / H[std::size_t(i)][std::size_t(i)];
        }
        for (int i = 0; i < j; ++i) out.x.axpy(y[std::size_t(i)], V[std::size_t(i)]);
        out.iterations = total;
    }
    const double final_res = (rhs - apply(out.x)).norm_l2() / bnorm;
    out.relative_residual = final_res;
    out.converged = final_res <= tol * 10.0;
    return out;
}

} // namespace mfcm
