#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "mfcm/density.hpp"

namespace mfcm {

struct GmresResult {
    Density x;
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Restarted GMRES with modified Gram-Schmidt (two passes) and Givens rotations.
GmresResult gmres(const std::function<Density(const Density&)>& apply, const Density& rhs, const Density& x0,
                  double tol, int restart = 60, int max_iter = 600);

} // namespace mfcm
