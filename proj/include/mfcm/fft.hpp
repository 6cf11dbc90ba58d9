#pragma once

#include <complex>
#include <vector>

namespace mfcm::fft {

/// In-place unnormalized DFT on an n^dim complex array (row-major).
/// sign = -1 forward (exp(-i...)), +1 backward. Plans are cached per shape.
void transform(std::vector<std::complex<double>>& data, int dim, int n, int sign);

} // namespace mfcm::fft
