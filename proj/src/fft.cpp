#include "mfcm/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace mfcm::fft {

namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

struct PlanKey {
    int dim, n, sign;
    bool operator<(const PlanKey& o) const { return std::tie(dim, n, sign) < std::tie(o.dim, o.n, o.sign); }
};

// Plans are made for a scratch buffer and executed with fftw_execute_dft,
// which is thread safe for FFTW_ESTIMATE plans on unaligned-agnostic arrays.
fftw_plan get_plan(int dim, int n, int sign) {
    static std::map<PlanKey, fftw_plan> plans;
    std::lock_guard<std::mutex> lock(plan_mutex());
    PlanKey key{dim, n, sign};
    auto it = plans.find(key);
    if (it != plans.end()) return it->second;
    const std::size_t total = dim == 1 ? std::size_t(n) : std::size_t(n) * n;
    fftw_complex* buf = fftw_alloc_complex(total);
    fftw_plan p = dim == 1
        ? fftw_plan_dft_1d(n, buf, buf, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED)
        : fftw_plan_dft_2d(n, n, buf, buf, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    plans.emplace(key, p);
    return p;
}

} // namespace

void transform(std::vector<std::complex<double>>& data, int dim, int n, int sign) {
    fftw_plan p = get_plan(dim, n, sign);
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, ptr, ptr);
}

} // namespace mfcm::fft
