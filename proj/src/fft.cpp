#include <blochpack/errors.hpp>
#include <blochpack/fft.hpp>

#include <fftw3.h>

#include <cstring>
#include <mutex>
#include <vector>

namespace bloch {

namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

struct FftWorkspace::Impl {
    int dim = 0;
    int n = 0;
    int total = 0;
    fftw_complex* buf = nullptr;
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

FftWorkspace::FftWorkspace(int dim, int n_per_axis) : impl_(new Impl) {
    if (dim < 1 || dim > 3 || n_per_axis < 2)
        throw ConfigError("unsupported transform geometry: dim must be 1..3, n >= 2");
    impl_->dim = dim;
    impl_->n = n_per_axis;
    impl_->total = 1;
    for (int i = 0; i < dim; ++i) impl_->total *= n_per_axis;
    impl_->buf = fftw_alloc_complex(static_cast<size_t>(impl_->total));
    if (impl_->buf == nullptr) throw IoError("transform buffer allocation failed");
    std::vector<int> shape(static_cast<size_t>(dim), n_per_axis);
    // FFTW_ESTIMATE keeps planning deterministic (no runtime measurement)
    std::lock_guard<std::mutex> lock(plan_mutex());
    impl_->fwd = fftw_plan_dft(dim, shape.data(), impl_->buf, impl_->buf, FFTW_FORWARD,
                               FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft(dim, shape.data(), impl_->buf, impl_->buf, FFTW_BACKWARD,
                               FFTW_ESTIMATE);
    if (impl_->fwd == nullptr || impl_->bwd == nullptr)
        throw IoError("transform planning failed");
}

FftWorkspace::~FftWorkspace() {
    if (!impl_) return;
    std::lock_guard<std::mutex> lock(plan_mutex());
    if (impl_->fwd != nullptr) fftw_destroy_plan(impl_->fwd);
    if (impl_->bwd != nullptr) fftw_destroy_plan(impl_->bwd);
    if (impl_->buf != nullptr) fftw_free(impl_->buf);
}

int FftWorkspace::dim() const { return impl_->dim; }
int FftWorkspace::size() const { return impl_->total; }

void FftWorkspace::forward(CVec& v) {
    if (static_cast<int>(v.size()) != impl_->total)
        throw GridMismatch("sample count does not match the planned transform size");
    // std::complex<double> is layout compatible with fftw_complex; the copy
    // through the planned buffer keeps the SIMD alignment the plan assumed
    std::memcpy(impl_->buf, v.data(), sizeof(fftw_complex) * v.size());
    fftw_execute(impl_->fwd);
    std::memcpy(v.data(), impl_->buf, sizeof(fftw_complex) * v.size());
}

void FftWorkspace::backward_normalized(CVec& v) {
    if (static_cast<int>(v.size()) != impl_->total)
        throw GridMismatch("sample count does not match the planned transform size");
    std::memcpy(impl_->buf, v.data(), sizeof(fftw_complex) * v.size());
    fftw_execute(impl_->bwd);
    std::memcpy(v.data(), impl_->buf, sizeof(fftw_complex) * v.size());
    v /= static_cast<double>(impl_->total);
}

}  // namespace bloch
