#pragma once
// Complex-to-complex DFT workspace on a d-dimensional tensor grid with n
// points per axis (row-major flattening, d in {1, 2, 3}). FFTW planning is
// serialized behind a global mutex; execution is thread safe as long as each
// thread owns its workspace.

#include <blochpack/types.hpp>

#include <memory>

namespace bloch {

class FftWorkspace {
  public:
    FftWorkspace(int dim, int n_per_axis);
    ~FftWorkspace();
    FftWorkspace(const FftWorkspace&) = delete;
    FftWorkspace& operator=(const FftWorkspace&) = delete;

    int dim() const;
    int size() const;

    // unnormalized DFT with e^{-i x.xi} weights
    void forward(CVec& v);
    // inverse DFT including the 1/size factor
    void backward_normalized(CVec& v);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace bloch
