#pragma once
// Shared scalar/array aliases and a small dense symmetric-tensor type for
// third and fourth derivatives. Dimensions are 1..3, so flat storage is fine.

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <vector>

namespace bloch {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

constexpr double kPi = 3.141592653589793238462643383279502884;

// Dense rank-3 tensor, d x d x d.
class Tensor3 {
  public:
    Tensor3() : d_(0) {}
    explicit Tensor3(int d) : d_(d), v_(static_cast<size_t>(d) * d * d, 0.0) {}
    int dim() const { return d_; }
    double& operator()(int i, int j, int k) { return v_[idx(i, j, k)]; }
    double operator()(int i, int j, int k) const { return v_[idx(i, j, k)]; }
    void setZero() { std::fill(v_.begin(), v_.end(), 0.0); }
    // contraction over the last two slots: out_i = sum_{jk} T_ijk M_jk
    Vec contract(const Mat& m) const {
        Vec out = Vec::Zero(d_);
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j)
                for (int k = 0; k < d_; ++k) out[i] += (*this)(i, j, k) * m(j, k);
        return out;
    }
    // slice T_(i,:,:) as a matrix
    Mat slice(int i) const {
        Mat s(d_, d_);
        for (int j = 0; j < d_; ++j)
            for (int k = 0; k < d_; ++k) s(j, k) = (*this)(i, j, k);
        return s;
    }
    double max_asymmetry() const {
        double m = 0.0;
        for (int i = 0; i < d_; ++i)
            for (int j = 0; j < d_; ++j)
                for (int k = 0; k < d_; ++k) {
                    m = std::max(m, std::abs((*this)(i, j, k) - (*this)(j, i, k)));
                    m = std::max(m, std::abs((*this)(i, j, k) - (*this)(i, k, j)));
                }
        return m;
    }

  private:
    size_t idx(int i, int j, int k) const {
        return (static_cast<size_t>(i) * d_ + j) * d_ + k;
    }
    int d_;
    std::vector<double> v_;
};

// Dense rank-4 tensor, used only for fourth derivatives of the external potential.
class Tensor4 {
  public:
    Tensor4() : d_(0) {}
    explicit Tensor4(int d) : d_(d), v_(static_cast<size_t>(d) * d * d * d, 0.0) {}
    int dim() const { return d_; }
    double& operator()(int i, int j, int k, int l) { return v_[idx(i, j, k, l)]; }
    double operator()(int i, int j, int k, int l) const { return v_[idx(i, j, k, l)]; }

  private:
    size_t idx(int i, int j, int k, int l) const {
        return ((static_cast<size_t>(i) * d_ + j) * d_ + k) * d_ + l;
    }
    int d_;
    std::vector<double> v_;
};

}  // namespace bloch
