#pragma once
// Lattice geometry (direct/dual generators, Brillouin-zone folding, reciprocal
// mode enumeration) and the two potentials: V periodic with a finite Fourier
// series, W smooth with closed-form derivatives through order four.

#include <blochpack/errors.hpp>
#include <blochpack/types.hpp>

#include <map>
#include <variant>
#include <vector>

namespace bloch {

struct LatticeSpec {
    int dim = 0;
    Mat direct;  // columns v_j
    Mat dual;    // columns b_j, b_i . v_j = 2 pi delta_ij
    double cell_volume_direct = 0.0;
    double cell_volume_dual = 0.0;

    static LatticeSpec from_direct(const Mat& generators);
    // cubic direct cell of side `a` (the common case in the scenarios)
    static LatticeSpec cubic(int d, double a);
};

// Reciprocal vectors G = sum_i m_i b_i with |G| <= cutoff, ordered
// lexicographically on the integer coordinates m for reproducibility.
struct ReciprocalModes {
    Eigen::MatrixXi m;  // d x n integer coordinates, column per mode
    Mat G;              // d x n reciprocal vectors
    int count() const { return static_cast<int>(m.cols()); }
    int index_of_zero = -1;
};

ReciprocalModes enumerate_reciprocal(const LatticeSpec& lat, double cutoff);

struct FoldResult {
    Vec p_folded;
    IVec shift;  // integer dual coordinates; p = p_folded + dual * shift
};

// Fold to the centered half-open fundamental cell: dual coordinates in (-1/2, 1/2].
FoldResult fold_to_bz(const LatticeSpec& lat, const Vec& p);

class PeriodicPotential {
  public:
    PeriodicPotential() = default;
    // Coefficients as (integer index m, amplitude); Hermitian symmetry
    // vhat_{-m} = conj(vhat_m) is required and verified.
    PeriodicPotential(const LatticeSpec& lat,
                      const std::vector<std::pair<IVec, cplx>>& coefficients);

    const LatticeSpec& lattice() const { return lat_; }
    const std::vector<std::pair<IVec, cplx>>& coefficients() const { return coeff_; }
    cplx coefficient(const IVec& m) const;
    double eval(const Vec& z) const;
    bool empty() const { return coeff_.empty(); }
    double max_index_norm() const;  // largest |G| over the support

    // V(z) = amplitude * cos(b1 . z), i.e. vhat_{+-1} = amplitude / 2
    static PeriodicPotential single_cosine(const LatticeSpec& lat, double amplitude);

  private:
    LatticeSpec lat_;
    std::vector<std::pair<IVec, cplx>> coeff_;
};

// Closed-form external potential families. Derivatives are exact; order > 4
// is refused (UnsupportedOrder) even where the family would allow more.
class ExternalPotential {
  public:
    enum class Kind { zero, quadratic, cosine_sum, gaussian_well };

    static ExternalPotential zero(int d);
    // W = c0 + g.x + 1/2 x.Hx
    static ExternalPotential quadratic(double c0, const Vec& g, const Mat& H);
    // W = sum_j kappa_j cos(k_j . x + phi_j)
    static ExternalPotential cosine_sum(const std::vector<double>& kappa,
                                        const std::vector<Vec>& k,
                                        const std::vector<double>& phi);
    // W = -depth * exp(-|x - x0|^2 / (2 sigma^2))
    static ExternalPotential gaussian_well(double depth, const Vec& x0, double sigma);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    int derivative_order_supported() const { return 4; }

    double value(const Vec& x) const;
    Vec grad(const Vec& x) const;
    Mat hess(const Vec& x) const;
    Tensor3 third(const Vec& x) const;
    Tensor4 fourth(const Vec& x) const;

    // family parameters, exposed so configs echo and serialize faithfully
    double constant() const { return c0_; }
    const Vec& linear() const { return g_; }
    const Mat& quadratic_form() const { return H_; }
    const std::vector<double>& kappa() const { return kappa_; }
    const std::vector<Vec>& wave_vectors() const { return k_; }
    const std::vector<double>& phases() const { return phi_; }
    double depth() const { return depth_; }
    double width() const { return sigma_; }
    const Vec& well_center() const { return x0_; }

  private:
    Kind kind_ = Kind::zero;
    int dim_ = 1;
    // quadratic
    double c0_ = 0.0;
    Vec g_;
    Mat H_;
    // cosine_sum
    std::vector<double> kappa_, phi_;
    std::vector<Vec> k_;
    // gaussian_well
    double depth_ = 0.0, sigma_ = 1.0;
    Vec x0_;
};

using WDerivative = std::variant<double, Vec, Mat, Tensor3, Tensor4>;

// Dispatcher over the typed accessors; order outside 0..4 raises UnsupportedOrder.
WDerivative eval_W_derivatives(const ExternalPotential& W, const Vec& x, int order);

}  // namespace bloch
