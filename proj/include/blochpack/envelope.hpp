#pragma once
// Envelope dynamics in the slow variable y. The leading envelope solves a
// quadratic (harmonic-oscillator) Schrodinger equation with time-dependent
// coefficients; Gaussians stay Gaussian under it, so both a closed form and a
// split-step grid propagator are provided, together with the driven corrector
// envelope, weighted Sobolev diagnostics, and quadrature moments.

#include <blochpack/fft.hpp>
#include <blochpack/types.hpp>

#include <functional>
#include <utility>

namespace bloch {

// t -> d x d symmetric real matrix (band Hessian along the momentum path, or
// external-potential Hessian along the position path)
using MatrixPath = std::function<Mat(double)>;

// Gaussian envelope a(y) = N [det A]^{-1/2} exp(i/2 y . B A^{-1} y). The pair
// (A, B) plays the role of a complexified Jacobi field; det_phase carries the
// continuously tracked argument of det A so the square root never jumps
// branches between steps.
struct GaussianEnvelope {
    cplx N{1.0, 0.0};
    CMat A;
    CMat B;
    double det_phase = 0.0;

    int dim() const { return static_cast<int>(A.rows()); }
};

// residuals of the two pair conditions, max-norm: A^T B - B^T A = 0 and
// conj(A)^T B - conj(B)^T A = 2iI
std::pair<double, double> symplectic_residuals(const CMat& A, const CMat& B);

// validates the pair conditions to 1e-8 and positive definiteness of
// Im(B A^{-1}); throws SymplecticViolation with both residuals otherwise
GaussianEnvelope make_gaussian(cplx N, const CMat& A0, const CMat& B0);

// Uniform periodic tensor grid on [-extent/2, extent/2)^dim holding samples of
// the leading envelope a and the corrector b.
struct EnvelopeGrid {
    int dim = 1;
    double extent = 40.0;
    int n_points = 512;
    CVec a;
    CVec b;
    double t = 0.0;

    static EnvelopeGrid make(int dim, double extent, int n_points);
    // defaults sized so Gaussian tails sit below 1e-10 at the boundary:
    // 1d 40 x 512, 2d 24 x 128 per axis
    static EnvelopeGrid standard(int dim);

    int size() const;
    double spacing() const { return extent / n_points; }
    double coord(int i) const { return -0.5 * extent + spacing() * i; }
    // angular frequency of DFT bin k (negative half mapped down)
    double frequency(int k) const;
    Vec point(int flat) const;
    double cell_volume() const;
    double l2_norm(const CVec& f) const;
};

// samples the closed-form Gaussian on the grid using the tracked branch
CVec gaussian_sample(const GaussianEnvelope& env, const EnvelopeGrid& grid);

// RK4 on A' = D2E(t) B, B' = -D2W(t) A with continuous determinant-branch
// tracking. Throws BranchDiscontinuity if det A moves by more than pi/2 in
// one step (caller must refine dt) and SymplecticDrift if the pair conditions
// degrade beyond 1e-6.
GaussianEnvelope evolve_gaussian(const GaussianEnvelope& env, const MatrixPath& hessE,
                                 const MatrixPath& hessW, double t0, double t1, double dt);

// Strang split-step for the leading envelope: half-step of the quadratic
// potential y.D2W y/2 in physical space, full kinetic step xi.D2E xi/2 in
// frequency space, half-step of the potential; coefficients frozen at the
// step midpoint. verify_step cross-checks the first step against four
// quarter steps and throws StepTooLarge on disagreement.
EnvelopeGrid evolve_a_grid(const EnvelopeGrid& grid, const MatrixPath& hessE,
                           const MatrixPath& hessW, double t0, double t1, double dt,
                           bool verify_step = true);

// Coefficient bundle of the corrector source at one instant: the cubic band
// dispersion term, the cubic external term, and the two Berry-coupling terms.
struct EnvelopeSourceCoeffs {
    Tensor3 third_E;        // D3 E at P(t), contracts three spectral derivatives
    Tensor3 third_W;        // D3 W at Q(t), contracts three position factors
    Vec momentum_coupling;  // c_g = sum_b dW_b(Q) dA_b/dp_g(P), multiplies (-i d/dy_g)
    Vec position_coupling;  // g_g = sum_b d2W_gb(Q) A_b(P), multiplies y_g
};
using SourcePath = std::function<EnvelopeSourceCoeffs(double)>;

// applies the (self-adjoint) source operator to samples of a
CVec apply_envelope_source(const EnvelopeGrid& grid, const EnvelopeSourceCoeffs& coeffs,
                           const CVec& a, FftWorkspace& fft);

// advances a and the driven corrector b together: half propagator, midpoint
// Duhamel increment -i dt S(t_mid) a(t_mid), half propagator; exactly
// preserves the pairing <b,a> + <a,b> because the source is self-adjoint
EnvelopeGrid evolve_b_grid(const EnvelopeGrid& grid, const MatrixPath& hessE,
                           const MatrixPath& hessW, const SourcePath& source, double t0,
                           double t1, double dt, bool verify_step = true);

// sum of L2 norms of y^alpha (-i d/dy)^beta f over |alpha| + |beta| <= l,
// spectral derivatives
double sigma_norm(const CVec& samples, const EnvelopeGrid& grid, int l);

// Quadrature pairings (not normalized; divide by norm_a_sq for expectations).
struct EnvelopeMoments {
    Vec mean_y;      // <a, y a>
    Vec mean_xi;     // Re <a, (-i d) a>
    Mat second_y;    // <a, y y^T a>
    Mat second_xi;   // <(-i d) a, (-i d)^T a>
    Vec mixed_y;     // <b, y a> + <a, y b>
    Vec mixed_xi;    // <b, (-i d) a> + <a, (-i d) b>
    double norm_a_sq = 0.0;
    double pairing = 0.0;       // <b, a> + <a, b>
    double imag_residue = 0.0;  // largest imaginary part discarded in mean_xi
};

EnvelopeMoments envelope_moments(const EnvelopeGrid& grid);

}  // namespace bloch
