#pragma once
// Plane-wave Galerkin Bloch bands: H(p)_{GG'} = 1/2 |p+G|^2 delta_{GG'} + vhat_{G-G'},
// band derivatives through third order, Berry connection/curvature, and the
// resolvent-based momentum derivative of the Bloch function.
//
// Normalization: chi(z) = sum_G c_G e^{iG.z} with |c|_2 = 1, i.e. unit norm in
// the cell-averaged L^2 inner product (plane waves orthonormal). This is the
// convention under which ||psi_packet|| = ||envelope|| holds without cell-volume
// factors.

#include <blochpack/lattice.hpp>

#include <memory>
#include <mutex>
#include <unordered_map>

namespace bloch {

enum class Gauge {
    reference,  // largest-|coefficient| entry rotated real positive (lexicographic tie-break)
    zero_mode,  // m = 0 coefficient rotated real positive
    parallel,   // output of transport_gauge along a path
};

struct BlochTruncation {
    LatticeSpec lattice;
    ReciprocalModes modes;
    double cutoff = 0.0;
    static BlochTruncation make(const LatticeSpec& lat, double cutoff);
    int size() const { return modes.count(); }
};

struct BlochSlice {
    Vec p;
    Vec energies;   // ascending, first n_max bands
    CMat vectors;   // modes x n_max coefficient columns, gauge-fixed
    Vec gaps;       // per band: distance to nearest other eigenvalue (full spectrum)
    Gauge gauge = Gauge::reference;
    IVec pins;  // per exposed band: coefficient index anchoring the gauge (-1 once transported)
    // full truncated-space eigendecomposition, kept for resolvent work
    Vec energies_full;
    CMat vectors_full;
    int pin_index(int n) const { return pins[n - 1]; }
};

struct BandDerivatives {
    Vec p;
    int band = 1;  // 1-based
    double E = 0.0;
    double gap = 0.0;
    Vec grad_E;
    Mat hess_E;
    Tensor3 third_E;
    Vec berry_connection;             // A_n in the requested gauge
    Mat d_connection;                 // (alpha, beta) -> d A_beta / d p_alpha
    Mat berry_curvature;              // resolvent route; exactly antisymmetric storage
    Mat berry_curvature_plaquette;    // Fukui-style loop phase, diagnostic copy
    double hess_fd_residual = 0.0;    // Richardson gap between steps h and h/2
    double hess_asymmetry = 0.0;      // pre-symmetrization residual of the FD Hessian
    double third_asymmetry = 0.0;     // pre-symmetrization permutation residual
    double connection_imag_residue = 0.0;
};

struct BandOptions {
    int band = 1;                // 1-based tracked band
    int n_max = 0;               // bands exposed by solve_bands; 0 = band + 4
    double gap_threshold = 0.05;
    double fd_step_rel = 1e-4;   // h = fd_step_rel * |b_1|, first/second derivatives
    double third_step_rel = 2e-3;  // wider stencil for the second difference of grad E
    double plaquette_step_rel = 1e-3;
    double curvature_tol = 1e-5;
    Gauge gauge = Gauge::reference;
};

CMat assemble_bloch_matrix(const PeriodicPotential& V, const BlochTruncation& trunc,
                           const Vec& p);

// Dense ascending eigensolve with gauge fixing. pin_override >= 0 forces the
// gauge anchor of band `pin_band` to a specific coefficient index (used to
// keep finite-difference stencils in one smooth local gauge).
BlochSlice solve_bands(const PeriodicPotential& V, const BlochTruncation& trunc, const Vec& p,
                       int n_max, Gauge gauge = Gauge::reference, int pin_override = -1,
                       int pin_band = 1);

// throws GapBelowThreshold when gap_n < threshold, DegenerateBand when the gap
// is consistent with an exact crossing
void require_gap(const BlochSlice& slice, int n, double threshold);

Vec grad_E_hellmann_feynman(const BlochTruncation& trunc, const BlochSlice& slice, int n);

// Full d-column momentum derivative of chi_n: perpendicular resolvent part plus
// the parallel part -i A_alpha chi fixed by the slice's gauge anchor.
// Also reports the connection it used.
struct GradChi {
    CMat d_chi;        // modes x d
    CMat d_chi_perp;   // modes x d, projector-orthogonal part
    Vec connection;    // A_n, real
    double imag_residue = 0.0;
};
GradChi grad_p_chi(const BlochTruncation& trunc, const BlochSlice& slice, int n);

BlochSlice transport_gauge(const BlochSlice& prev, const BlochSlice& next, int n);

Mat berry_curvature_resolvent(const BlochTruncation& trunc, const BlochSlice& slice, int n);
Mat berry_curvature_plaquette(const PeriodicPotential& V, const BlochTruncation& trunc,
                              const Vec& p, int n, double h);

BandDerivatives band_derivatives(const PeriodicPotential& V, const BlochTruncation& trunc,
                                 const Vec& p, const BandOptions& opt);

// Binds potential + truncation + options and memoizes derivative bundles along
// trajectories. Cache lookups are mutex-guarded; values are immutable.
class BandModel {
  public:
    BandModel(const PeriodicPotential& V, double cutoff, const BandOptions& opt);

    const LatticeSpec& lattice() const { return V_.lattice(); }
    const PeriodicPotential& potential() const { return V_; }
    const BlochTruncation& truncation() const { return trunc_; }
    const BandOptions& options() const { return opt_; }
    int band() const { return opt_.band; }
    int dim() const { return V_.lattice().dim; }

    BlochSlice slice(const Vec& p) const;  // fresh solve, gap-checked
    std::shared_ptr<const BandDerivatives> derivs(const Vec& p) const;

    double energy(const Vec& p) const { return derivs(p)->E; }
    Vec grad_E(const Vec& p) const { return derivs(p)->grad_E; }
    Mat hess_E(const Vec& p) const { return derivs(p)->hess_E; }

  private:
    PeriodicPotential V_;
    BlochTruncation trunc_;
    BandOptions opt_;
    mutable std::mutex mu_;
    mutable std::unordered_map<std::string, std::shared_ptr<const BandDerivatives>> cache_;
};

}  // namespace bloch
