#pragma once
// Experiment orchestration: epsilon sweeps that co-run the direct solver and
// the asymptotic reconstruction, slope fits of the corrector scaling, the
// Berry-geometry validation suite, and output emission. Sweep members run on
// a bounded worker pool; the reduction sorts on epsilon so reports never
// depend on scheduling order.

#include <blochpack/config.hpp>
#include <blochpack/dynamics.hpp>
#include <blochpack/io.hpp>

#include <string>
#include <vector>

namespace bloch {

struct CheckpointRecord {
    double t = 0.0;
    double corrector_norm = 0.0;  // ||psi - psi_tilde||, half-order ansatz
    double leading_norm = 0.0;    // same with the leading-only ansatz
    Vec Q;                        // expanded observables at this checkpoint
    Vec P;
    Vec Q_field;  // position moment of the direct field (NaN when shadowed)
    // |Q_field - Q|: NaN when the direct field has grown a boundary shadow
    // above the moment precondition (ballistic band leakage reaches the box
    // edge at late times; the moment is then not meaningful)
    double field_center_gap = 0.0;
    double expansion_dQ = 0.0;  // assembled-moment residuals of the expansion
    double expansion_dP = 0.0;
    double N_value = 0.0;
};

struct EpsilonRecord {
    double epsilon = 0.0;
    bool ok = false;
    std::string error;  // failure note; completed checkpoints are kept
    std::vector<CheckpointRecord> checkpoints;
    double norm_drift = 0.0;         // |N(t_last) - N(0)|
    double hamiltonian_drift = 0.0;  // coupled-ODE extended energy, |H(T)-H(0)|
    double symplectic_residual = 0.0;
    double gaussian_grid_gap = 0.0;  // closed-form vs grid envelope at T
    // semi-log growth rate of the corrector norm across checkpoints; the
    // error bound is exponential in t, so the rate is reported, not graded
    double eta_growth_rate = 0.0;
    double runtime_seconds = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    int points = 0;
    bool valid() const { return points >= 3; }  // fits reported from 3 values up
};

// least squares on (log x, log y); pairs with non-positive or non-finite
// entries are dropped
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

struct SweepResult {
    ExperimentConfig config;
    std::vector<TrajectoryNode> trajectory;  // leading flow, epsilon-independent
    std::vector<EpsilonRecord> records;      // ascending epsilon
    SlopeFit corrected_slope;                // log corrector at t_last vs log eps
    SlopeFit leading_slope;
    SlopeFit expansion_dQ_slope;
    SlopeFit expansion_dP_slope;
    SlopeFit field_center_slope;  // at the latest checkpoint finite for every epsilon
    double field_center_slope_time = 0.0;
    bool all_ok() const;
    const EpsilonRecord* record_for(double epsilon) const;
};

// Direct solve vs asymptotic pipeline for every configured epsilon.
// Partial results are kept on per-epsilon failure; a d = 3 config is refused
// (two-scale direct grids at d = 3 are beyond desk scale).
SweepResult run_validation(const ExperimentConfig& config);

struct GeometryCheck {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;  // measured <= bound, or >= for *_present floor checks
};

struct GeometryReport {
    std::vector<GeometryCheck> checks;
    bool all_pass() const;
};

// Berry-geometry validation: one-dimensional curvature identically zero,
// inversion-symmetric 2d curvature at the noise floor, plaquette/resolvent
// agreement on the configured Brillouin-zone grid, gauge invariance of the
// gauge-independent objects (E, curvature, leading flow), and the anomalous
// velocity contraction against its cross-product form along the trajectory.
GeometryReport run_geometry_suite(const ExperimentConfig& config);

// CSV tables, SVG plots, and manifest.json under `directory` (created if
// absent). Slope plots are emitted only when the fit is valid; an empty sweep
// still writes the manifest with the config echo.
Manifest emit_outputs(const SweepResult& result, const std::string& directory);

}  // namespace bloch
