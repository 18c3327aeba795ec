#pragma once
// Experiment configuration: the schema for a full run (lattice, potentials,
// band, initial data, epsilon sweep, steppers, grids, execution), JSON
// parsing with hard errors on unknown keys, validation of the physical
// ranges, and the resolved echo written into run manifests. Unknown keys are
// rejected because a silently ignored typo in an epsilon list is the most
// expensive failure mode a sweep has.

#include <blochpack/bloch.hpp>
#include <blochpack/envelope.hpp>
#include <blochpack/lattice.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bloch {

struct ExperimentConfig {
    std::string name = "custom";

    // lattice and periodic potential
    int dim = 1;
    Mat lattice_generators;  // columns are the direct generators
    std::vector<std::pair<IVec, cplx>> v_coefficients;
    double cutoff = 8.0;

    // external potential
    ExternalPotential external = ExternalPotential::zero(1);

    // tracked band
    int band = 1;
    double gap_threshold = 0.05;
    Gauge gauge = Gauge::reference;

    // initial data: phase-space point plus a symplectic Gaussian pair; the
    // prefactor is always chosen to normalize the envelope
    Vec q0, p0;
    CMat A0, B0;

    // sweep
    std::vector<double> epsilon;
    double horizon = 1.0;
    double ehrenfest_factor = 1.0;  // horizon cap: factor * ln(1 / eps_min)
    std::vector<double> checkpoints{0.25, 0.5, 1.0};

    // steppers and direct-solve grids; the field step is epsilon / field_dt_factor,
    // grid_points is parallel to epsilon (or a single broadcast entry)
    double ode_dt = 1e-3;
    double envelope_dt = 1e-3;
    double field_dt_factor = 400.0;
    std::vector<int> grid_points;
    Vec box_length, box_center;

    // geometry suite
    int geometry_grid = 32;  // per-axis Brillouin-zone sampling

    // execution
    int workers = 0;  // 0 = hardware concurrency
    std::string out_dir = "out";
    unsigned long seed = 0;  // reserved for synthetic-geometry checks

    LatticeSpec lattice() const;
    PeriodicPotential potential() const;
    GaussianEnvelope envelope() const;
    BandOptions band_options() const;
    int points_for(std::size_t eps_index) const;
    double eps_min() const;
};

// JSON text -> config; a top-level "scenario" key seeds the named scenario
// and the remaining keys override it. Throws ConfigError with the offending
// key path on unknown keys or type mismatches. The parsed config is validated.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// range and consistency checks; throws ConfigError
void validate_config(const ExperimentConfig& c);

// full resolved echo (defaults filled), stable key order, parseable by
// parse_config_text; embedded in every run manifest
std::string resolved_config_json(const ExperimentConfig& c);

// built-in scenarios: "free", "mathieu-1d", "asym-2d"
ExperimentConfig named_scenario(const std::string& name);
std::vector<std::string> scenario_names();

// CLI argument: an existing file path is loaded, otherwise a scenario name
ExperimentConfig resolve_config_argument(const std::string& arg);

struct ConfigOverrides {
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<double> dt;  // ODE and envelope steps
    std::optional<std::vector<double>> epsilon;
};

void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o);

}  // namespace bloch
