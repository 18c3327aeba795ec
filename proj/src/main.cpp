// Command-line driver: epsilon-sweep validation against the direct solver,
// asymptotic-only simulation, the Berry-geometry suite, and band-structure
// dumps. Exit code 0 means every configured check passed.

#include <blochpack/errors.hpp>
#include <blochpack/harness.hpp>
#include <blochpack/observables.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace {

using namespace bloch;

void print_sweep(const SweepResult& r) {
    for (const auto& rec : r.records) {
        if (!rec.ok) {
            std::printf("eps %-10.6g FAILED: %s\n", rec.epsilon, rec.error.c_str());
            continue;
        }
        const auto& cp = rec.checkpoints.back();
        std::printf("eps %-10.6g t %-5.3g corrector %-12.6g leading %-12.6g "
                    "H-drift %-10.3g N-drift %-10.3g (%.1fs)\n",
                    rec.epsilon, cp.t, cp.corrector_norm, cp.leading_norm,
                    rec.hamiltonian_drift, rec.norm_drift, rec.runtime_seconds);
    }
    if (r.corrected_slope.valid())
        std::printf("corrected slope %.4f +- %.4f, leading slope %.4f +- %.4f\n",
                    r.corrected_slope.slope, r.corrected_slope.stderr_slope,
                    r.leading_slope.slope, r.leading_slope.stderr_slope);
    else
        std::printf("slopes not fitted (%d usable epsilon values, need 3)\n",
                    r.corrected_slope.points);
}

int run_sweep_command(ExperimentConfig config, bool with_direct_solve) {
    if (!with_direct_solve) config.grid_points.clear();
    const SweepResult r = run_validation(config);
    print_sweep(r);
    const Manifest m = emit_outputs(r, config.out_dir);
    std::printf("wrote %zu files to %s\n", m.files.size(), config.out_dir.c_str());
    return r.all_ok() ? 0 : 1;
}

int run_geometry_command(const ExperimentConfig& config) {
    const GeometryReport rep = run_geometry_suite(config);
    for (const auto& c : rep.checks)
        std::printf("[%s] %-38s measured %-12.4e bound %-10.1e\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.measured, c.bound);
    return rep.all_pass() ? 0 : 1;
}

int run_bands_command(const ExperimentConfig& config) {
    validate_config(config);
    BandModel model(config.potential(), config.cutoff, config.band_options());
    const LatticeSpec& lat = model.lattice();
    const int n = std::max(4, config.geometry_grid);
    const int shown = config.band + 4;

    CsvTable t;
    for (int a = 0; a < config.dim; ++a) t.header.push_back("p" + std::to_string(a));
    for (int b = 1; b <= shown; ++b) t.header.push_back("E" + std::to_string(b));
    t.header.push_back("gap");
    for (int a = 0; a < config.dim; ++a) t.header.push_back("A" + std::to_string(a));
    if (config.dim >= 2) t.header.push_back("F01");

    std::vector<Vec> fracs;
    if (config.dim == 1) {
        for (int i = 0; i < n; ++i)
            fracs.push_back(lat.dual.col(0) * ((i + 0.5) / n - 0.5));
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                fracs.push_back(lat.dual.col(0) * ((i + 0.5) / n - 0.5) +
                                lat.dual.col(1) * ((j + 0.5) / n - 0.5));
    }
    for (const Vec& p : fracs) {
        const auto d = model.derivs(p);
        const BlochSlice slice = model.slice(p);
        std::vector<double> row;
        for (int a = 0; a < config.dim; ++a) row.push_back(p[a]);
        for (int b = 0; b < shown; ++b) row.push_back(slice.energies[b]);
        row.push_back(d->gap);
        for (int a = 0; a < config.dim; ++a) row.push_back(d->berry_connection[a]);
        if (config.dim >= 2) row.push_back(d->berry_curvature(0, 1));
        t.rows.push_back(std::move(row));
    }

    std::filesystem::create_directories(config.out_dir);
    write_csv(config.out_dir + "/bands.csv", t);
    Manifest m;
    m.config_echo = resolved_config_json(config);
    ManifestEntry e;
    e.path = "bands.csv";
    e.note = "band energies, gaps, and geometry over the Brillouin zone";
    m.files.push_back(e);
    write_manifest(config.out_dir, m);
    std::printf("wrote %s/bands.csv (%zu points)\n", config.out_dir.c_str(), t.rows.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semiclassical wavepacket dynamics on Bloch bands"};
    app.require_subcommand(1);

    std::string config_arg;
    std::string out_dir;
    int workers = -1;
    double dt = 0.0;
    std::vector<double> eps_list;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_arg,
                        "config file path or built-in scenario (free, mathieu-1d, asym-2d)")
            ->required();
        sub->add_option("--out", out_dir, "output directory override");
        sub->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");
        sub->add_option("--dt", dt, "override the ODE and envelope step sizes");
        sub->add_option("--eps", eps_list, "comma-separated epsilon list override")
            ->delimiter(',');
        return sub;
    };

    CLI::App* validate = add_common(
        app.add_subcommand("validate", "co-run the direct solver and the asymptotic pipeline"));
    CLI::App* simulate = add_common(
        app.add_subcommand("simulate", "run the asymptotic pipeline without the direct solver"));
    CLI::App* geometry =
        add_common(app.add_subcommand("geometry", "run the Berry-geometry validation suite"));
    CLI::App* bands =
        add_common(app.add_subcommand("bands", "dump band structure over the Brillouin zone"));

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig config = bloch::resolve_config_argument(config_arg);
        bloch::ConfigOverrides o;
        if (!out_dir.empty()) o.out_dir = out_dir;
        if (workers >= 0) o.workers = workers;
        if (dt > 0.0) o.dt = dt;
        if (!eps_list.empty()) o.epsilon = eps_list;
        bloch::apply_overrides(config, o);

        if (validate->parsed()) return run_sweep_command(config, true);
        if (simulate->parsed()) return run_sweep_command(config, false);
        if (geometry->parsed()) return run_geometry_command(config);
        if (bands->parsed()) return run_bands_command(config);
    } catch (const bloch::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
