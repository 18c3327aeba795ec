#include <blochpack/harness.hpp>

#include <blochpack/errors.hpp>
#include <blochpack/observables.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <thread>

namespace bloch {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Coefficient paths along the interpolated leading flow. The corrector source
// couples the envelope to the Berry geometry: the gradient of W contracts the
// momentum derivative of the connection into a first-order spectral term, the
// Hessian of W contracts the connection itself into a linear position term.
struct FlowPaths {
    MatrixPath hessE;
    MatrixPath hessW;
    SourcePath source;
};

FlowPaths make_flow_paths(std::shared_ptr<BandModel> model, ExternalPotential W,
                          std::shared_ptr<const LeadingTrajectory> traj) {
    FlowPaths f;
    f.hessE = [model, traj](double t) { return model->hess_E(traj->p_at(t)); };
    f.hessW = [W, traj](double t) { return W.hess(traj->q_at(t)); };
    f.source = [model, W, traj](double t) {
        const Vec q = traj->q_at(t);
        const Vec p = traj->p_at(t);
        const auto d = model->derivs(p);
        const Vec gw = W.grad(q);
        const Mat hw = W.hess(q);
        const int dim = model->dim();
        EnvelopeSourceCoeffs c;
        c.third_E = d->third_E;
        c.third_W = W.third(q);
        c.momentum_coupling = Vec::Zero(dim);
        c.position_coupling = Vec::Zero(dim);
        for (int g = 0; g < dim; ++g) {
            for (int b = 0; b < dim; ++b) {
                c.momentum_coupling[g] += gw[b] * d->d_connection(g, b);
                c.position_coupling[g] += hw(g, b) * d->berry_connection[b];
            }
        }
        return c;
    };
    return f;
}

// One sweep member: invariants of the coupled flow at the horizon, the
// closed-form/grid envelope cross-check, and the checkpointed comparison of
// the direct solve against the reconstructed ansatz.
EpsilonRecord run_epsilon(const ExperimentConfig& config, const std::shared_ptr<BandModel>& model,
                          const CoupledSystem& sys, const LeadingTrajectory& traj,
                          const FlowPaths& paths, double eps, int n_points) {
    EpsilonRecord rec;
    rec.epsilon = eps;
    const auto wall0 = std::chrono::steady_clock::now();
    try {
        const GaussianEnvelope env0 = config.envelope();

        // canonical coupled flow: extended energy and pair-condition residuals
        {
            ParticleFieldState st = sys.initial_state(config.q0, config.p0, eps, env0);
            const double H0 = sys.hamiltonian_value(st, EnvelopeMode::gaussian).sum();
            const long n = std::max<long>(1, std::lround(config.horizon / config.ode_dt));
            const double h = config.horizon / static_cast<double>(n);
            for (long i = 0; i < n; ++i) st = sys.step_coupled(st, h, EnvelopeMode::gaussian);
            rec.hamiltonian_drift =
                std::abs(sys.hamiltonian_value(st, EnvelopeMode::gaussian).sum() - H0);
            rec.symplectic_residual = sys.symplectic_residual(st);
        }

        const bool with_field = n_points > 0 && config.box_length.size() == config.dim;

        // The corrector grid is periodic in y and the reconstruction samples
        // it across the whole field box, so its extent must cover the box
        // image (x - q(t)) / sqrt(eps) at every checkpoint; otherwise the
        // trigonometric interpolation wraps tails of b back into the box.
        EnvelopeGrid grid0 = EnvelopeGrid::standard(config.dim);
        if (with_field) {
            double drift = 0.0;
            for (const auto& node : traj.nodes())
                drift = std::max(drift, (node.q - config.box_center).cwiseAbs().maxCoeff());
            const double span =
                (config.box_length.maxCoeff() + 2.0 * drift) / std::sqrt(eps) + 8.0;
            const double spacing = grid0.spacing();
            int n = grid0.n_points;
            while (n * spacing < span) n *= 2;
            if (n != grid0.n_points) grid0 = EnvelopeGrid::make(config.dim, n * spacing, n);
        }
        grid0.a = gaussian_sample(env0, grid0);
        grid0.b = CVec::Zero(grid0.size());

        // leading envelope: closed-form Gaussian against the split-step grid
        {
            const GaussianEnvelope envT = evolve_gaussian(env0, paths.hessE, paths.hessW, 0.0,
                                                          config.horizon, config.envelope_dt);
            const EnvelopeGrid gT = evolve_a_grid(grid0, paths.hessE, paths.hessW, 0.0,
                                                  config.horizon, config.envelope_dt);
            rec.gaussian_grid_gap = gT.l2_norm(CVec(gaussian_sample(envT, gT) - gT.a));
        }

        FieldGridSpec spec;
        std::optional<WaveField> psi;
        const PeriodicPotential V = config.potential();
        const ExternalPotential& W = sys.external();
        if (with_field) {
            spec = FieldGridSpec{config.box_length, config.box_center, n_points};
            psi = assemble_initial_data(*model, config.q0, config.p0, env0, grid0, eps, spec);
        }

        const PacketState state0{0.0, config.q0, config.p0, 0.0, 0.0};
        const double N0 = observables_from_ansatz(state0, grid0, *model, eps).N;

        GaussianEnvelope env_t = env0;
        EnvelopeGrid bgrid = grid0;
        double t_prev = 0.0;
        for (double tk : config.checkpoints) {
            env_t = evolve_gaussian(env_t, paths.hessE, paths.hessW, t_prev, tk,
                                    config.envelope_dt);
            bgrid = evolve_b_grid(bgrid, paths.hessE, paths.hessW, paths.source, t_prev, tk,
                                  config.envelope_dt);
            if (with_field) *psi = propagate(*psi, V, W, tk, eps / config.field_dt_factor);

            const PacketState st{tk, traj.q_at(tk), traj.p_at(tk), traj.S_at(tk),
                                 traj.phi_at(tk)};
            CheckpointRecord cp;
            cp.t = tk;
            const PacketObservables obs = observables_from_ansatz(st, bgrid, *model, eps);
            cp.N_value = obs.N;
            cp.Q = obs.Q;
            cp.P = obs.P;
            cp.Q_field = Vec::Constant(config.dim, kNan);
            if (with_field) {
                const WaveField tilde = assemble_asymptotic(*model, st, env_t, bgrid, eps, spec);
                cp.corrector_norm = corrector_norm(*psi, tilde);
                AnsatzOptions lead_opt;
                lead_opt.leading_only = true;
                const WaveField lead = assemble_asymptotic(*model, st, env_t, std::nullopt, eps,
                                                           spec, lead_opt);
                cp.leading_norm = corrector_norm(*psi, lead);
                // the position moment is meaningful only while the direct
                // field stays clear of the box edge; late-time band leakage
                // reaches the boundary ballistically and is recorded as NaN
                if (psi->boundary_shadow() <= 1e-8) {
                    cp.Q_field = position_from_field(*psi);
                    cp.field_center_gap = (cp.Q_field - obs.Q).norm();
                } else {
                    cp.field_center_gap = kNan;
                }
                const ExpansionResiduals er =
                    expansion_residuals(*model, st, env_t, bgrid, eps, spec);
                cp.expansion_dQ = er.dQ.norm();
                cp.expansion_dP = er.dP.norm();
            } else {
                cp.corrector_norm = kNan;
                cp.leading_norm = kNan;
                cp.field_center_gap = kNan;
                cp.expansion_dQ = kNan;
                cp.expansion_dP = kNan;
            }
            rec.checkpoints.push_back(cp);
            t_prev = tk;
        }
        rec.norm_drift = std::abs(rec.checkpoints.back().N_value - N0);

        // reported exponential rate: least squares of log ||eta|| against t
        {
            double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
            int n = 0;
            for (const auto& cp : rec.checkpoints) {
                if (!(cp.corrector_norm > 0.0) || !std::isfinite(cp.corrector_norm)) continue;
                const double ly = std::log(cp.corrector_norm);
                st += cp.t;
                sy += ly;
                stt += cp.t * cp.t;
                sty += cp.t * ly;
                ++n;
            }
            const double denom = n * stt - st * st;
            rec.eta_growth_rate = (n >= 2 && denom > 0.0) ? (n * sty - st * sy) / denom : kNan;
        }
        rec.ok = true;
    } catch (const Error& e) {
        rec.error = e.what();
    } catch (const std::exception& e) {
        rec.error = e.what();
    }
    rec.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    return rec;
}

// value of a per-epsilon series at checkpoint index k, NaN when missing
double checkpoint_value(const EpsilonRecord& rec, std::size_t k,
                        double CheckpointRecord::* field) {
    if (k >= rec.checkpoints.size()) return kNan;
    return rec.checkpoints[k].*field;
}

SlopeFit fit_at_checkpoint(const std::vector<EpsilonRecord>& records, std::size_t k,
                           double CheckpointRecord::* field) {
    std::vector<double> x, y;
    for (const auto& rec : records) {
        x.push_back(rec.epsilon);
        y.push_back(checkpoint_value(rec, k, field));
    }
    return fit_loglog(x, y);
}

}  // namespace

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    SlopeFit fit;
    std::vector<double> lx, ly;
    const std::size_t n = std::min(x.size(), y.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) continue;
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    fit.points = static_cast<int>(lx.size());
    if (lx.size() < 2) return fit;
    const double m = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx <= 0.0) {
        fit.points = 0;
        return fit;
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (lx.size() > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
            ssr += r * r;
        }
        fit.stderr_slope = std::sqrt(ssr / (m - 2.0) / sxx);
    }
    return fit;
}

bool SweepResult::all_ok() const {
    if (records.empty()) return false;
    return std::all_of(records.begin(), records.end(),
                       [](const EpsilonRecord& r) { return r.ok; });
}

const EpsilonRecord* SweepResult::record_for(double epsilon) const {
    for (const auto& r : records)
        if (std::abs(r.epsilon - epsilon) <= 1e-12 * std::max(1.0, epsilon)) return &r;
    return nullptr;
}

SweepResult run_validation(const ExperimentConfig& config) {
    validate_config(config);
    if (config.dim >= 3)
        throw ConfigError("validation sweeps are limited to one and two dimensions; the "
                          "direct two-scale grid at d = 3 is beyond desk scale");

    SweepResult result;
    result.config = config;

    auto model = std::make_shared<BandModel>(config.potential(), config.cutoff,
                                             config.band_options());
    const CoupledSystem sys(model, config.external);
    auto traj = std::make_shared<const LeadingTrajectory>(sys, config.q0, config.p0, 0.0,
                                                          config.horizon, config.ode_dt);
    result.trajectory = traj->nodes();
    if (config.epsilon.empty()) return result;

    const FlowPaths paths = make_flow_paths(model, config.external, traj);

    // epsilon jobs paired with their direct-solve grids, then sorted so the
    // reduction (and every emitted table) is independent of scheduling
    std::vector<std::pair<double, int>> jobs;
    for (std::size_t i = 0; i < config.epsilon.size(); ++i)
        jobs.emplace_back(config.epsilon[i], config.points_for(i));
    std::sort(jobs.begin(), jobs.end());

    result.records.resize(jobs.size());
    unsigned n_workers = config.workers > 0 ? static_cast<unsigned>(config.workers)
                                            : std::thread::hardware_concurrency();
    n_workers = std::clamp<unsigned>(n_workers, 1u, static_cast<unsigned>(jobs.size()));

    std::atomic<std::size_t> next{0};
    auto drain = [&]() {
        for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
            result.records[i] = run_epsilon(config, model, sys, *traj, paths, jobs[i].first,
                                            jobs[i].second);
    };
    if (n_workers <= 1) {
        drain();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(drain);
        for (auto& th : pool) th.join();
    }

    const std::size_t last = config.checkpoints.size() - 1;
    result.corrected_slope = fit_at_checkpoint(result.records, last,
                                               &CheckpointRecord::corrector_norm);
    result.leading_slope = fit_at_checkpoint(result.records, last,
                                             &CheckpointRecord::leading_norm);
    result.expansion_dQ_slope = fit_at_checkpoint(result.records, last,
                                                  &CheckpointRecord::expansion_dQ);
    result.expansion_dP_slope = fit_at_checkpoint(result.records, last,
                                                  &CheckpointRecord::expansion_dP);

    // field-center slope at the latest checkpoint where the moment exists for
    // every epsilon (late checkpoints lose it to the boundary shadow first)
    for (std::size_t k = config.checkpoints.size(); k-- > 0;) {
        const bool all_finite = std::all_of(
            result.records.begin(), result.records.end(), [&](const EpsilonRecord& r) {
                return std::isfinite(checkpoint_value(r, k, &CheckpointRecord::field_center_gap));
            });
        if (!all_finite) continue;
        result.field_center_slope =
            fit_at_checkpoint(result.records, k, &CheckpointRecord::field_center_gap);
        result.field_center_slope_time = config.checkpoints[k];
        break;
    }
    return result;
}

bool GeometryReport::all_pass() const {
    if (checks.empty()) return false;
    return std::all_of(checks.begin(), checks.end(),
                       [](const GeometryCheck& c) { return c.pass; });
}

namespace {

// fractional Brillouin-zone grid mapped through the dual generators
std::vector<Vec> bz_grid(const LatticeSpec& lat, int n_per_axis) {
    std::vector<Vec> pts;
    if (lat.dim == 1) {
        for (int i = 0; i < n_per_axis; ++i) {
            const double u = (i + 0.5) / n_per_axis - 0.5;
            pts.push_back(lat.dual.col(0) * u);
        }
    } else {
        for (int i = 0; i < n_per_axis; ++i) {
            for (int j = 0; j < n_per_axis; ++j) {
                const double u = (i + 0.5) / n_per_axis - 0.5;
                const double v = (j + 0.5) / n_per_axis - 0.5;
                pts.push_back(lat.dual.col(0) * u + lat.dual.col(1) * v);
            }
        }
    }
    return pts;
}

GeometryCheck bound_check(std::string name, double measured, double bound) {
    GeometryCheck c;
    c.name = std::move(name);
    c.measured = measured;
    c.bound = bound;
    c.pass = measured <= bound;
    return c;
}

GeometryCheck floor_check(std::string name, double measured, double floor) {
    GeometryCheck c;
    c.name = std::move(name);
    c.measured = measured;
    c.bound = floor;
    c.pass = measured >= floor;
    return c;
}

}  // namespace

GeometryReport run_geometry_suite(const ExperimentConfig& config) {
    GeometryReport report;
    const int n_grid = std::max(4, config.geometry_grid);

    // one-dimensional curvature vanishes identically; evaluated on the
    // config's own model when it is one-dimensional, else on a cosine band
    {
        PeriodicPotential v1;
        BandOptions opt1;
        if (config.dim == 1) {
            v1 = config.potential();
            opt1 = config.band_options();
        } else {
            v1 = PeriodicPotential::single_cosine(LatticeSpec::cubic(1, 2.0 * kPi), 2.0);
            opt1.band = 1;
        }
        const double cut1 = config.dim == 1 ? config.cutoff : 8.0;
        BandModel m1(v1, cut1, opt1);
        double worst = 0.0;
        for (const Vec& p : bz_grid(v1.lattice(), n_grid)) {
            const auto d = m1.derivs(p);
            worst = std::max(worst, d->berry_curvature.cwiseAbs().maxCoeff());
        }
        report.checks.push_back(bound_check("curvature_d1_zero", worst, 1e-12));
    }

    // inversion-symmetric real potential in 2d: curvature at the noise floor
    {
        const LatticeSpec lat = LatticeSpec::cubic(2, 2.0 * kPi);
        std::vector<std::pair<IVec, cplx>> coeff;
        auto push = [&](int a, int b, cplx v) {
            IVec m(2);
            m << a, b;
            coeff.emplace_back(m, v);
        };
        push(1, 0, 0.3);
        push(-1, 0, 0.3);
        push(0, 1, 0.3);
        push(0, -1, 0.3);
        push(1, 1, 0.15);
        push(-1, -1, 0.15);
        BandOptions opt;
        opt.band = 1;
        BandModel ms(PeriodicPotential(lat, coeff), 4.0, opt);
        double worst = 0.0;
        for (const Vec& p : bz_grid(lat, n_grid)) {
            const auto d = ms.derivs(p);
            worst = std::max(worst, std::abs(d->berry_curvature(0, 1)));
        }
        report.checks.push_back(bound_check("curvature_2d_symmetric", worst, 1e-8));
    }

    // chiral 2d model: the config itself when two-dimensional, else the
    // built-in asymmetric scenario, always at the configured grid resolution
    ExperimentConfig g2 = config.dim == 2 ? config : named_scenario("asym-2d");
    g2.geometry_grid = config.geometry_grid;
    const PeriodicPotential v2 = g2.potential();
    BandModel m_ref(v2, g2.cutoff, g2.band_options());
    BandOptions opt_zm = g2.band_options();
    opt_zm.gauge = Gauge::zero_mode;
    BandModel m_zm(v2, g2.cutoff, opt_zm);
    const auto pts = bz_grid(v2.lattice(), n_grid);

    // plaquette holonomy against the resolvent contraction, sup-relative
    {
        const BlochTruncation trunc = m_ref.truncation();
        double worst_gap = 0.0, scale = 0.0;
        for (const Vec& p : pts) {
            const BlochSlice slice = solve_bands(v2, trunc, p, g2.band + 4,
                                                 g2.band_options().gauge);
            const Mat fr = berry_curvature_resolvent(trunc, slice, g2.band);
            const Mat fp = berry_curvature_plaquette(v2, trunc, p, g2.band,
                                                     1e-3 * v2.lattice().dual.col(0).norm());
            worst_gap = std::max(worst_gap, (fp - fr).cwiseAbs().maxCoeff());
            scale = std::max(scale, fr.cwiseAbs().maxCoeff());
        }
        report.checks.push_back(
            bound_check("curvature_route_agreement", worst_gap / std::max(scale, 1e-300), 1e-5));
    }

    // gauge invariance of energies and curvature across reference/zero-mode
    {
        double worst_E = 0.0, worst_F = 0.0;
        for (const Vec& p : pts) {
            const auto dr = m_ref.derivs(p);
            const auto dz = m_zm.derivs(p);
            worst_E = std::max(worst_E, std::abs(dr->E - dz->E));
            worst_F = std::max(worst_F,
                               (dr->berry_curvature - dz->berry_curvature).cwiseAbs().maxCoeff());
        }
        report.checks.push_back(bound_check("gauge_invariance_energy", worst_E, 1e-10));
        report.checks.push_back(bound_check("gauge_invariance_curvature", worst_F, 1e-10));
    }

    // the leading flow is driven by E and W alone, so it cannot see the gauge
    {
        auto sm_ref = std::make_shared<BandModel>(v2, g2.cutoff, g2.band_options());
        auto sm_zm = std::make_shared<BandModel>(v2, g2.cutoff, opt_zm);
        const CoupledSystem sys_ref(sm_ref, g2.external);
        const CoupledSystem sys_zm(sm_zm, g2.external);
        // the identity is checked node by node, so a coarse step suffices
        const double dt = std::max(g2.ode_dt, 1e-2);
        const LeadingTrajectory tr_ref(sys_ref, g2.q0, g2.p0, 0.0, g2.horizon, dt);
        const LeadingTrajectory tr_zm(sys_zm, g2.q0, g2.p0, 0.0, g2.horizon, dt);
        double worst = 0.0;
        for (std::size_t i = 0; i < tr_ref.nodes().size(); ++i) {
            const auto& a = tr_ref.nodes()[i];
            const auto& b = tr_zm.nodes()[i];
            worst = std::max({worst, (a.q - b.q).cwiseAbs().maxCoeff(),
                              (a.p - b.p).cwiseAbs().maxCoeff(), std::abs(a.S - b.S)});
        }
        report.checks.push_back(bound_check("gauge_invariance_leading_trajectory", worst, 1e-10));

        // anomalous velocity: index contraction against the cross-product
        // form after embedding the planar curvature in three dimensions, and
        // a floor on the accumulated drift so the check cannot pass vacuously
        double worst_form = 0.0, drift = 0.0;
        const auto& nodes = tr_ref.nodes();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const auto d = sm_ref->derivs(nodes[i].p);
            const Vec v2d = anomalous_velocity(nodes[i].p, nodes[i].p_dot, d->berry_curvature);
            Eigen::Vector3d pd3 = Eigen::Vector3d::Zero();
            pd3.head<2>() = nodes[i].p_dot;
            Eigen::Vector3d omega(0.0, 0.0, d->berry_curvature(0, 1));
            const Eigen::Vector3d v3d = -pd3.cross(omega);
            worst_form = std::max({worst_form, std::abs(v2d[0] - v3d[0]),
                                   std::abs(v2d[1] - v3d[1]), std::abs(v3d[2])});
            if (i + 1 < nodes.size())
                drift += v2d.norm() * (nodes[i + 1].t - nodes[i].t);
        }
        report.checks.push_back(bound_check("anomalous_form_agreement", worst_form, 1e-13));
        report.checks.push_back(floor_check("anomalous_drift_present", drift, 1e-5));
    }

    return report;
}

namespace {

void push_metric_if_valid(Manifest& m, const std::string& name, const SlopeFit& fit) {
    if (fit.valid()) m.metrics.emplace_back(name, fit.slope);
}

std::vector<PlotSeries> series_at_last(const SweepResult& result, std::size_t k,
                                       std::initializer_list<std::pair<const char*,
                                           double CheckpointRecord::*>> picks) {
    std::vector<PlotSeries> out;
    for (const auto& [label, field] : picks) {
        PlotSeries s;
        s.label = label;
        for (const auto& rec : result.records) {
            const double v = checkpoint_value(rec, k, field);
            if (!std::isfinite(v)) continue;
            s.x.push_back(rec.epsilon);
            s.y.push_back(v);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

Manifest emit_outputs(const SweepResult& result, const std::string& directory) {
    std::filesystem::create_directories(directory);
    Manifest m;
    m.config_echo = resolved_config_json(result.config);
    auto add_file = [&m](const std::string& name, const std::string& note = "") {
        ManifestEntry e;
        e.path = name;
        e.note = note;
        m.files.push_back(e);
    };

    const int dim = result.config.dim;
    // an empty sweep leaves only the manifest with the config echo
    if (!result.records.empty() && !result.trajectory.empty()) {
        CsvTable t;
        t.header = {"t"};
        for (int a = 0; a < dim; ++a) t.header.push_back("q" + std::to_string(a));
        for (int a = 0; a < dim; ++a) t.header.push_back("p" + std::to_string(a));
        t.header.push_back("S");
        t.header.push_back("phi_B");
        for (const auto& n : result.trajectory) {
            std::vector<double> row{n.t};
            for (int a = 0; a < dim; ++a) row.push_back(n.q[a]);
            for (int a = 0; a < dim; ++a) row.push_back(n.p[a]);
            row.push_back(n.S);
            row.push_back(n.phi_B);
            t.rows.push_back(std::move(row));
        }
        write_csv(directory + "/trajectory.csv", t);
        add_file("trajectory.csv", "leading classical flow");

        PlotSpec spec;
        spec.title = "leading trajectory";
        spec.x_label = "t";
        spec.y_label = "phase-space coordinates";
        for (int a = 0; a < dim; ++a) {
            PlotSeries q{"q" + std::to_string(a), {}, {}};
            PlotSeries p{"p" + std::to_string(a), {}, {}};
            for (const auto& n : result.trajectory) {
                q.x.push_back(n.t);
                q.y.push_back(n.q[a]);
                p.x.push_back(n.t);
                p.y.push_back(n.p[a]);
            }
            spec.series.push_back(std::move(q));
            spec.series.push_back(std::move(p));
        }
        write_svg_plot(directory + "/trajectory.svg", spec);
        add_file("trajectory.svg");
    }

    if (!result.records.empty()) {
        const std::size_t last = result.config.checkpoints.size() - 1;

        CsvTable err;
        err.header = {"epsilon",      "corrector_norm",   "leading_norm", "expansion_dQ",
                      "expansion_dP", "field_center_gap", "growth_rate"};
        for (const auto& rec : result.records)
            err.rows.push_back({rec.epsilon,
                                checkpoint_value(rec, last, &CheckpointRecord::corrector_norm),
                                checkpoint_value(rec, last, &CheckpointRecord::leading_norm),
                                checkpoint_value(rec, last, &CheckpointRecord::expansion_dQ),
                                checkpoint_value(rec, last, &CheckpointRecord::expansion_dP),
                                checkpoint_value(rec, last, &CheckpointRecord::field_center_gap),
                                rec.eta_growth_rate});
        write_csv(directory + "/error_vs_epsilon.csv", err);
        add_file("error_vs_epsilon.csv", "final-checkpoint comparison norms");

        CsvTable ob;
        ob.header = {"epsilon", "t"};
        for (int a = 0; a < dim; ++a) ob.header.push_back("Q" + std::to_string(a));
        for (int a = 0; a < dim; ++a) ob.header.push_back("P" + std::to_string(a));
        for (int a = 0; a < dim; ++a) ob.header.push_back("Qfield" + std::to_string(a));
        ob.header.insert(ob.header.end(), {"N", "expansion_dQ", "expansion_dP"});
        for (const auto& rec : result.records)
            for (const auto& cp : rec.checkpoints) {
                std::vector<double> row{rec.epsilon, cp.t};
                for (int a = 0; a < dim; ++a) row.push_back(cp.Q.size() == dim ? cp.Q[a] : kNan);
                for (int a = 0; a < dim; ++a) row.push_back(cp.P.size() == dim ? cp.P[a] : kNan);
                for (int a = 0; a < dim; ++a)
                    row.push_back(cp.Q_field.size() == dim ? cp.Q_field[a] : kNan);
                row.insert(row.end(), {cp.N_value, cp.expansion_dQ, cp.expansion_dP});
                ob.rows.push_back(std::move(row));
            }
        write_csv(directory + "/observables.csv", ob);
        add_file("observables.csv", "expanded and field-moment observables per checkpoint");

        // wall-clock runtimes stay out of the table so identical runs emit
        // byte-identical files
        CsvTable inv;
        inv.header = {"epsilon", "norm_drift", "hamiltonian_drift", "symplectic_residual",
                      "gaussian_grid_gap", "ok"};
        for (const auto& rec : result.records)
            inv.rows.push_back({rec.epsilon, rec.norm_drift, rec.hamiltonian_drift,
                                rec.symplectic_residual, rec.gaussian_grid_gap,
                                rec.ok ? 1.0 : 0.0});
        write_csv(directory + "/invariants.csv", inv);
        add_file("invariants.csv", "conservation diagnostics at the horizon");

        CsvTable cps;
        cps.header = {"epsilon",      "t",          "corrector_norm",   "leading_norm",
                      "expansion_dQ", "expansion_dP", "field_center_gap", "N"};
        for (const auto& rec : result.records)
            for (const auto& cp : rec.checkpoints)
                cps.rows.push_back({rec.epsilon, cp.t, cp.corrector_norm, cp.leading_norm,
                                    cp.expansion_dQ, cp.expansion_dP, cp.field_center_gap,
                                    cp.N_value});
        write_csv(directory + "/checkpoints.csv", cps);
        add_file("checkpoints.csv", "per-checkpoint comparison record");

        {
            PlotSpec spec;
            spec.title = "invariant drifts at the horizon";
            spec.x_label = "epsilon";
            spec.y_label = "absolute drift";
            spec.log_x = true;
            spec.log_y = true;
            PlotSeries hd{"hamiltonian", {}, {}};
            PlotSeries nd{"norm", {}, {}};
            PlotSeries sp{"symplectic pair", {}, {}};
            PlotSeries gg{"gaussian vs grid", {}, {}};
            for (const auto& rec : result.records) {
                hd.x.push_back(rec.epsilon);
                hd.y.push_back(rec.hamiltonian_drift);
                nd.x.push_back(rec.epsilon);
                nd.y.push_back(rec.norm_drift);
                sp.x.push_back(rec.epsilon);
                sp.y.push_back(rec.symplectic_residual);
                gg.x.push_back(rec.epsilon);
                gg.y.push_back(rec.gaussian_grid_gap);
            }
            spec.series = {hd, nd, sp, gg};
            write_svg_plot(directory + "/invariants.svg", spec);
            add_file("invariants.svg");
        }

        if (result.corrected_slope.valid()) {
            PlotSpec spec;
            spec.title = "ansatz error vs epsilon";
            spec.x_label = "epsilon";
            spec.y_label = "L2 error at final checkpoint";
            spec.log_x = true;
            spec.log_y = true;
            spec.series = series_at_last(result, last,
                                         {{"corrected", &CheckpointRecord::corrector_norm},
                                          {"leading", &CheckpointRecord::leading_norm}});
            spec.annotation = "corrected slope " + format_double(result.corrected_slope.slope) +
                              ", leading slope " + format_double(result.leading_slope.slope);
            write_svg_plot(directory + "/corrector_scaling.svg", spec);
            add_file("corrector_scaling.svg");
        }
        if (result.expansion_dQ_slope.valid()) {
            PlotSpec spec;
            spec.title = "observable expansion residuals vs epsilon";
            spec.x_label = "epsilon";
            spec.y_label = "residual at final checkpoint";
            spec.log_x = true;
            spec.log_y = true;
            spec.series = series_at_last(result, last,
                                         {{"dQ", &CheckpointRecord::expansion_dQ},
                                          {"dP", &CheckpointRecord::expansion_dP}});
            spec.annotation = "dQ slope " + format_double(result.expansion_dQ_slope.slope) +
                              ", dP slope " + format_double(result.expansion_dP_slope.slope);
            write_svg_plot(directory + "/expansion_scaling.svg", spec);
            add_file("expansion_scaling.svg");
        }
    }

    push_metric_if_valid(m, "corrected_slope", result.corrected_slope);
    push_metric_if_valid(m, "leading_slope", result.leading_slope);
    push_metric_if_valid(m, "expansion_dQ_slope", result.expansion_dQ_slope);
    push_metric_if_valid(m, "expansion_dP_slope", result.expansion_dP_slope);
    push_metric_if_valid(m, "field_center_slope", result.field_center_slope);
    if (result.field_center_slope.valid())
        m.metrics.emplace_back("field_center_slope_time", result.field_center_slope_time);
    // fitted constant of the normalization bound |N(t) - N(0)| <= C eps
    double c_norm = 0.0;
    bool have_c = false;
    for (const auto& rec : result.records)
        if (rec.ok && rec.epsilon > 0.0) {
            c_norm = std::max(c_norm, rec.norm_drift / rec.epsilon);
            have_c = true;
        }
    if (have_c) m.metrics.emplace_back("N_conservation_C", c_norm);
    m.metrics.emplace_back("epsilon_count", static_cast<double>(result.records.size()));
    m.metrics.emplace_back("all_ok", result.all_ok() ? 1.0 : 0.0);

    write_manifest(directory, m);
    return read_manifest(directory);
}

}  // namespace bloch
