#include <blochpack/observables.hpp>

#include <blochpack/fft.hpp>

#include <cmath>
#include <sstream>

namespace bloch {

namespace {

void check_shadow(const WaveField& f) {
    const double shadow = f.boundary_shadow();
    if (shadow > 1e-8) {
        std::ostringstream msg;
        msg << "field carries boundary shadow " << shadow
            << " (limit 1e-8); moments of an unconfined field are meaningless";
        throw DomainTooSmall(msg.str());
    }
}

}  // namespace

TwoScaleAverage two_scale_average(const Vec& f_samples, const FieldGridSpec& grid,
                                  const PeriodicPotential& g, double delta, const Vec& s) {
    WaveField shape = WaveField::make(grid, 1.0);
    if (f_samples.size() != shape.size())
        throw ConfigError("sample count does not match the quadrature grid");
    if (!(delta > 0.0)) throw ConfigError("scale separation delta must be positive");
    if (!g.empty() && g.lattice().dim != shape.dim)
        throw ConfigError("periodic factor dimension does not match the grid");
    if (s.size() != shape.dim) throw ConfigError("shift dimension does not match the grid");

    // fastest oscillation of g(x/delta) per axis, from the actual support
    for (int ax = 0; ax < shape.dim; ++ax) {
        double k_max = 0.0;
        for (const auto& [m, c] : g.coefficients()) {
            const Vec G = g.lattice().dual * m.cast<double>();
            k_max = std::max(k_max, std::abs(G[ax]));
        }
        if (k_max == 0.0) continue;
        const double pts = 2.0 * kPi * delta / k_max / shape.spacing(ax);
        if (pts < 8.0 - 1e-12) {
            std::ostringstream msg;
            msg << "grid resolves only " << pts
                << " points per oscillation of the periodic factor (need >= 8)";
            throw ResolutionTooLow(msg.str());
        }
    }

    TwoScaleAverage out;
    double sum_fg = 0.0, sum_f = 0.0;
    for (int j = 0; j < shape.size(); ++j) {
        const Vec x = shape.point(j);
        const double fx = f_samples[j];
        sum_f += fx;
        sum_fg += g.empty() ? 0.0 : fx * g.eval(x / delta + s / (delta * delta));
    }
    const double cv = shape.cell_volume();
    out.value = cv * sum_fg;
    // cell mean of g = zero Fourier coefficient (exact; imaginary part is zero
    // by the Hermitian symmetry of the coefficients)
    const IVec zero = IVec::Zero(shape.dim);
    out.separated = cv * sum_f * (g.empty() ? 0.0 : g.coefficient(zero).real());
    return out;
}

PacketObservables observables_from_ansatz(const PacketState& state, const EnvelopeGrid& env,
                                          const BandModel& model, double epsilon) {
    const int d = model.dim();
    if (state.q.size() != d || state.p.size() != d || env.dim != d)
        throw ConfigError("packet state, envelope grid, and band model dimensions differ");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");

    const EnvelopeMoments m = envelope_moments(env);
    const double root_eps = std::sqrt(epsilon);
    const Vec connection = model.derivs(state.p)->berry_connection;

    PacketObservables out;
    out.N = m.norm_a_sq + root_eps * m.pairing;
    out.Q = state.q + (root_eps * m.mean_y + epsilon * m.mixed_y) / out.N +
            epsilon * connection;
    out.P = state.p + (root_eps * m.mean_xi + epsilon * m.mixed_xi) / out.N;
    return out;
}

Vec position_from_field(const WaveField& field) {
    check_shadow(field);
    Vec first = Vec::Zero(field.dim);
    double mass = 0.0;
    for (int j = 0; j < field.size(); ++j) {
        const double w = std::norm(field.psi[j]);
        mass += w;
        first += w * field.point(j);
    }
    if (mass <= 0.0) throw ConfigError("field has zero norm");
    return first / mass;
}

Vec momentum_from_field(const WaveField& field) {
    check_shadow(field);
    CVec hat = field.psi;
    FftWorkspace fft(field.dim, field.n_points);
    fft.forward(hat);

    Vec first = Vec::Zero(field.dim);
    double mass = 0.0;
    int idx[2];
    for (int j = 0; j < field.size(); ++j) {
        const double w = std::norm(hat[j]);
        mass += w;
        if (field.dim == 1) {
            idx[0] = j;
        } else {
            idx[0] = j / field.n_points;
            idx[1] = j % field.n_points;
        }
        for (int ax = 0; ax < field.dim; ++ax)
            first[ax] += w * field.epsilon * field.frequency(ax, idx[ax]);
    }
    if (mass <= 0.0) throw ConfigError("field has zero norm");
    return first / mass;
}

ExpansionResiduals expansion_residuals(const BandModel& model, const PacketState& state,
                                       const GaussianEnvelope& a,
                                       const std::optional<EnvelopeGrid>& corrector,
                                       double epsilon, const FieldGridSpec& grid) {
    const int d = model.dim();

    PacketObservables rhs;
    if (corrector) {
        rhs = observables_from_ansatz(state, *corrector, model, epsilon);
    } else {
        EnvelopeGrid g = EnvelopeGrid::standard(d);
        g.t = state.t;
        g.a = gaussian_sample(a, g);
        rhs = observables_from_ansatz(state, g, model, epsilon);
    }

    const WaveField psi = assemble_asymptotic(model, state, a, corrector, epsilon, grid);
    const double cv = psi.cell_volume();
    const double n_sq = cv * psi.psi.squaredNorm();

    ExpansionResiduals out;
    out.N_lhs = n_sq;
    out.dQ = position_from_field(psi) - rhs.Q;
    out.dP = Vec::Zero(d);
    for (int ax = 0; ax < d; ++ax) {
        AnsatzOptions opt;
        opt.momentum_axis = ax;
        const WaveField slot = assemble_asymptotic(model, state, a, corrector, epsilon, grid, opt);
        out.dP[ax] = (cv * psi.psi.dot(slot.psi)).real() / n_sq - rhs.P[ax];
    }
    return out;
}

}  // namespace bloch
