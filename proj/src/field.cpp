#include <blochpack/field.hpp>

#include <blochpack/fft.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace bloch {

namespace {

inline void flat_to_axes(int flat, int dim, int n, int* idx) {
    if (dim == 1) {
        idx[0] = flat;
    } else {
        idx[0] = flat / n;
        idx[1] = flat % n;
    }
}

// closed-form Gaussian with the tracked determinant branch, evaluated pointwise
struct GaussianEval {
    cplx prefactor;
    CMat M;  // symmetrized B A^{-1}

    explicit GaussianEval(const GaussianEnvelope& env) {
        const cplx detA = env.A.determinant();
        if (std::abs(detA) < 1e-14)
            throw BranchDiscontinuity("det A vanished; envelope cannot be sampled");
        prefactor = env.N * std::pow(std::abs(detA), -0.5) *
                    std::exp(cplx(0.0, -0.5 * env.det_phase));
        M = env.B * env.A.inverse();
        M = 0.5 * (M + M.transpose()).eval();
    }

    // a(y) and (-i grad a)(y) = a(y) M y in one evaluation
    void eval(const Vec& y, cplx& value, CVec& momentum) const {
        const CVec My = M * y.cast<cplx>();
        cplx quad = 0.0;
        for (int i = 0; i < y.size(); ++i) quad += y[i] * My[i];
        value = prefactor * std::exp(cplx(0.0, 0.5) * quad);
        momentum = value * My;
    }
};

// trigonometric interpolation of envelope-grid samples at arbitrary y; the
// per-axis phase tables are built by power recurrence from a single exp
struct TrigInterp {
    int dim;
    int n;
    double extent;
    double y0;
    CVec coef;  // forward DFT of the samples with the 1/size factor folded in

    TrigInterp(const EnvelopeGrid& grid, const CVec& samples)
        : dim(grid.dim), n(grid.n_points), extent(grid.extent), y0(-0.5 * grid.extent) {
        coef = samples;
        FftWorkspace fft(dim, n);
        fft.forward(coef);
        coef /= static_cast<double>(grid.size());
    }

    double freq(int k) const {
        const int kk = k <= (n - 1) / 2 ? k : k - n;
        return 2.0 * kPi * kk / extent;
    }

    void axis_table(double u, CVec& table) const {
        const cplx w = std::exp(cplx(0.0, 2.0 * kPi * u / extent));
        const int half = (n - 1) / 2;
        table[0] = 1.0;
        for (int k = 1; k <= half; ++k) table[k] = table[k - 1] * w;
        if (n > 1) {
            table[n - 1] = std::conj(w);
            for (int k = n - 2; k > half; --k) table[k] = table[k + 1] * std::conj(w);
        }
    }

    // value, or the spectral derivative (-i d/dy_axis) when deriv_axis >= 0
    cplx eval(const Vec& y, int deriv_axis = -1) const {
        CVec t0(n), t1(n);
        axis_table(y[0] - y0, t0);
        if (deriv_axis == 0)
            for (int k = 0; k < n; ++k) t0[k] *= freq(k);
        cplx acc = 0.0;
        if (dim == 1) {
            for (int k = 0; k < n; ++k) acc += coef[k] * t0[k];
            return acc;
        }
        axis_table(y[1] - y0, t1);
        if (deriv_axis == 1)
            for (int k = 0; k < n; ++k) t1[k] *= freq(k);
        int flat = 0;
        for (int k0 = 0; k0 < n; ++k0)
            for (int k1 = 0; k1 < n; ++k1, ++flat) acc += coef[flat] * t0[k0] * t1[k1];
        return acc;
    }
};

void require_axis_aligned(const LatticeSpec& lat) {
    const double scale = lat.direct.cwiseAbs().maxCoeff();
    for (int i = 0; i < lat.dim; ++i)
        for (int j = 0; j < lat.dim; ++j)
            if (i != j && std::abs(lat.direct(i, j)) > 1e-12 * scale)
                throw CommensurabilityError(
                    "direct solves require an axis-aligned lattice cell");
}

std::vector<int> boundary_strip(const WaveField& f) {
    std::vector<int> strip;
    const int n = f.n_points;
    int idx[2];
    for (int j = 0; j < f.size(); ++j) {
        flat_to_axes(j, f.dim, n, idx);
        for (int ax = 0; ax < f.dim; ++ax) {
            const double dist = std::min(idx[ax], n - idx[ax]) * f.spacing(ax);
            if (dist < 0.05 * f.box_length[ax]) {
                strip.push_back(j);
                break;
            }
        }
    }
    return strip;
}

}  // namespace

WaveField WaveField::make(const FieldGridSpec& grid, double epsilon) {
    const int d = static_cast<int>(grid.box_length.size());
    if (d < 1 || d > 2)
        throw ConfigError("direct fields support dimensions 1 and 2");
    if (grid.box_center.size() != d)
        throw ConfigError("box center and box length dimensions differ");
    if (grid.n_points < 2) throw ConfigError("field grid needs at least 2 points per axis");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    for (int i = 0; i < d; ++i)
        if (!(grid.box_length[i] > 0.0)) throw ConfigError("box length must be positive");
    WaveField f;
    f.dim = d;
    f.box_length = grid.box_length;
    f.box_center = grid.box_center;
    f.n_points = grid.n_points;
    f.epsilon = epsilon;
    f.psi = CVec::Zero(f.size());
    return f;
}

int WaveField::size() const {
    int total = 1;
    for (int i = 0; i < dim; ++i) total *= n_points;
    return total;
}

Vec WaveField::point(int flat) const {
    int idx[2];
    flat_to_axes(flat, dim, n_points, idx);
    Vec x(dim);
    for (int ax = 0; ax < dim; ++ax)
        x[ax] = box_center[ax] - 0.5 * box_length[ax] + spacing(ax) * idx[ax];
    return x;
}

double WaveField::frequency(int axis, int k) const {
    const int kk = k <= (n_points - 1) / 2 ? k : k - n_points;
    return 2.0 * kPi * kk / box_length[axis];
}

double WaveField::cell_volume() const {
    double v = 1.0;
    for (int i = 0; i < dim; ++i) v *= spacing(i);
    return v;
}

double WaveField::l2_norm() const {
    return std::sqrt(cell_volume() * psi.squaredNorm());
}

double WaveField::boundary_shadow() const {
    double worst = 0.0;
    int idx[2];
    for (int j = 0; j < size(); ++j) {
        flat_to_axes(j, dim, n_points, idx);
        for (int ax = 0; ax < dim; ++ax) {
            const double dist = std::min(idx[ax], n_points - idx[ax]) * spacing(ax);
            if (dist < 0.05 * box_length[ax]) {
                worst = std::max(worst, std::abs(psi[j]));
                break;
            }
        }
    }
    return worst;
}

WaveField assemble_asymptotic(const BandModel& model, const PacketState& state,
                              const GaussianEnvelope& a,
                              const std::optional<EnvelopeGrid>& corrector, double epsilon,
                              const FieldGridSpec& grid, const AnsatzOptions& opt) {
    const int d = model.dim();
    if (state.q.size() != d || state.p.size() != d)
        throw ConfigError("packet state dimension does not match the band model");
    if (a.dim() != d) throw ConfigError("envelope dimension does not match the band model");
    if (model.options().gauge == Gauge::parallel)
        throw GaugeMismatch(
            "a path-transported gauge cannot be reproduced from a pointwise solve");
    if (corrector) {
        if (corrector->dim != d) throw GridMismatch("corrector grid dimension mismatch");
        if (std::abs(corrector->t - state.t) > 1e-9)
            throw GridMismatch("corrector grid time does not match the packet state");
    }

    WaveField f = WaveField::make(grid, epsilon);
    if (f.dim != d) throw ConfigError("field grid dimension does not match the band model");
    f.t = state.t;

    // two-scale resolution guard; both measurements reported on failure
    require_axis_aligned(model.lattice());
    double min_pts = 1e300, min_span = 1e300;
    for (int i = 0; i < d; ++i) {
        min_pts = std::min(min_pts, epsilon * model.lattice().direct(i, i) / f.spacing(i));
        const double sigma_x = std::sqrt(epsilon) * a.A.row(i).norm() / std::sqrt(2.0);
        min_span = std::min(min_span, f.box_length[i] / sigma_x);
    }
    if (min_pts < 8.0 - 1e-12 || min_span < 12.0 - 1e-12) {
        std::ostringstream msg;
        msg << "grid does not resolve both scales: " << min_pts
            << " points per lattice period (need >= 8), box spans " << min_span
            << " envelope standard deviations (need >= 12)";
        throw ResolutionTooLow(msg.str());
    }

    const BlochSlice slice = model.slice(state.p);
    const GradChi gchi = grad_p_chi(model.truncation(), slice, model.band());
    const CVec coeff = slice.vectors.col(model.band() - 1);
    const Mat& G = model.truncation().modes.G;
    const int n_modes = model.truncation().size();

    const int mom = opt.momentum_axis;
    if (mom >= d)
        throw ConfigError("momentum slot axis exceeds the model dimension");

    const GaussianEval gauss(a);
    std::optional<TrigInterp> interp;
    if (corrector && !opt.leading_only) interp.emplace(*corrector, corrector->b);

    const double root_eps = std::sqrt(epsilon);
    const double amplitude = std::pow(epsilon, -0.25 * d);
    cplx a_val;
    CVec a_mom(d);
    for (int j = 0; j < f.size(); ++j) {
        const Vec x = f.point(j);
        const Vec y = (x - state.q) / root_eps;
        gauss.eval(y, a_val, a_mom);

        cplx chi = 0.0;
        CVec dchi = CVec::Zero(d);
        for (int m = 0; m < n_modes; ++m) {
            const cplx ph = std::exp(cplx(0.0, G.col(m).dot(x) / epsilon));
            chi += coeff[m] * ph;
            for (int al = 0; al < d; ++al) dchi[al] += gchi.d_chi(m, al) * ph;
        }

        cplx bracket = a_val * chi;
        if (!opt.leading_only) {
            cplx first = 0.0;
            for (int al = 0; al < d; ++al) first += a_mom[al] * dchi[al];
            if (interp) first += interp->eval(y) * chi;
            bracket += root_eps * first;
        }

        if (mom >= 0) {
            // (-i sqrt(eps) d/dy_mom) pulls p_mom from the e^{i p.y/sqrt(eps)}
            // phase and sqrt(eps) times the envelope-slot derivative of the
            // bracket; second envelope derivatives come from the Gaussian in
            // closed form, the corrector derivative from its Fourier series
            cplx slot = a_mom[mom] * chi;
            if (!opt.leading_only) {
                const CVec My = gauss.M * y.cast<cplx>();
                cplx second = 0.0;
                for (int be = 0; be < d; ++be)
                    second += a_val * (My[mom] * My[be] - cplx(0.0, 1.0) * gauss.M(mom, be)) *
                              dchi[be];
                if (interp) second += interp->eval(y, mom) * chi;
                slot += root_eps * second;
            }
            bracket = state.p[mom] * bracket + root_eps * slot;
        }

        const double phase =
            state.S / epsilon + state.p.dot(x - state.q) / epsilon + state.phi_B;
        f.psi[j] = amplitude * std::exp(cplx(0.0, phase)) * bracket;
    }

    const double shadow = f.boundary_shadow();
    if (shadow > 1e-8) {
        std::ostringstream msg;
        msg << "assembled field leaves boundary shadow " << shadow
            << " (limit 1e-8); enlarge the box";
        throw DomainTooSmall(msg.str());
    }
    return f;
}

WaveField assemble_initial_data(const BandModel& model, const Vec& q0, const Vec& p0,
                                const GaussianEnvelope& a0,
                                const std::optional<EnvelopeGrid>& corrector, double epsilon,
                                const FieldGridSpec& grid, const AnsatzOptions& opt) {
    PacketState st;
    st.t = 0.0;
    st.q = q0;
    st.p = p0;
    st.S = 0.0;
    st.phi_B = 0.0;
    return assemble_asymptotic(model, st, a0, corrector, epsilon, grid, opt);
}

WaveField propagate(const WaveField& field, const PeriodicPotential& V,
                    const ExternalPotential& W, double t1, double dt) {
    if (field.psi.size() != field.size())
        throw ConfigError("field sample count does not match its grid");
    if (W.dim() != field.dim)
        throw ConfigError("external potential dimension does not match the field");
    if (!V.empty() && V.lattice().dim != field.dim)
        throw ConfigError("periodic potential dimension does not match the field");
    if (t1 < field.t - 1e-12) throw ConfigError("final time precedes the field time");
    if (t1 <= field.t + 1e-15) return field;

    const double eps = field.epsilon;
    if (!V.empty()) {
        require_axis_aligned(V.lattice());
        for (int i = 0; i < field.dim; ++i) {
            const double ratio = field.box_length[i] / (eps * V.lattice().direct(i, i));
            if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio))
                throw CommensurabilityError(
                    "box length is not an integer multiple of the eps-scaled lattice period");
        }
    }
    if (W.kind() == ExternalPotential::Kind::cosine_sum) {
        // probe translation by one box length on each axis; a periodic W must
        // return to itself or the wrapped potential phase is discontinuous
        const double frac[5] = {-0.43, -0.17, 0.07, 0.23, 0.41};
        for (int i = 0; i < field.dim; ++i) {
            Vec shift = Vec::Zero(field.dim);
            shift[i] = field.box_length[i];
            for (double fr : frac) {
                Vec x = field.box_center;
                for (int j = 0; j < field.dim; ++j) x[j] += fr * field.box_length[j];
                const double w0 = W.value(x), w1 = W.value(x + shift);
                if (std::abs(w1 - w0) > 1e-9 * (1.0 + std::abs(w0)))
                    throw CommensurabilityError(
                        "periodic external potential is incommensurate with the box");
            }
        }
    }

    const double span = t1 - field.t;
    const double step0 = dt > 0.0 ? dt : eps / 100.0;
    const int n_steps = std::max(1, static_cast<int>(std::ceil(span / step0 - 1e-9)));
    const double h = span / n_steps;

    const int size = field.size();
    CVec pot(size), kin(size);
    int idx[2];
    for (int j = 0; j < size; ++j) {
        const Vec x = field.point(j);
        const double val = (V.empty() ? 0.0 : V.eval(x / eps)) + W.value(x);
        pot[j] = std::exp(cplx(0.0, -val * h / (2.0 * eps)));
        flat_to_axes(j, field.dim, field.n_points, idx);
        double k2 = 0.0;
        for (int ax = 0; ax < field.dim; ++ax) {
            const double kappa = field.frequency(ax, idx[ax]);
            k2 += kappa * kappa;
        }
        kin[j] = std::exp(cplx(0.0, -0.5 * eps * k2 * h));
    }

    // For a periodic (or zero) W the box wrap is exact periodic dynamics; the
    // shadow guard protects only the non-periodic case, where wrap-around
    // would silently re-inject the packet against a non-repeating potential.
    const bool guard_shadow = W.kind() == ExternalPotential::Kind::quadratic ||
                              W.kind() == ExternalPotential::Kind::gaussian_well;
    const std::vector<int> strip = guard_shadow ? boundary_strip(field) : std::vector<int>{};
    FftWorkspace fft(field.dim, field.n_points);
    WaveField f = field;
    for (int s = 0; s < n_steps; ++s) {
        f.psi.array() *= pot.array();
        fft.forward(f.psi);
        f.psi.array() *= kin.array();
        fft.backward_normalized(f.psi);
        f.psi.array() *= pot.array();
        f.t = field.t + (s + 1) * h;

        if (guard_shadow) {
            double worst = 0.0;
            for (int j : strip) worst = std::max(worst, std::abs(f.psi[j]));
            if (worst > 1e-8) {
                std::ostringstream msg;
                msg << "wavepacket reached the box edge at t = " << f.t << " (shadow "
                    << worst << ", limit 1e-8)";
                throw DomainTooSmall(msg.str());
            }
        }
    }
    f.t = t1;
    return f;
}

double corrector_norm(const WaveField& psi, const WaveField& psi_tilde) {
    if (psi.dim != psi_tilde.dim || psi.n_points != psi_tilde.n_points)
        throw GridMismatch("field grids differ in shape");
    for (int i = 0; i < psi.dim; ++i) {
        if (std::abs(psi.box_length[i] - psi_tilde.box_length[i]) >
                1e-12 * psi.box_length[i] ||
            std::abs(psi.box_center[i] - psi_tilde.box_center[i]) > 1e-12)
            throw GridMismatch("field grids differ in geometry");
    }
    if (std::abs(psi.t - psi_tilde.t) > 1e-9)
        throw GridMismatch("fields are at different times");
    if (std::abs(psi.epsilon - psi_tilde.epsilon) > 1e-15)
        throw GridMismatch("fields have different epsilon");
    return std::sqrt(psi.cell_volume() * (psi.psi - psi_tilde.psi).squaredNorm());
}

}  // namespace bloch
