#include <blochpack/envelope.hpp>
#include <blochpack/errors.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace bloch {

namespace {

// row-major flat index decomposition, last axis fastest
inline void flat_to_axes(int flat, int dim, int n, int* idx) {
    if (dim == 1) {
        idx[0] = flat;
    } else if (dim == 2) {
        idx[0] = flat / n;
        idx[1] = flat % n;
    } else {
        idx[0] = flat / (n * n);
        idx[1] = (flat / n) % n;
        idx[2] = flat % n;
    }
}

void check_square(const CMat& A, const CMat& B) {
    if (A.rows() == 0 || A.rows() != A.cols() || B.rows() != A.rows() || B.cols() != A.cols())
        throw ConfigError("envelope matrices must be square and of equal size");
}

double boundary_max(const EnvelopeGrid& g, const CVec& f) {
    const int n = g.n_points;
    int idx[3];
    double m = 0.0;
    for (int j = 0; j < g.size(); ++j) {
        flat_to_axes(j, g.dim, n, idx);
        bool shell = false;
        for (int ax = 0; ax < g.dim; ++ax) shell = shell || idx[ax] == 0 || idx[ax] == n - 1;
        if (shell) m = std::max(m, std::abs(f[j]));
    }
    return m;
}

void require_boundary_decay(const EnvelopeGrid& g, const CVec& f, const char* name) {
    const double m = boundary_max(g, f);
    if (m > 1e-10) {
        std::ostringstream os;
        os << "envelope " << name << " has boundary amplitude " << m
           << " on the outermost grid shell; enlarge the domain";
        throw DomainTooSmall(os.str());
    }
}

void check_path_matrix(const Mat& M, int d, const char* name) {
    if (M.rows() != d || M.cols() != d)
        throw ConfigError(std::string(name) + " path returned a matrix of wrong size");
}

// shared split-step machinery for the grid propagators
struct GridStepper {
    const EnvelopeGrid& geom;
    FftWorkspace fft;
    Vec freq;
    Vec coords;

    explicit GridStepper(const EnvelopeGrid& g)
        : geom(g), fft(g.dim, g.n_points), freq(g.n_points), coords(g.n_points) {
        for (int k = 0; k < g.n_points; ++k) {
            freq[k] = g.frequency(k);
            coords[k] = g.coord(k);
        }
    }

    // values of the quadratic form x.Mx on every grid point, with x the
    // position or the frequency of the point
    Vec quad_form(const Mat& M, bool in_frequency) const {
        const Vec& ax = in_frequency ? freq : coords;
        const int n = geom.n_points;
        const int d = geom.dim;
        Vec out(geom.size());
        int idx[3];
        for (int j = 0; j < geom.size(); ++j) {
            flat_to_axes(j, d, n, idx);
            double q = 0.0;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) q += M(a, b) * ax[idx[a]] * ax[idx[b]];
            out[j] = q;
        }
        return out;
    }

    // one Strang step of size h with frozen coefficients, applied to each
    // field with the same multipliers (the corrector rides the same propagator)
    void strang(std::vector<CVec*> fields, const Mat& ME, const Mat& MW, double h) {
        check_path_matrix(ME, geom.dim, "band Hessian");
        check_path_matrix(MW, geom.dim, "external Hessian");
        const int total = geom.size();
        const Vec wq = quad_form(MW, false);
        const Vec eq = quad_form(ME, true);
        CVec half_pot(total);
        CVec kinetic(total);
        for (int j = 0; j < total; ++j) half_pot[j] = std::exp(cplx(0.0, -0.25 * h * wq[j]));
        for (int j = 0; j < total; ++j) kinetic[j] = std::exp(cplx(0.0, -0.5 * h * eq[j]));
        for (CVec* f : fields) {
            f->array() *= half_pot.array();
            fft.forward(*f);
            f->array() *= kinetic.array();
            fft.backward_normalized(*f);
            f->array() *= half_pot.array();
        }
    }
};

int step_count(double span, double dt) {
    if (dt <= 0.0) throw ConfigError("time step must be positive");
    return std::max(1, static_cast<int>(std::ceil(span / dt - 1e-9)));
}

// multi-indices alpha in N^d with |alpha| <= budget
std::vector<IVec> multi_indices(int d, int budget) {
    std::vector<IVec> out;
    IVec cur = IVec::Zero(d);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == d) {
            out.push_back(cur);
            return;
        }
        for (int k = 0; k <= left; ++k) {
            cur[pos] = k;
            rec(pos + 1, left - k);
        }
        cur[pos] = 0;
    };
    rec(0, budget);
    return out;
}

}  // namespace

std::pair<double, double> symplectic_residuals(const CMat& A, const CMat& B) {
    check_square(A, B);
    const int d = static_cast<int>(A.rows());
    const CMat c1 = A.transpose() * B - B.transpose() * A;
    const CMat c2 = A.adjoint() * B - B.adjoint() * A - cplx(0.0, 2.0) * CMat::Identity(d, d);
    return {c1.cwiseAbs().maxCoeff(), c2.cwiseAbs().maxCoeff()};
}

GaussianEnvelope make_gaussian(cplx N, const CMat& A0, const CMat& B0) {
    check_square(A0, B0);
    if (std::abs(N) == 0.0) throw ConfigError("Gaussian normalization must be non-zero");
    const auto [r1, r2] = symplectic_residuals(A0, B0);
    if (std::max(r1, r2) > 1e-8) {
        std::ostringstream os;
        os << "Gaussian pair conditions violated: |A^T B - B^T A| = " << r1
           << ", |A*^T B - B*^T A - 2iI| = " << r2;
        throw SymplecticViolation(os.str());
    }
    const cplx detA = A0.determinant();
    if (std::abs(detA) < 1e-14) throw SymplecticViolation("width matrix A is singular");
    const CMat M = B0 * A0.inverse();
    const Mat imM = M.imag();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (imM + imM.transpose()));
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw SymplecticViolation("Im(B A^{-1}) is not positive definite");
    GaussianEnvelope env;
    env.N = N;
    env.A = A0;
    env.B = B0;
    env.det_phase = std::arg(detA);
    return env;
}

EnvelopeGrid EnvelopeGrid::make(int dim, double extent, int n_points) {
    if (dim < 1 || dim > 3) throw ConfigError("envelope grid dimension must be 1..3");
    if (extent <= 0.0) throw ConfigError("envelope grid extent must be positive");
    if (n_points < 8) throw ConfigError("envelope grid needs at least 8 points per axis");
    EnvelopeGrid g;
    g.dim = dim;
    g.extent = extent;
    g.n_points = n_points;
    g.a = CVec::Zero(g.size());
    g.b = CVec::Zero(g.size());
    g.t = 0.0;
    return g;
}

EnvelopeGrid EnvelopeGrid::standard(int dim) {
    if (dim == 1) return make(1, 40.0, 512);
    if (dim == 2) return make(2, 24.0, 128);
    throw ConfigError("standard envelope grids exist for dimensions 1 and 2");
}

int EnvelopeGrid::size() const {
    int total = 1;
    for (int i = 0; i < dim; ++i) total *= n_points;
    return total;
}

double EnvelopeGrid::frequency(int k) const {
    const int kk = k <= (n_points - 1) / 2 ? k : k - n_points;
    return 2.0 * kPi * kk / extent;
}

Vec EnvelopeGrid::point(int flat) const {
    int idx[3];
    flat_to_axes(flat, dim, n_points, idx);
    Vec y(dim);
    for (int ax = 0; ax < dim; ++ax) y[ax] = coord(idx[ax]);
    return y;
}

double EnvelopeGrid::cell_volume() const { return std::pow(spacing(), dim); }

double EnvelopeGrid::l2_norm(const CVec& f) const {
    if (f.size() != size()) throw GridMismatch("sample count does not match the grid");
    return std::sqrt(cell_volume() * f.squaredNorm());
}

CVec gaussian_sample(const GaussianEnvelope& env, const EnvelopeGrid& grid) {
    if (env.dim() != grid.dim) throw GridMismatch("envelope and grid dimensions differ");
    const cplx detA = env.A.determinant();
    if (std::abs(detA) < 1e-14) throw BranchDiscontinuity("det A vanished; cannot sample");
    // modulus from |det A|, phase from the continuously tracked branch
    const cplx det_factor =
        std::pow(std::abs(detA), -0.5) * std::exp(cplx(0.0, -0.5 * env.det_phase));
    CMat M = env.B * env.A.inverse();
    M = 0.5 * (M + M.transpose()).eval();
    CVec out(grid.size());
    for (int j = 0; j < grid.size(); ++j) {
        const Vec y = grid.point(j);
        const cplx q = y.cast<cplx>().dot(M * y.cast<cplx>());
        out[j] = env.N * det_factor * std::exp(cplx(0.0, 0.5) * q);
    }
    return out;
}

GaussianEnvelope evolve_gaussian(const GaussianEnvelope& env, const MatrixPath& hessE,
                                 const MatrixPath& hessW, double t0, double t1, double dt) {
    if (t1 < t0) throw ConfigError("final time precedes initial time");
    GaussianEnvelope out = env;
    const double span = t1 - t0;
    if (span == 0.0) return out;
    const int d = env.dim();
    const int nsteps = step_count(span, dt);
    const double h = span / nsteps;

    CMat A = env.A;
    CMat B = env.B;
    cplx det_prev = A.determinant();
    double phase = env.det_phase;

    auto rhs = [&](double t, const CMat& a, const CMat& b) {
        const Mat ME = hessE(t);
        const Mat MW = hessW(t);
        check_path_matrix(ME, d, "band Hessian");
        check_path_matrix(MW, d, "external Hessian");
        return std::make_pair((ME.cast<cplx>() * b).eval(), (-(MW.cast<cplx>() * a)).eval());
    };

    for (int s = 0; s < nsteps; ++s) {
        const double t = t0 + s * h;
        const auto [k1a, k1b] = rhs(t, A, B);
        const auto [k2a, k2b] = rhs(t + 0.5 * h, A + 0.5 * h * k1a, B + 0.5 * h * k1b);
        const auto [k3a, k3b] = rhs(t + 0.5 * h, A + 0.5 * h * k2a, B + 0.5 * h * k2b);
        const auto [k4a, k4b] = rhs(t + h, A + h * k3a, B + h * k3b);
        A += (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        B += (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);

        const cplx det_now = A.determinant();
        if (std::abs(det_now) < 1e-14)
            throw BranchDiscontinuity("det A vanished during evolution");
        const double delta = std::arg(det_now / det_prev);
        if (std::abs(delta) > 0.5 * kPi)
            throw BranchDiscontinuity(
                "determinant branch moved by more than pi/2 in one step; refine dt");
        phase += delta;
        det_prev = det_now;
    }

    const auto [r1, r2] = symplectic_residuals(A, B);
    if (std::max(r1, r2) > 1e-6) {
        std::ostringstream os;
        os << "pair conditions drifted during integration: residuals " << r1 << ", " << r2;
        throw SymplecticDrift(os.str());
    }
    out.A = A;
    out.B = B;
    out.det_phase = phase;
    return out;
}

EnvelopeGrid evolve_a_grid(const EnvelopeGrid& grid, const MatrixPath& hessE,
                           const MatrixPath& hessW, double t0, double t1, double dt,
                           bool verify_step) {
    if (t1 < t0) throw ConfigError("final time precedes initial time");
    require_boundary_decay(grid, grid.a, "a");
    EnvelopeGrid out = grid;
    if (t1 == t0) return out;
    const double span = t1 - t0;
    const int nsteps = step_count(span, dt);
    const double h = span / nsteps;
    GridStepper st(grid);

    if (verify_step) {
        // midpoint-frozen step versus four quarter steps (Richardson pair)
        CVec one = out.a;
        st.strang({&one}, hessE(t0 + 0.5 * h), hessW(t0 + 0.5 * h), h);
        CVec four = out.a;
        for (int q = 0; q < 4; ++q) {
            const double tq = t0 + 0.25 * q * h;
            st.strang({&four}, hessE(tq + 0.125 * h), hessW(tq + 0.125 * h), 0.25 * h);
        }
        const double gap = grid.l2_norm((one - four).eval());
        if (gap > 1e-4 * std::max(1.0, grid.l2_norm(out.a))) {
            std::ostringstream os;
            os << "split step at dt = " << h << " disagrees with quarter steps by " << gap;
            throw StepTooLarge(os.str());
        }
    }

    for (int s = 0; s < nsteps; ++s) {
        const double t = t0 + s * h;
        st.strang({&out.a}, hessE(t + 0.5 * h), hessW(t + 0.5 * h), h);
    }
    out.t = t1;
    require_boundary_decay(out, out.a, "a");
    return out;
}

CVec apply_envelope_source(const EnvelopeGrid& grid, const EnvelopeSourceCoeffs& coeffs,
                           const CVec& a, FftWorkspace& fft) {
    const int d = grid.dim;
    const int n = grid.n_points;
    const int total = grid.size();
    if (a.size() != total) throw GridMismatch("sample count does not match the grid");
    const bool has_te = coeffs.third_E.dim() > 0;
    const bool has_tw = coeffs.third_W.dim() > 0;
    const bool has_mc = coeffs.momentum_coupling.size() > 0;
    const bool has_pc = coeffs.position_coupling.size() > 0;
    if ((has_te && coeffs.third_E.dim() != d) || (has_tw && coeffs.third_W.dim() != d) ||
        (has_mc && coeffs.momentum_coupling.size() != d) ||
        (has_pc && coeffs.position_coupling.size() != d))
        throw GridMismatch("source coefficient dimensions do not match the grid");

    int idx[3];
    double x[3];

    // spectral part: cubic dispersion plus the momentum Berry coupling,
    // both real Fourier multipliers
    CVec spectral = a;
    fft.forward(spectral);
    for (int j = 0; j < total; ++j) {
        flat_to_axes(j, d, n, idx);
        for (int ax = 0; ax < d; ++ax) x[ax] = grid.frequency(idx[ax]);
        double s = 0.0;
        if (has_te) {
            double cubic = 0.0;
            for (int p = 0; p < d; ++p)
                for (int q = 0; q < d; ++q)
                    for (int r = 0; r < d; ++r) cubic += coeffs.third_E(p, q, r) * x[p] * x[q] * x[r];
            s += cubic / 6.0;
        }
        if (has_mc)
            for (int g = 0; g < d; ++g) s += coeffs.momentum_coupling[g] * x[g];
        spectral[j] *= s;
    }
    fft.backward_normalized(spectral);

    // physical part: cubic external term plus the position Berry coupling
    CVec out = spectral;
    for (int j = 0; j < total; ++j) {
        flat_to_axes(j, d, n, idx);
        for (int ax = 0; ax < d; ++ax) x[ax] = grid.coord(idx[ax]);
        double m = 0.0;
        if (has_tw) {
            double cubic = 0.0;
            for (int p = 0; p < d; ++p)
                for (int q = 0; q < d; ++q)
                    for (int r = 0; r < d; ++r) cubic += coeffs.third_W(p, q, r) * x[p] * x[q] * x[r];
            m += cubic / 6.0;
        }
        if (has_pc)
            for (int g = 0; g < d; ++g) m += coeffs.position_coupling[g] * x[g];
        out[j] += m * a[j];
    }
    return out;
}

EnvelopeGrid evolve_b_grid(const EnvelopeGrid& grid, const MatrixPath& hessE,
                           const MatrixPath& hessW, const SourcePath& source, double t0,
                           double t1, double dt, bool verify_step) {
    if (t1 < t0) throw ConfigError("final time precedes initial time");
    require_boundary_decay(grid, grid.a, "a");
    require_boundary_decay(grid, grid.b, "b");
    EnvelopeGrid out = grid;
    if (t1 == t0) return out;
    const double span = t1 - t0;
    const int nsteps = step_count(span, dt);
    const double h = span / nsteps;
    GridStepper st(grid);

    // half propagator, midpoint Duhamel source increment, half propagator;
    // each half is frozen at its own midpoint so the pair stays second order
    auto full_step = [&](CVec& a, CVec& b, double t, double hs) {
        st.strang({&a, &b}, hessE(t + 0.25 * hs), hessW(t + 0.25 * hs), 0.5 * hs);
        const EnvelopeSourceCoeffs c = source(t + 0.5 * hs);
        b += cplx(0.0, -hs) * apply_envelope_source(grid, c, a, st.fft);
        st.strang({&a, &b}, hessE(t + 0.75 * hs), hessW(t + 0.75 * hs), 0.5 * hs);
    };

    if (verify_step) {
        CVec a1 = out.a, b1 = out.b;
        full_step(a1, b1, t0, h);
        CVec a4 = out.a, b4 = out.b;
        for (int q = 0; q < 4; ++q) full_step(a4, b4, t0 + 0.25 * q * h, 0.25 * h);
        const double gap = std::hypot(grid.l2_norm((a1 - a4).eval()), grid.l2_norm((b1 - b4).eval()));
        const double scale = std::max(1.0, std::hypot(grid.l2_norm(out.a), grid.l2_norm(out.b)));
        if (gap > 1e-4 * scale) {
            std::ostringstream os;
            os << "corrector step at dt = " << h << " disagrees with quarter steps by " << gap;
            throw StepTooLarge(os.str());
        }
    }

    for (int s = 0; s < nsteps; ++s) full_step(out.a, out.b, t0 + s * h, h);
    out.t = t1;
    require_boundary_decay(out, out.a, "a");
    require_boundary_decay(out, out.b, "b");
    return out;
}

double sigma_norm(const CVec& samples, const EnvelopeGrid& grid, int l) {
    if (l < 0) throw ConfigError("weighted Sobolev index must be non-negative");
    if (samples.size() != grid.size()) throw GridMismatch("sample count does not match the grid");
    const int d = grid.dim;
    const int n = grid.n_points;
    FftWorkspace fft(d, n);
    CVec fhat = samples;
    fft.forward(fhat);

    int idx[3];
    double total = 0.0;
    for (const IVec& beta : multi_indices(d, l)) {
        CVec df = fhat;
        for (int j = 0; j < grid.size(); ++j) {
            flat_to_axes(j, d, n, idx);
            double m = 1.0;
            for (int ax = 0; ax < d; ++ax)
                for (int k = 0; k < beta[ax]; ++k) m *= grid.frequency(idx[ax]);
            df[j] *= m;
        }
        fft.backward_normalized(df);
        const int remaining = l - beta.sum();
        for (const IVec& alpha : multi_indices(d, remaining)) {
            double s2 = 0.0;
            for (int j = 0; j < grid.size(); ++j) {
                flat_to_axes(j, d, n, idx);
                double w = 1.0;
                for (int ax = 0; ax < d; ++ax)
                    for (int k = 0; k < alpha[ax]; ++k) w *= grid.coord(idx[ax]);
                s2 += std::norm(w * df[j]);
            }
            total += std::sqrt(s2 * grid.cell_volume());
        }
    }
    return total;
}

EnvelopeMoments envelope_moments(const EnvelopeGrid& grid) {
    const int d = grid.dim;
    const int total = grid.size();
    const double vol = grid.cell_volume();
    FftWorkspace fft(d, grid.n_points);

    // spectral derivative fields of a and b
    CVec ahat = grid.a;
    fft.forward(ahat);
    CVec bhat = grid.b;
    fft.forward(bhat);
    std::vector<CVec> da(d), db(d);
    int idx[3];
    for (int ax = 0; ax < d; ++ax) {
        CVec ha = ahat, hb = bhat;
        for (int j = 0; j < total; ++j) {
            flat_to_axes(j, d, grid.n_points, idx);
            const double xi = grid.frequency(idx[ax]);
            ha[j] *= xi;
            hb[j] *= xi;
        }
        fft.backward_normalized(ha);
        fft.backward_normalized(hb);
        da[ax] = std::move(ha);
        db[ax] = std::move(hb);
    }

    EnvelopeMoments m;
    m.mean_y = Vec::Zero(d);
    m.mean_xi = Vec::Zero(d);
    m.second_y = Mat::Zero(d, d);
    m.second_xi = Mat::Zero(d, d);
    m.mixed_y = Vec::Zero(d);
    m.mixed_xi = Vec::Zero(d);

    for (int j = 0; j < total; ++j) {
        const Vec y = grid.point(j);
        const double aa = std::norm(grid.a[j]);
        const double ab2 = 2.0 * std::real(std::conj(grid.a[j]) * grid.b[j]);
        m.norm_a_sq += aa;
        m.pairing += ab2;
        for (int p = 0; p < d; ++p) {
            m.mean_y[p] += y[p] * aa;
            m.mixed_y[p] += y[p] * ab2;
            for (int q = 0; q < d; ++q) m.second_y(p, q) += y[p] * y[q] * aa;
        }
    }
    m.norm_a_sq *= vol;
    m.pairing *= vol;
    m.mean_y *= vol;
    m.mixed_y *= vol;
    m.second_y *= vol;

    for (int p = 0; p < d; ++p) {
        const cplx mean = grid.a.dot(da[p]) * vol;
        m.mean_xi[p] = mean.real();
        m.imag_residue = std::max(m.imag_residue, std::abs(mean.imag()));
        m.mixed_xi[p] = 2.0 * (grid.a.dot(db[p]) * vol).real();
        for (int q = 0; q < d; ++q) m.second_xi(p, q) = (da[p].dot(da[q]) * vol).real();
    }
    return m;
}

}  // namespace bloch
