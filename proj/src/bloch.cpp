#include <blochpack/bloch.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>

namespace bloch {

BlochTruncation BlochTruncation::make(const LatticeSpec& lat, double cutoff) {
    if (cutoff <= 0.0) throw ConfigError("truncation cutoff must be positive");
    BlochTruncation t;
    t.lattice = lat;
    t.modes = enumerate_reciprocal(lat, cutoff);
    t.cutoff = cutoff;
    return t;
}

namespace {

// packed integer key for reciprocal index lookup (components fit in 16 bits
// at any realistic cutoff)
int64_t pack_index(const IVec& m) {
    int64_t key = 0;
    for (int i = 0; i < m.size(); ++i) key = (key << 16) | static_cast<uint16_t>(m[i] + 32768);
    return key;
}

std::unordered_map<int64_t, int> index_table(const ReciprocalModes& modes) {
    std::unordered_map<int64_t, int> table;
    table.reserve(modes.count());
    for (int j = 0; j < modes.count(); ++j) table[pack_index(modes.m.col(j))] = j;
    return table;
}

// rotate column n (0-based) so coefficient `pin` is real positive
void fix_phase(CMat& vectors, int col, int pin) {
    const cplx c = vectors(pin, col);
    const double mag = std::abs(c);
    if (mag < 1e-14) throw EigensolverFailure("gauge anchor coefficient vanished");
    vectors.col(col) *= std::conj(c) / mag;
}

int argmax_coefficient(const CMat& vectors, int col) {
    // strict > scan in enumeration order = lexicographic tie-break
    int best = 0;
    double best_mag = std::abs(vectors(0, col));
    for (int i = 1; i < vectors.rows(); ++i) {
        const double m = std::abs(vectors(i, col));
        if (m > best_mag) {
            best_mag = m;
            best = i;
        }
    }
    return best;
}

}  // namespace

CMat assemble_bloch_matrix(const PeriodicPotential& V, const BlochTruncation& trunc,
                           const Vec& p) {
    if (!V.empty() && (V.lattice().dual - trunc.lattice.dual).norm() >
                          1e-12 * trunc.lattice.dual.norm())
        throw TruncationMismatch("truncation built on a different lattice than the potential");
    const int n = trunc.size();
    CMat H = CMat::Zero(n, n);
    for (int j = 0; j < n; ++j) {
        const Vec pG = p + trunc.modes.G.col(j);
        H(j, j) = 0.5 * pG.squaredNorm();
    }
    if (!V.empty()) {
        auto table = index_table(trunc.modes);
        for (const auto& [m, v] : V.coefficients()) {
            // vhat_m couples G' = G - m*b to G: entry (row G, col G') += vhat_{G-G'}
            for (int col = 0; col < n; ++col) {
                IVec target = trunc.modes.m.col(col) + m;
                auto it = table.find(pack_index(target));
                if (it != table.end()) H(it->second, col) += v;
            }
        }
    }
    return H;
}

BlochSlice solve_bands(const PeriodicPotential& V, const BlochTruncation& trunc, const Vec& p,
                       int n_max, Gauge gauge, int pin_override, int pin_band) {
    const int n = trunc.size();
    if (n_max < 1 || n_max > n)
        throw ConfigError("requested band count outside the truncated space");
    CMat H = assemble_bloch_matrix(V, trunc, p);
    Eigen::SelfAdjointEigenSolver<CMat> es(H);
    if (es.info() != Eigen::Success) throw EigensolverFailure("dense Bloch eigensolve failed");

    BlochSlice s;
    s.p = p;
    s.gauge = gauge;
    s.energies_full = es.eigenvalues();
    s.vectors_full = es.eigenvectors();
    s.energies = s.energies_full.head(n_max);
    s.vectors = s.vectors_full.leftCols(n_max);
    s.pins = IVec::Constant(n_max, -1);

    for (int b = 0; b < n_max; ++b) {
        int pin;
        if (pin_override >= 0 && b == pin_band - 1) {
            // Only the tracked band needs the externally anchored gauge; the
            // other columns enter band-n quantities through phase-invariant
            // projectors and may legitimately vanish at that coefficient.
            pin = pin_override;
        } else if (pin_override < 0 && gauge == Gauge::zero_mode) {
            pin = trunc.modes.index_of_zero;
            if (std::abs(s.vectors(pin, b)) < 1e-6)
                throw OverlapTooSmall(
                    "zero-mode coefficient too small to anchor the zero_mode gauge");
        } else {
            pin = argmax_coefficient(s.vectors, b);
        }
        fix_phase(s.vectors, b, pin);
        s.pins[b] = pin;
        s.vectors_full.col(b) = s.vectors.col(b);
    }

    s.gaps = Vec(n_max);
    for (int b = 0; b < n_max; ++b) {
        double gap = std::numeric_limits<double>::infinity();
        if (b > 0) gap = std::min(gap, s.energies_full[b] - s.energies_full[b - 1]);
        if (b + 1 < n) gap = std::min(gap, s.energies_full[b + 1] - s.energies_full[b]);
        s.gaps[b] = gap;
    }

    // Galerkin residual sanity on the exposed columns
    for (int b = 0; b < n_max; ++b) {
        const double r = (H * s.vectors.col(b) - s.energies[b] * s.vectors.col(b)).norm();
        if (r > 1e-10 * (1.0 + std::abs(s.energies[b])))
            throw EigensolverFailure("eigenpair residual exceeds tolerance");
    }
    return s;
}

void require_gap(const BlochSlice& slice, int n, double threshold) {
    const double gap = slice.gaps[n - 1];
    const double E = slice.energies[n - 1];
    if (gap < 1e-10 * (1.0 + std::abs(E)))
        throw DegenerateBand("band " + std::to_string(n) + " is degenerate at the sampled p");
    if (gap < threshold)
        throw GapBelowThreshold(n, gap,
                                "band " + std::to_string(n) + " gap " + std::to_string(gap) +
                                    " below threshold " + std::to_string(threshold));
}

Vec grad_E_hellmann_feynman(const BlochTruncation& trunc, const BlochSlice& slice, int n) {
    // <chi, (p - i grad_z) chi> = sum_G (p+G) |c_G|^2, exactly real in coefficient space
    const int d = trunc.lattice.dim;
    Vec g = Vec::Zero(d);
    const CVec& c = slice.vectors.col(n - 1);
    for (int j = 0; j < trunc.size(); ++j) {
        const double w = std::norm(c[j]);
        g += w * (slice.p + trunc.modes.G.col(j));
    }
    return g;
}

GradChi grad_p_chi(const BlochTruncation& trunc, const BlochSlice& slice, int n) {
    const int d = trunc.lattice.dim;
    const int nm = trunc.size();
    const CVec& c = slice.vectors.col(n - 1);
    const double En = slice.energies[n - 1];
    const Vec gradE = grad_E_hellmann_feynman(trunc, slice, n);

    GradChi out;
    out.d_chi_perp = CMat::Zero(nm, d);
    out.d_chi = CMat::Zero(nm, d);
    out.connection = Vec::Zero(d);

    // resolvent on the orthogonal complement of band n, via the full eigenbasis:
    // P_perp grad_p chi = -[H - E_n]^{-1} P_perp (p - i grad_z - grad_p E) chi
    for (int alpha = 0; alpha < d; ++alpha) {
        CVec r(nm);
        for (int j = 0; j < nm; ++j)
            r[j] = (slice.p[alpha] + trunc.modes.G(alpha, j) - gradE[alpha]) * c[j];
        CVec u = CVec::Zero(nm);
        for (int m = 0; m < nm; ++m) {
            if (m == n - 1) continue;
            const cplx amp = slice.vectors_full.col(m).dot(r);  // <chi_m, r>
            u -= slice.vectors_full.col(m) * (amp / (slice.energies_full[m] - En));
        }
        out.d_chi_perp.col(alpha) = u;
    }

    // parallel part from the gauge anchor: keeping coefficient k* real positive
    // forces <chi, d chi> = -i A with A = Im[(P_perp d chi)_{k*}] / c_{k*}
    const int pin = slice.pins[n - 1];
    if (pin < 0)
        throw GaugeMismatch("grad_p_chi needs an anchored gauge, not a transported slice");
    const double cpin = c[pin].real();
    double residue = std::abs(c[pin].imag());
    if (std::abs(cpin) < 1e-6)
        throw OverlapTooSmall("gauge anchor coefficient too small for a stable connection");
    for (int alpha = 0; alpha < d; ++alpha) {
        out.connection[alpha] = out.d_chi_perp(pin, alpha).imag() / cpin;
        out.d_chi.col(alpha) =
            out.d_chi_perp.col(alpha) - cplx(0.0, out.connection[alpha]) * c;
        residue = std::max(residue, std::abs(c.dot(out.d_chi_perp.col(alpha))));
    }
    out.imag_residue = residue;
    return out;
}

BlochSlice transport_gauge(const BlochSlice& prev, const BlochSlice& next, int n) {
    if (prev.vectors.rows() != next.vectors.rows())
        throw TruncationMismatch("transport_gauge slices use different truncations");
    const cplx ov = prev.vectors.col(n - 1).dot(next.vectors.col(n - 1));
    if (std::abs(ov) <= 0.5)
        throw OverlapTooSmall("band overlap " + std::to_string(std::abs(ov)) +
                              " <= 0.5 between transport points (crossing suspected)");
    BlochSlice out = next;
    const cplx phase = std::conj(ov) / std::abs(ov);
    out.vectors.col(n - 1) *= phase;
    out.vectors_full.col(n - 1) *= phase;
    out.gauge = Gauge::parallel;
    out.pins[n - 1] = -1;
    return out;
}

Mat berry_curvature_resolvent(const BlochTruncation& trunc, const BlochSlice& slice, int n) {
    const int d = trunc.lattice.dim;
    const int nm = trunc.size();
    Mat F = Mat::Zero(d, d);
    if (d < 2) return F;
    const CVec& c = slice.vectors.col(n - 1);
    const double En = slice.energies[n - 1];

    // t_{alpha,m} = <chi_m, dH/dp_alpha chi_n>, dH/dp_alpha = diag(p_alpha + G_alpha)
    CMat a(nm, d);
    for (int alpha = 0; alpha < d; ++alpha)
        for (int j = 0; j < nm; ++j)
            a(j, alpha) = (slice.p[alpha] + trunc.modes.G(alpha, j)) * c[j];
    CMat t = slice.vectors_full.adjoint() * a;  // nm x d

    for (int alpha = 0; alpha < d; ++alpha)
        for (int beta = alpha + 1; beta < d; ++beta) {
            double f = 0.0;
            for (int m = 0; m < nm; ++m) {
                if (m == n - 1) continue;
                const double dE = En - slice.energies_full[m];
                f += (-2.0) * std::imag(std::conj(t(m, alpha)) * t(m, beta)) / (dE * dE);
            }
            F(alpha, beta) = f;
            F(beta, alpha) = -f;
        }
    return F;
}

Mat berry_curvature_plaquette(const PeriodicPotential& V, const BlochTruncation& trunc,
                              const Vec& p, int n, double h) {
    const int d = trunc.lattice.dim;
    Mat F = Mat::Zero(d, d);
    if (d < 2) return F;
    for (int alpha = 0; alpha < d; ++alpha)
        for (int beta = alpha + 1; beta < d; ++beta) {
            Vec ea = Vec::Zero(d), eb = Vec::Zero(d);
            ea[alpha] = h;
            eb[beta] = h;
            // loop centered on p; the Wilson-loop phase equals the flux through
            // the plaquette up to O(h^2)
            const Vec c00 = p - 0.5 * ea - 0.5 * eb;
            const Vec c10 = c00 + ea;
            const Vec c11 = c00 + ea + eb;
            const Vec c01 = c00 + eb;
            auto chi = [&](const Vec& q) {
                return solve_bands(V, trunc, q, n).vectors.col(n - 1).eval();
            };
            const CVec x00 = chi(c00), x10 = chi(c10), x11 = chi(c11), x01 = chi(c01);
            const cplx loop =
                x00.dot(x10) * x10.dot(x11) * x11.dot(x01) * x01.dot(x00);
            const double f = -std::arg(loop) / (h * h);
            F(alpha, beta) = f;
            F(beta, alpha) = -f;
        }
    return F;
}

BandDerivatives band_derivatives(const PeriodicPotential& V, const BlochTruncation& trunc,
                                 const Vec& p, const BandOptions& opt) {
    const int d = trunc.lattice.dim;
    const int n = opt.band;
    const double bscale = trunc.lattice.dual.col(0).norm();
    const double h = opt.fd_step_rel * bscale;
    const double h3 = opt.third_step_rel * bscale;
    const int n_max = opt.n_max > 0 ? opt.n_max : std::min(n + 4, trunc.size());

    BlochSlice center = solve_bands(V, trunc, p, n_max, opt.gauge);
    require_gap(center, n, opt.gap_threshold);
    const int pin = center.pins[n - 1];

    // every stencil slice shares the center's gauge anchor so the connection is
    // sampled in one smooth local gauge
    auto stencil = [&](const Vec& q) {
        BlochSlice s = solve_bands(V, trunc, q, n_max, opt.gauge, pin, n);
        require_gap(s, n, opt.gap_threshold);
        return s;
    };
    auto grad_at = [&](const BlochSlice& s) { return grad_E_hellmann_feynman(trunc, s, n); };

    BandDerivatives out;
    out.p = p;
    out.band = n;
    out.E = center.energies[n - 1];
    out.gap = center.gaps[n - 1];
    out.grad_E = grad_at(center);

    GradChi gc = grad_p_chi(trunc, center, n);
    out.berry_connection = gc.connection;
    out.connection_imag_residue = gc.imag_residue;

    // Hessian and connection derivative from +-h stencils, Richardson check at h/2
    Mat hess_h(d, d), hess_h2(d, d);
    out.d_connection = Mat::Zero(d, d);
    std::vector<Vec> gp(d), gm(d);  // gradients at +-h3, reused by the third derivative
    for (int alpha = 0; alpha < d; ++alpha) {
        Vec e = Vec::Zero(d);
        e[alpha] = 1.0;
        const BlochSlice sp = stencil(p + h * e), sm = stencil(p - h * e);
        const BlochSlice sp2 = stencil(p + 0.5 * h * e), sm2 = stencil(p - 0.5 * h * e);
        hess_h.col(alpha) = (grad_at(sp) - grad_at(sm)) / (2.0 * h);
        hess_h2.col(alpha) = (grad_at(sp2) - grad_at(sm2)) / h;
        const Vec Ap = grad_p_chi(trunc, sp, n).connection;
        const Vec Am = grad_p_chi(trunc, sm, n).connection;
        out.d_connection.row(alpha) = ((Ap - Am) / (2.0 * h)).transpose();
        gp[alpha] = grad_at(stencil(p + h3 * e));
        gm[alpha] = grad_at(stencil(p - h3 * e));
    }
    out.hess_fd_residual = (hess_h - hess_h2).cwiseAbs().maxCoeff();
    out.hess_asymmetry = (hess_h2 - hess_h2.transpose()).cwiseAbs().maxCoeff();
    out.hess_E = 0.5 * (hess_h2 + hess_h2.transpose());

    // third derivative: second differences of the Hellmann-Feynman gradient
    Tensor3 T(d);
    const Vec g0 = out.grad_E;
    for (int beta = 0; beta < d; ++beta) {
        const Vec diag2 = (gp[beta] - 2.0 * g0 + gm[beta]) / (h3 * h3);
        for (int alpha = 0; alpha < d; ++alpha) T(alpha, beta, beta) = diag2[alpha];
        for (int gamma = beta + 1; gamma < d; ++gamma) {
            Vec eb = Vec::Zero(d), eg = Vec::Zero(d);
            eb[beta] = h3;
            eg[gamma] = h3;
            const Vec gpp = grad_at(stencil(p + eb + eg));
            const Vec gpm = grad_at(stencil(p + eb - eg));
            const Vec gmp = grad_at(stencil(p - eb + eg));
            const Vec gmm = grad_at(stencil(p - eb - eg));
            const Vec cross = (gpp - gpm - gmp + gmm) / (4.0 * h3 * h3);
            for (int alpha = 0; alpha < d; ++alpha) {
                T(alpha, beta, gamma) = cross[alpha];
                T(alpha, gamma, beta) = cross[alpha];
            }
        }
    }
    out.third_asymmetry = T.max_asymmetry();
    // store the permutation-symmetrized tensor; exact symmetry is what the
    // conservation identities of the coupled system rely on
    Tensor3 Tsym(d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            for (int c = 0; c < d; ++c)
                Tsym(a, b, c) = (T(a, b, c) + T(a, c, b) + T(b, a, c) + T(b, c, a) +
                                 T(c, a, b) + T(c, b, a)) /
                                6.0;
    out.third_E = Tsym;

    out.berry_curvature = berry_curvature_resolvent(trunc, center, n);
    out.berry_curvature_plaquette =
        berry_curvature_plaquette(V, trunc, p, n, opt.plaquette_step_rel * bscale);
    if (d >= 2) {
        // tripwire against gross method disagreement (gauge or sign errors);
        // the unit scale floor keeps plaquette discretization noise from
        // tripping it at low-curvature points of the zone
        const double scale = std::max(out.berry_curvature.cwiseAbs().maxCoeff(), 1.0);
        const double gap2 =
            (out.berry_curvature - out.berry_curvature_plaquette).cwiseAbs().maxCoeff();
        if (gap2 > opt.curvature_tol * scale)
            throw CurvatureMethodMismatch(
                "plaquette and resolvent curvature disagree: |dF| = " + std::to_string(gap2) +
                " against scale " + std::to_string(scale));
    }
    return out;
}

BandModel::BandModel(const PeriodicPotential& V, double cutoff, const BandOptions& opt)
    : V_(V), trunc_(BlochTruncation::make(V.lattice(), cutoff)), opt_(opt) {
    if (opt_.band < 1) throw ConfigError("band index is 1-based");
    if (opt_.n_max == 0) opt_.n_max = std::min(opt_.band + 4, trunc_.size());
}

BlochSlice BandModel::slice(const Vec& p) const {
    BlochSlice s = solve_bands(V_, trunc_, p, opt_.n_max, opt_.gauge);
    require_gap(s, opt_.band, opt_.gap_threshold);
    return s;
}

std::shared_ptr<const BandDerivatives> BandModel::derivs(const Vec& p) const {
    // key on p rounded to 1e-12 so revisited trajectory points hit the cache
    std::string key(sizeof(int64_t) * p.size(), '\0');
    for (int i = 0; i < p.size(); ++i) {
        const int64_t q = static_cast<int64_t>(std::llround(p[i] * 1e12));
        std::memcpy(key.data() + i * sizeof(int64_t), &q, sizeof(int64_t));
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto value = std::make_shared<const BandDerivatives>(band_derivatives(V_, trunc_, p, opt_));
    std::lock_guard<std::mutex> lock(mu_);
    auto [it, inserted] = cache_.emplace(std::move(key), std::move(value));
    return it->second;
}

}  // namespace bloch
