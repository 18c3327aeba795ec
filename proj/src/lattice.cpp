#include <blochpack/lattice.hpp>

#include <algorithm>
#include <cmath>

namespace bloch {

LatticeSpec LatticeSpec::from_direct(const Mat& generators) {
    const int d = static_cast<int>(generators.rows());
    if (d < 1 || d > 3 || generators.cols() != d)
        throw SingularLattice("direct generators must form a d x d matrix, d in 1..3");
    const double det = generators.determinant();
    double scale = 0.0;
    for (int j = 0; j < d; ++j) scale = std::max(scale, generators.col(j).norm());
    if (std::abs(det) < 1e-12 * std::pow(scale, d))
        throw SingularLattice("direct generators are numerically singular, |det| = " +
                              std::to_string(det));
    LatticeSpec lat;
    lat.dim = d;
    lat.direct = generators;
    lat.dual = 2.0 * kPi * generators.inverse().transpose();
    lat.cell_volume_direct = std::abs(det);
    lat.cell_volume_dual = std::abs(lat.dual.determinant());
    return lat;
}

LatticeSpec LatticeSpec::cubic(int d, double a) {
    return from_direct(Mat::Identity(d, d) * a);
}

ReciprocalModes enumerate_reciprocal(const LatticeSpec& lat, double cutoff) {
    const int d = lat.dim;
    // |m_i| = |v_i . G| / (2 pi) <= ||v_i|| cutoff / (2 pi) bounds the search box
    IVec box(d);
    for (int i = 0; i < d; ++i)
        box[i] = static_cast<int>(std::floor(lat.direct.col(i).norm() * cutoff / (2.0 * kPi))) + 1;

    std::vector<IVec> kept;
    IVec m = -box;
    const double limit = cutoff * (1.0 + 1e-12);
    while (true) {
        Vec G = lat.dual * m.cast<double>();
        if (G.norm() <= limit) kept.push_back(m);
        // lexicographic odometer, last index fastest
        int axis = d - 1;
        while (axis >= 0) {
            if (++m[axis] <= box[axis]) break;
            m[axis] = -box[axis];
            --axis;
        }
        if (axis < 0) break;
    }

    ReciprocalModes modes;
    modes.m.resize(d, static_cast<int>(kept.size()));
    modes.G.resize(d, static_cast<int>(kept.size()));
    for (size_t j = 0; j < kept.size(); ++j) {
        modes.m.col(static_cast<int>(j)) = kept[j];
        modes.G.col(static_cast<int>(j)) = lat.dual * kept[j].cast<double>();
        if (kept[j].isZero()) modes.index_of_zero = static_cast<int>(j);
    }
    return modes;
}

FoldResult fold_to_bz(const LatticeSpec& lat, const Vec& p) {
    // dual coordinates t = B^{-1} p, folded per component into (-1/2, 1/2]
    Vec t = lat.dual.colPivHouseholderQr().solve(p);
    IVec shift(lat.dim);
    for (int i = 0; i < lat.dim; ++i) shift[i] = static_cast<int>(std::ceil(t[i] - 0.5));
    FoldResult r;
    r.shift = shift;
    r.p_folded = p - lat.dual * shift.cast<double>();
    return r;
}

PeriodicPotential::PeriodicPotential(const LatticeSpec& lat,
                                     const std::vector<std::pair<IVec, cplx>>& coefficients)
    : lat_(lat), coeff_(coefficients) {
    for (size_t i = 0; i < coeff_.size(); ++i) {
        const auto& [m, v] = coeff_[i];
        if (m.size() != lat_.dim)
            throw ConfigError("periodic potential index dimension mismatch");
        for (size_t j = i + 1; j < coeff_.size(); ++j)
            if (coeff_[j].first == m)
                throw ConfigError("duplicate periodic potential index");
        const cplx partner = coefficient(-m);
        if (std::abs(partner - std::conj(v)) > 1e-12 * (1.0 + std::abs(v)))
            throw ConfigError(
                "periodic potential coefficients are not Hermitian-symmetric; "
                "V must be real-valued");
    }
}

cplx PeriodicPotential::coefficient(const IVec& m) const {
    for (const auto& [mi, v] : coeff_)
        if (mi == m) return v;
    return {0.0, 0.0};
}

double PeriodicPotential::eval(const Vec& z) const {
    cplx acc = 0.0;
    for (const auto& [m, v] : coeff_) {
        const Vec G = lat_.dual * m.cast<double>();
        acc += v * std::exp(cplx(0.0, G.dot(z)));
    }
    return acc.real();  // imaginary part cancels by Hermitian symmetry
}

double PeriodicPotential::max_index_norm() const {
    double r = 0.0;
    for (const auto& [m, v] : coeff_) r = std::max(r, (lat_.dual * m.cast<double>()).norm());
    return r;
}

PeriodicPotential PeriodicPotential::single_cosine(const LatticeSpec& lat, double amplitude) {
    IVec e1 = IVec::Zero(lat.dim);
    e1[0] = 1;
    std::vector<std::pair<IVec, cplx>> c = {{e1, amplitude / 2.0}, {-e1, amplitude / 2.0}};
    return PeriodicPotential(lat, c);
}

ExternalPotential ExternalPotential::zero(int d) {
    ExternalPotential w;
    w.kind_ = Kind::zero;
    w.dim_ = d;
    return w;
}

ExternalPotential ExternalPotential::quadratic(double c0, const Vec& g, const Mat& H) {
    ExternalPotential w;
    w.kind_ = Kind::quadratic;
    w.dim_ = static_cast<int>(g.size());
    w.c0_ = c0;
    w.g_ = g;
    w.H_ = 0.5 * (H + H.transpose());  // symmetrize; only the symmetric part acts
    return w;
}

ExternalPotential ExternalPotential::cosine_sum(const std::vector<double>& kappa,
                                                const std::vector<Vec>& k,
                                                const std::vector<double>& phi) {
    if (kappa.size() != k.size() || kappa.size() != phi.size() || kappa.empty())
        throw ConfigError("cosine_sum needs equally many amplitudes, wavevectors, phases");
    ExternalPotential w;
    w.kind_ = Kind::cosine_sum;
    w.dim_ = static_cast<int>(k[0].size());
    w.kappa_ = kappa;
    w.k_ = k;
    w.phi_ = phi;
    return w;
}

ExternalPotential ExternalPotential::gaussian_well(double depth, const Vec& x0, double sigma) {
    if (sigma <= 0.0) throw ConfigError("gaussian_well needs sigma > 0");
    ExternalPotential w;
    w.kind_ = Kind::gaussian_well;
    w.dim_ = static_cast<int>(x0.size());
    w.depth_ = depth;
    w.x0_ = x0;
    w.sigma_ = sigma;
    return w;
}

namespace {

// d^r/dt^r cos(t) evaluated via the 4-cycle
double cos_deriv(int r, double t) {
    switch (r % 4) {
        case 0: return std::cos(t);
        case 1: return -std::sin(t);
        case 2: return -std::cos(t);
        default: return std::sin(t);
    }
}

// probabilists' Hermite polynomials He_r, giving the exact axis-wise
// derivatives of the Gaussian factor: d^r/dt^r e^{-t^2/2} = (-1)^r He_r(t) e^{-t^2/2}
double hermite(int r, double t) {
    switch (r) {
        case 0: return 1.0;
        case 1: return t;
        case 2: return t * t - 1.0;
        case 3: return t * (t * t - 3.0);
        case 4: return t * t * (t * t - 6.0) + 3.0;
        default: throw UnsupportedOrder("hermite order beyond 4");
    }
}

}  // namespace

double ExternalPotential::value(const Vec& x) const {
    switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::quadratic: return c0_ + g_.dot(x) + 0.5 * x.dot(H_ * x);
        case Kind::cosine_sum: {
            double s = 0.0;
            for (size_t j = 0; j < kappa_.size(); ++j)
                s += kappa_[j] * std::cos(k_[j].dot(x) + phi_[j]);
            return s;
        }
        case Kind::gaussian_well: {
            const Vec t = (x - x0_) / sigma_;
            return -depth_ * std::exp(-0.5 * t.squaredNorm());
        }
    }
    return 0.0;
}

Vec ExternalPotential::grad(const Vec& x) const {
    Vec g = Vec::Zero(dim_);
    switch (kind_) {
        case Kind::zero: break;
        case Kind::quadratic: g = g_ + H_ * x; break;
        case Kind::cosine_sum:
            for (size_t j = 0; j < kappa_.size(); ++j)
                g += kappa_[j] * cos_deriv(1, k_[j].dot(x) + phi_[j]) * k_[j];
            break;
        case Kind::gaussian_well: {
            const Vec t = (x - x0_) / sigma_;
            const double f = -depth_ * std::exp(-0.5 * t.squaredNorm());
            for (int i = 0; i < dim_; ++i) g[i] = f * (-hermite(1, t[i])) / sigma_;
            break;
        }
    }
    return g;
}

Mat ExternalPotential::hess(const Vec& x) const {
    Mat h = Mat::Zero(dim_, dim_);
    switch (kind_) {
        case Kind::zero: break;
        case Kind::quadratic: h = H_; break;
        case Kind::cosine_sum:
            for (size_t j = 0; j < kappa_.size(); ++j)
                h += kappa_[j] * cos_deriv(2, k_[j].dot(x) + phi_[j]) * (k_[j] * k_[j].transpose());
            break;
        case Kind::gaussian_well: {
            const Vec t = (x - x0_) / sigma_;
            const double f = -depth_ * std::exp(-0.5 * t.squaredNorm());
            for (int i = 0; i < dim_; ++i)
                for (int jj = 0; jj < dim_; ++jj) {
                    const double hi = (i == jj) ? hermite(2, t[i]) : hermite(1, t[i]) * hermite(1, t[jj]);
                    h(i, jj) = f * hi / (sigma_ * sigma_);
                }
            break;
        }
    }
    return h;
}

Tensor3 ExternalPotential::third(const Vec& x) const {
    Tensor3 T(dim_);
    switch (kind_) {
        case Kind::zero:
        case Kind::quadratic: break;
        case Kind::cosine_sum:
            for (size_t j = 0; j < kappa_.size(); ++j) {
                const double c = kappa_[j] * cos_deriv(3, k_[j].dot(x) + phi_[j]);
                for (int a = 0; a < dim_; ++a)
                    for (int b = 0; b < dim_; ++b)
                        for (int c2 = 0; c2 < dim_; ++c2)
                            T(a, b, c2) += c * k_[j][a] * k_[j][b] * k_[j][c2];
            }
            break;
        case Kind::gaussian_well: {
            const Vec t = (x - x0_) / sigma_;
            const double f = -depth_ * std::exp(-0.5 * t.squaredNorm());
            const double s3 = sigma_ * sigma_ * sigma_;
            for (int a = 0; a < dim_; ++a)
                for (int b = 0; b < dim_; ++b)
                    for (int c2 = 0; c2 < dim_; ++c2) {
                        IVec pow = IVec::Zero(dim_);
                        pow[a] += 1; pow[b] += 1; pow[c2] += 1;
                        double prod = 1.0;
                        for (int i = 0; i < dim_; ++i) prod *= hermite(pow[i], t[i]);
                        // sign (-1)^{|alpha|} with |alpha| = 3
                        T(a, b, c2) = -f * prod / s3;
                    }
            break;
        }
    }
    return T;
}

Tensor4 ExternalPotential::fourth(const Vec& x) const {
    Tensor4 T(dim_);
    switch (kind_) {
        case Kind::zero:
        case Kind::quadratic: break;
        case Kind::cosine_sum:
            for (size_t j = 0; j < kappa_.size(); ++j) {
                const double c = kappa_[j] * cos_deriv(4, k_[j].dot(x) + phi_[j]);
                for (int a = 0; a < dim_; ++a)
                    for (int b = 0; b < dim_; ++b)
                        for (int c2 = 0; c2 < dim_; ++c2)
                            for (int e = 0; e < dim_; ++e)
                                T(a, b, c2, e) += c * k_[j][a] * k_[j][b] * k_[j][c2] * k_[j][e];
            }
            break;
        case Kind::gaussian_well: {
            const Vec t = (x - x0_) / sigma_;
            const double f = -depth_ * std::exp(-0.5 * t.squaredNorm());
            const double s4 = sigma_ * sigma_ * sigma_ * sigma_;
            for (int a = 0; a < dim_; ++a)
                for (int b = 0; b < dim_; ++b)
                    for (int c2 = 0; c2 < dim_; ++c2)
                        for (int e = 0; e < dim_; ++e) {
                            IVec pow = IVec::Zero(dim_);
                            pow[a] += 1; pow[b] += 1; pow[c2] += 1; pow[e] += 1;
                            double prod = 1.0;
                            for (int i = 0; i < dim_; ++i) prod *= hermite(pow[i], t[i]);
                            T(a, b, c2, e) = f * prod / s4;
                        }
            break;
        }
    }
    return T;
}

WDerivative eval_W_derivatives(const ExternalPotential& W, const Vec& x, int order) {
    switch (order) {
        case 0: return W.value(x);
        case 1: return W.grad(x);
        case 2: return W.hess(x);
        case 3: return W.third(x);
        case 4: return W.fourth(x);
        default:
            throw UnsupportedOrder("external potential derivatives supported to order 4, got " +
                                   std::to_string(order));
    }
}

}  // namespace bloch
