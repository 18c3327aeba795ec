#include <blochpack/dynamics.hpp>
#include <blochpack/errors.hpp>

#include <cmath>
#include <sstream>

namespace bloch {

namespace {

// second moments of the envelope in the two representations; raw quadrature
// pairings, which coincide with expectations for a unit-norm envelope
struct SecondMoments {
    Mat Y;   // <y y^T>
    Mat Xi;  // <xi xi^T>
};

SecondMoments moments_of(const ParticleFieldState& s) {
    SecondMoments m;
    if (s.env) {
        m.Y = 0.5 * (s.env->A * s.env->A.adjoint()).real();
        m.Xi = 0.5 * (s.env->B * s.env->B.adjoint()).real();
    } else if (s.grid) {
        const EnvelopeMoments em = envelope_moments(*s.grid);
        m.Y = em.second_y;
        m.Xi = em.second_xi;
    } else {
        throw EnvelopeUnavailable("state carries no envelope but epsilon-corrections need one");
    }
    return m;
}

struct ParticleFlow {
    Vec q_dot, p_dot;
    double S_dot = 0.0, phi_dot = 0.0;
    Vec Qs_dot, Ps_dot;
};

struct ParticleVars {
    Vec q, p;
    double S = 0.0, phi = 0.0;
    Vec Qs, Ps;
};

ParticleVars axpy(const ParticleVars& y, double c, const ParticleFlow& k) {
    ParticleVars out = y;
    out.q += c * k.q_dot;
    out.p += c * k.p_dot;
    out.S += c * k.S_dot;
    out.phi += c * k.phi_dot;
    out.Qs += c * k.Qs_dot;
    out.Ps += c * k.Ps_dot;
    return out;
}

struct GaussVars {
    ParticleVars pv;
    CMat A, B;
};

struct GaussFlow {
    ParticleFlow pf;
    CMat A_dot, B_dot;
};

GaussVars axpy(const GaussVars& y, double c, const GaussFlow& k) {
    GaussVars out;
    out.pv = axpy(y.pv, c, k.pf);
    out.A = y.A + c * k.A_dot;
    out.B = y.B + c * k.B_dot;
    return out;
}

}  // namespace

Vec anomalous_velocity(const Vec& P, const Vec& P_dot, const Mat& curvature) {
    const int d = static_cast<int>(P.size());
    if (P_dot.size() != d || curvature.rows() != d || curvature.cols() != d)
        throw ConfigError("anomalous velocity arguments have inconsistent dimensions");
    Vec v = Vec::Zero(d);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) v[a] -= P_dot[b] * curvature(a, b);
    if (d == 3) {
        // cross-product form with the curvature pseudovector Omega = curl(A)
        const Vec omega =
            (Vec(3) << curvature(1, 2), curvature(2, 0), curvature(0, 1)).finished();
        const Vec cross = (Vec(3) << omega[1] * P_dot[2] - omega[2] * P_dot[1],
                           omega[2] * P_dot[0] - omega[0] * P_dot[2],
                           omega[0] * P_dot[1] - omega[1] * P_dot[0])
                              .finished();
        if ((v - cross).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + v.cwiseAbs().maxCoeff()))
            throw CurvatureMethodMismatch(
                "index contraction and cross-product anomalous velocities disagree");
    }
    return v;
}

CoupledSystem::CoupledSystem(std::shared_ptr<BandModel> model, ExternalPotential W)
    : model_(std::move(model)), W_(std::move(W)) {
    if (!model_) throw ConfigError("coupled system needs a band model");
    if (W_.kind() != ExternalPotential::Kind::zero && W_.dim() != model_->dim())
        throw ConfigError("external potential dimension does not match the lattice");
}

ParticleFieldState CoupledSystem::initial_state(const Vec& q0, const Vec& p0,
                                                double epsilon) const {
    if (q0.size() != dim() || p0.size() != dim())
        throw ConfigError("initial data dimension does not match the lattice");
    if (epsilon < 0.0) throw ConfigError("epsilon must be non-negative");
    ParticleFieldState s;
    s.t = 0.0;
    s.q = q0;
    s.p = p0;
    s.Qs = q0;
    s.P = p0;
    s.Q = q0 + epsilon * model_->derivs(p0)->berry_connection;
    s.epsilon = epsilon;
    return s;
}

ParticleFieldState CoupledSystem::initial_state(const Vec& q0, const Vec& p0, double epsilon,
                                                const GaussianEnvelope& env) const {
    ParticleFieldState s = initial_state(q0, p0, epsilon);
    if (env.dim() != dim()) throw ConfigError("envelope dimension does not match the lattice");
    s.env = env;
    return s;
}

ParticleFieldState CoupledSystem::initial_state(const Vec& q0, const Vec& p0, double epsilon,
                                                const EnvelopeGrid& grid) const {
    ParticleFieldState s = initial_state(q0, p0, epsilon);
    if (grid.dim != dim()) throw ConfigError("envelope grid dimension does not match the lattice");
    s.grid = grid;
    return s;
}

LeadingRhs CoupledSystem::rhs_leading(const ParticleFieldState& s) const {
    const auto d = model_->derivs(s.p);
    LeadingRhs r;
    r.q_dot = d->grad_E;
    r.p_dot = -W_.grad(s.q);
    r.S_dot = s.p.dot(d->grad_E) - d->E - W_.value(s.q);
    r.phi_dot = r.p_dot.dot(d->berry_connection);
    return r;
}

CorrectedRhs CoupledSystem::rhs_corrected(const ParticleFieldState& s) const {
    const auto d = model_->derivs(s.P);
    const Vec gw = W_.grad(s.Q);
    CorrectedRhs r;
    r.Q_dot = d->grad_E;
    r.P_dot = -gw;
    if (s.epsilon > 0.0) {
        const SecondMoments m = moments_of(s);
        // anomalous velocity with the leading-order momentum rate substituted
        r.Q_dot += s.epsilon * anomalous_velocity(s.P, r.P_dot, d->berry_curvature);
        const Tensor3 tw = W_.third(s.Q);
        for (int a = 0; a < dim(); ++a) {
            r.Q_dot[a] += s.epsilon * 0.5 * (d->third_E.slice(a).cwiseProduct(m.Xi)).sum();
            r.P_dot[a] -= s.epsilon * 0.5 * (tw.slice(a).cwiseProduct(m.Y)).sum();
        }
    }
    return r;
}

namespace {

// canonical-variable rhs shared by both modes; the envelope enters only
// through its second moments, which the caller supplies (stage-exact in
// Gaussian mode, midpoint-frozen in grid mode)
ParticleFlow particle_rhs(const BandModel& model, const ExternalPotential& W,
                          const ParticleVars& y, double eps, const Mat& Y, const Mat& Xi) {
    const int d = model.dim();
    const auto lead = model.derivs(y.p);
    ParticleFlow f;
    f.q_dot = lead->grad_E;
    f.p_dot = -W.grad(y.q);
    f.S_dot = y.p.dot(lead->grad_E) - lead->E - W.value(y.q);
    f.phi_dot = f.p_dot.dot(lead->berry_connection);

    const auto can = model.derivs(y.Ps);
    const Vec gw = W.grad(y.Qs);
    f.Qs_dot = can->grad_E;
    f.Ps_dot = -gw;
    if (eps > 0.0) {
        const Mat hw = W.hess(y.Qs);
        const Tensor3 tw = W.third(y.Qs);
        for (int a = 0; a < d; ++a) {
            double berry = 0.0;
            for (int b = 0; b < d; ++b) berry += gw[b] * can->d_connection(a, b);
            f.Qs_dot[a] +=
                eps * (berry + 0.5 * (can->third_E.slice(a).cwiseProduct(Xi)).sum());
            f.Ps_dot[a] -= eps * (hw.row(a).dot(can->berry_connection) +
                                  0.5 * (tw.slice(a).cwiseProduct(Y)).sum());
        }
    }
    return f;
}

}  // namespace

ParticleFieldState CoupledSystem::step_coupled(const ParticleFieldState& s, double dt,
                                               EnvelopeMode mode) const {
    if (dt <= 0.0) throw ConfigError("time step must be positive");
    ParticleFieldState ns = s;

    if (mode == EnvelopeMode::gaussian) {
        if (!s.env) throw EnvelopeUnavailable("gaussian-mode step without a Gaussian envelope");
        GaussVars y0{{s.q, s.p, s.S, s.phi_B, s.Qs, s.P}, s.env->A, s.env->B};
        auto flow = [&](const GaussVars& y) {
            GaussFlow f;
            const Mat Ym = 0.5 * (y.A * y.A.adjoint()).real();
            const Mat Xim = 0.5 * (y.B * y.B.adjoint()).real();
            f.pf = particle_rhs(*model_, W_, y.pv, s.epsilon, Ym, Xim);
            f.A_dot = model_->derivs(y.pv.Ps)->hess_E.cast<cplx>() * y.B;
            f.B_dot = -W_.hess(y.pv.Qs).cast<cplx>() * y.A;
            return f;
        };
        const GaussFlow k1 = flow(y0);
        const GaussFlow k2 = flow(axpy(y0, 0.5 * dt, k1));
        const GaussFlow k3 = flow(axpy(y0, 0.5 * dt, k2));
        const GaussFlow k4 = flow(axpy(y0, dt, k3));
        GaussVars y1 = y0;
        for (const auto& [k, w] : {std::pair<const GaussFlow&, double>{k1, 1.0},
                                   {k2, 2.0},
                                   {k3, 2.0},
                                   {k4, 1.0}})
            y1 = axpy(y1, w * dt / 6.0, k);

        GaussianEnvelope env = *s.env;
        const cplx det_prev = env.A.determinant();
        const cplx det_now = y1.A.determinant();
        if (std::abs(det_now) < 1e-14)
            throw BranchDiscontinuity("det A vanished during a coupled step");
        const double delta = std::arg(det_now / det_prev);
        if (std::abs(delta) > 0.5 * kPi)
            throw BranchDiscontinuity(
                "determinant branch moved by more than pi/2 in one coupled step; refine dt");
        env.A = y1.A;
        env.B = y1.B;
        env.det_phase += delta;
        const auto [r1, r2] = symplectic_residuals(env.A, env.B);
        if (std::max(r1, r2) > 1e-6) {
            std::ostringstream os;
            os << "pair conditions drifted during a coupled step: residuals " << r1 << ", "
               << r2;
            throw SymplecticDrift(os.str());
        }
        ns.env = env;
        ns.q = y1.pv.q;
        ns.p = y1.pv.p;
        ns.S = y1.pv.S;
        ns.phi_B = y1.pv.phi;
        ns.Qs = y1.pv.Qs;
        ns.P = y1.pv.Ps;
    } else {
        if (!s.grid) throw EnvelopeUnavailable("grid-mode step without an envelope grid");
        // Strang interleave: half an envelope step with entry coefficients,
        // full particle step with midpoint-frozen moments, half an envelope
        // step with exit coefficients
        const Mat ME0 = model_->derivs(s.P)->hess_E;
        const Mat MW0 = W_.hess(s.Qs);
        EnvelopeGrid g = evolve_a_grid(
            *s.grid, [&](double) { return ME0; }, [&](double) { return MW0; }, s.t,
            s.t + 0.5 * dt, 0.5 * dt, false);

        Mat Y = Mat::Zero(dim(), dim());
        Mat Xi = Y;
        if (s.epsilon > 0.0) {
            const EnvelopeMoments em = envelope_moments(g);
            Y = em.second_y;
            Xi = em.second_xi;
        }
        ParticleVars y0{s.q, s.p, s.S, s.phi_B, s.Qs, s.P};
        auto flow = [&](const ParticleVars& y) {
            return particle_rhs(*model_, W_, y, s.epsilon, Y, Xi);
        };
        const ParticleFlow k1 = flow(y0);
        const ParticleFlow k2 = flow(axpy(y0, 0.5 * dt, k1));
        const ParticleFlow k3 = flow(axpy(y0, 0.5 * dt, k2));
        const ParticleFlow k4 = flow(axpy(y0, dt, k3));
        ParticleVars y1 = y0;
        for (const auto& [k, w] : {std::pair<const ParticleFlow&, double>{k1, 1.0},
                                   {k2, 2.0},
                                   {k3, 2.0},
                                   {k4, 1.0}})
            y1 = axpy(y1, w * dt / 6.0, k);

        const Mat ME1 = model_->derivs(y1.Ps)->hess_E;
        const Mat MW1 = W_.hess(y1.Qs);
        g = evolve_a_grid(
            g, [&](double) { return ME1; }, [&](double) { return MW1; }, s.t + 0.5 * dt,
            s.t + dt, 0.5 * dt, false);
        ns.grid = std::move(g);
        ns.q = y1.q;
        ns.p = y1.p;
        ns.S = y1.S;
        ns.phi_B = y1.phi;
        ns.Qs = y1.Qs;
        ns.P = y1.Ps;
    }

    ns.t = s.t + dt;
    ns.Q = ns.Qs + s.epsilon * model_->derivs(ns.P)->berry_connection;
    return ns;
}

HamiltonianReport CoupledSystem::hamiltonian_value(const ParticleFieldState& s,
                                                   EnvelopeMode mode) const {
    const auto d = model_->derivs(s.P);
    HamiltonianReport r;
    r.band = d->E;
    r.external = W_.value(s.Qs);
    if (s.epsilon > 0.0) {
        r.berry_coupling = s.epsilon * W_.grad(s.Qs).dot(d->berry_connection);
        Mat Y, Xi;
        if (mode == EnvelopeMode::gaussian) {
            if (!s.env) throw EnvelopeUnavailable("gaussian-mode report without an envelope");
            Y = 0.5 * (s.env->A * s.env->A.adjoint()).real();
            Xi = 0.5 * (s.env->B * s.env->B.adjoint()).real();
        } else {
            if (!s.grid) throw EnvelopeUnavailable("grid-mode report without an envelope grid");
            const EnvelopeMoments em = envelope_moments(*s.grid);
            Y = em.second_y;
            Xi = em.second_xi;
        }
        r.kinetic_envelope = s.epsilon * 0.5 * (d->hess_E.cwiseProduct(Xi)).sum();
        r.potential_envelope = s.epsilon * 0.5 * (W_.hess(s.Qs).cwiseProduct(Y)).sum();
    }
    r.value = r.sum();
    return r;
}

std::pair<Vec, Vec> CoupledSystem::canonical_change(const ParticleFieldState& s) const {
    const auto d = model_->derivs(s.P);
    return {s.Q - s.epsilon * d->berry_connection, s.P};
}

double CoupledSystem::symplectic_residual(const ParticleFieldState& s) const {
    if (!s.env) return 0.0;
    const auto [r1, r2] = symplectic_residuals(s.env->A, s.env->B);
    return std::max(r1, r2);
}

LeadingTrajectory::LeadingTrajectory(const CoupledSystem& sys, const Vec& q0, const Vec& p0,
                                     double t0, double t1, double dt) {
    if (t1 <= t0) throw ConfigError("trajectory needs a positive time span");
    const int nsteps = std::max(1, static_cast<int>(std::ceil((t1 - t0) / dt - 1e-9)));
    dt_ = (t1 - t0) / nsteps;

    ParticleFieldState s = sys.initial_state(q0, p0, 0.0);
    s.t = t0;
    nodes_.reserve(nsteps + 1);
    auto record = [&](const ParticleFieldState& st) {
        const LeadingRhs r = sys.rhs_leading(st);
        TrajectoryNode n;
        n.t = st.t;
        n.q = st.q;
        n.p = st.p;
        n.q_dot = r.q_dot;
        n.p_dot = r.p_dot;
        n.S = st.S;
        n.phi_B = st.phi_B;
        n.S_dot = r.S_dot;
        n.phi_dot = r.phi_dot;
        nodes_.push_back(std::move(n));
    };
    record(s);

    auto rhs = [&](const ParticleFieldState& st) { return sys.rhs_leading(st); };
    auto shift = [&](const ParticleFieldState& st, double c, const LeadingRhs& k) {
        ParticleFieldState out = st;
        out.q += c * k.q_dot;
        out.p += c * k.p_dot;
        out.S += c * k.S_dot;
        out.phi_B += c * k.phi_dot;
        return out;
    };
    for (int i = 0; i < nsteps; ++i) {
        const LeadingRhs k1 = rhs(s);
        const LeadingRhs k2 = rhs(shift(s, 0.5 * dt_, k1));
        const LeadingRhs k3 = rhs(shift(s, 0.5 * dt_, k2));
        const LeadingRhs k4 = rhs(shift(s, dt_, k3));
        s.q += (dt_ / 6.0) * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
        s.p += (dt_ / 6.0) * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
        s.S += (dt_ / 6.0) * (k1.S_dot + 2.0 * k2.S_dot + 2.0 * k3.S_dot + k4.S_dot);
        s.phi_B += (dt_ / 6.0) * (k1.phi_dot + 2.0 * k2.phi_dot + 2.0 * k3.phi_dot + k4.phi_dot);
        s.t = t0 + (i + 1) * dt_;
        record(s);
    }
}

const TrajectoryNode& LeadingTrajectory::lower_node(double t, double& theta) const {
    const double t0 = nodes_.front().t;
    const double t1 = nodes_.back().t;
    if (t < t0 - 1e-9 || t > t1 + 1e-9)
        throw ConfigError("time outside the stored trajectory span");
    int i = static_cast<int>(std::floor((t - t0) / dt_));
    i = std::max(0, std::min(i, static_cast<int>(nodes_.size()) - 2));
    theta = (t - nodes_[i].t) / dt_;
    theta = std::max(0.0, std::min(1.0, theta));
    return nodes_[i];
}

namespace {

// cubic Hermite basis on [0, 1]
inline void hermite_weights(double u, double& h00, double& h10, double& h01, double& h11) {
    const double u2 = u * u, u3 = u2 * u;
    h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    h10 = u3 - 2.0 * u2 + u;
    h01 = -2.0 * u3 + 3.0 * u2;
    h11 = u3 - u2;
}

}  // namespace

Vec LeadingTrajectory::q_at(double t) const {
    double u;
    const TrajectoryNode& n0 = lower_node(t, u);
    const TrajectoryNode& n1 = *(&n0 + 1);
    double h00, h10, h01, h11;
    hermite_weights(u, h00, h10, h01, h11);
    return h00 * n0.q + h10 * dt_ * n0.q_dot + h01 * n1.q + h11 * dt_ * n1.q_dot;
}

Vec LeadingTrajectory::p_at(double t) const {
    double u;
    const TrajectoryNode& n0 = lower_node(t, u);
    const TrajectoryNode& n1 = *(&n0 + 1);
    double h00, h10, h01, h11;
    hermite_weights(u, h00, h10, h01, h11);
    return h00 * n0.p + h10 * dt_ * n0.p_dot + h01 * n1.p + h11 * dt_ * n1.p_dot;
}

double LeadingTrajectory::S_at(double t) const {
    double u;
    const TrajectoryNode& n0 = lower_node(t, u);
    const TrajectoryNode& n1 = *(&n0 + 1);
    double h00, h10, h01, h11;
    hermite_weights(u, h00, h10, h01, h11);
    return h00 * n0.S + h10 * dt_ * n0.S_dot + h01 * n1.S + h11 * dt_ * n1.S_dot;
}

double LeadingTrajectory::phi_at(double t) const {
    double u;
    const TrajectoryNode& n0 = lower_node(t, u);
    const TrajectoryNode& n1 = *(&n0 + 1);
    double h00, h10, h01, h11;
    hermite_weights(u, h00, h10, h01, h11);
    return h00 * n0.phi_B + h10 * dt_ * n0.phi_dot + h01 * n1.phi_B + h11 * dt_ * n1.phi_dot;
}

}  // namespace bloch
