#include <blochpack/dynamics.hpp>
#include <blochpack/observables.hpp>

#include <doctest.h>

#include <cmath>
#include <complex>
#include <memory>
#include <optional>
#include <vector>

using namespace bloch;

namespace {

Vec vec1(double x) {
    Vec v(1);
    v << x;
    return v;
}

IVec ivec1(int m) {
    IVec v(1);
    v << m;
    return v;
}

GaussianEnvelope unit_env_1d() {
    const cplx i1(0.0, 1.0);
    return make_gaussian(std::pow(kPi, -0.25), CMat::Identity(1, 1),
                         i1 * CMat::Identity(1, 1));
}

std::shared_ptr<BandModel> free_model_1d() {
    PeriodicPotential none(LatticeSpec::cubic(1, 1.0), {});
    BandOptions opt;
    opt.band = 1;
    return std::make_shared<BandModel>(none, 30.0, opt);
}

std::shared_ptr<BandModel> mathieu_model() {
    auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
    auto V = PeriodicPotential::single_cosine(lat, 2.0);
    BandOptions opt;
    opt.band = 1;
    return std::make_shared<BandModel>(V, 8.0, opt);
}

ExternalPotential shallow_trap() {
    return ExternalPotential::cosine_sum({0.1}, {vec1(1.0)}, {0.0});
}

FieldGridSpec grid1(double length, double center, int n) {
    FieldGridSpec g;
    g.box_length = vec1(length);
    g.box_center = vec1(center);
    g.n_points = n;
    return g;
}

// Gaussian window exp(-x^2 / (2 sigma^2)) sampled on a symmetric grid wide
// enough that the truncated tails are far below roundoff.
struct Window {
    Vec f;
    FieldGridSpec grid;
    double plain_integral;  // quadrature of f alone on the same grid
};

Window gaussian_window(double sigma, double length, int n) {
    Window w;
    w.grid = grid1(length, 0.0, n);
    w.f.resize(n);
    const double h = length / n;
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        const double x = -0.5 * length + h * j;
        w.f[j] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += w.f[j];
    }
    w.plain_integral = sum * h;
    return w;
}

// corrector evolution inputs along a leading-order trajectory, shared by the
// cases that compare the expanded observables against a direct solve
struct CorrectorSetup {
    std::function<Mat(double)> hessE;
    std::function<Mat(double)> hessW;
    SourcePath source;
};

CorrectorSetup corrector_inputs(const std::shared_ptr<BandModel>& model,
                                const ExternalPotential& W, const LeadingTrajectory& traj) {
    CorrectorSetup s;
    s.hessE = [model, &traj](double t) { return model->derivs(traj.p_at(t))->hess_E; };
    s.hessW = [&W, &traj](double t) { return W.hess(traj.q_at(t)); };
    s.source = [model, &W, &traj](double t) {
        auto d = model->derivs(traj.p_at(t));
        EnvelopeSourceCoeffs c;
        c.third_E = d->third_E;
        c.third_W = W.third(traj.q_at(t));
        const Vec gw = W.grad(traj.q_at(t));
        c.momentum_coupling = vec1(gw[0] * d->d_connection(0, 0));
        c.position_coupling = vec1(W.hess(traj.q_at(t))(0, 0) * d->berry_connection[0]);
        return c;
    };
    return s;
}

}  // namespace

TEST_CASE("averaging against a constant periodic factor reproduces the plain integral") {
    Window w = gaussian_window(0.3, 6.0, 1024);
    PeriodicPotential one(LatticeSpec::cubic(1, 2.0 * kPi), {{ivec1(0), 1.0}});
    TwoScaleAverage r = two_scale_average(w.f, w.grid, one, 0.1, vec1(0.0));
    CHECK(r.value == doctest::Approx(w.plain_integral).epsilon(1e-14));
    CHECK(r.separated == doctest::Approx(w.plain_integral).epsilon(1e-14));
}

TEST_CASE("oscillatory averaging matches the closed form for a Gaussian window") {
    // for f = exp(-x^2/(2 sigma^2)) and g = cos(x), the integral of
    // f(x) g(x/delta) is sigma sqrt(2 pi) exp(-sigma^2 / (2 delta^2))
    const double sigma = 0.3;
    Window w = gaussian_window(sigma, 6.0, 4096);
    PeriodicPotential g = PeriodicPotential::single_cosine(LatticeSpec::cubic(1, 2.0 * kPi), 1.0);
    auto closed_form = [&](double delta) {
        return sigma * std::sqrt(2.0 * kPi) * std::exp(-sigma * sigma / (2.0 * delta * delta));
    };

    SUBCASE("coarse scale") {
        TwoScaleAverage r = two_scale_average(w.f, w.grid, g, 0.1, vec1(0.0));
        CHECK(r.value == doctest::Approx(closed_form(0.1)).epsilon(1e-6));
        CHECK(std::abs(r.separated) < 1e-15);
    }
    SUBCASE("fine scale") {
        TwoScaleAverage r = two_scale_average(w.f, w.grid, g, 0.05, vec1(0.0));
        CHECK(r.value == doctest::Approx(closed_form(0.05)).epsilon(1e-6));
    }
    SUBCASE("the separated factorization error collapses with the scale") {
        // the separated value is exact up to the oscillatory remainder, so the
        // error is the oscillatory integral itself; it must drop by far more
        // than the factor 8 a first-order homogenization bound would give
        const double e_coarse = std::abs(two_scale_average(w.f, w.grid, g, 0.1, vec1(0.0)).value);
        const double e_fine = std::abs(two_scale_average(w.f, w.grid, g, 0.05, vec1(0.0)).value);
        REQUIRE(e_fine > 1e-9);
        CHECK(e_coarse / e_fine > 1e5);
    }
    SUBCASE("a cell shift enters through the fast phase") {
        // g((x + s/delta)/delta) = cos(x/delta + s/delta^2); the window is
        // even, so the shifted integral is cos(s/delta^2) times the unshifted one
        TwoScaleAverage r = two_scale_average(w.f, w.grid, g, 0.1, vec1(0.7));
        CHECK(r.value == doctest::Approx(std::cos(70.0) * closed_form(0.1)).epsilon(1e-6));
    }
}

TEST_CASE("the separated limit keeps only the cell mean of the periodic factor") {
    Window w = gaussian_window(0.3, 6.0, 4096);
    auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
    PeriodicPotential one_plus_cos(
        lat, {{ivec1(0), 1.0}, {ivec1(1), 0.5}, {ivec1(-1), 0.5}});
    PeriodicPotential pure_cos = PeriodicPotential::single_cosine(lat, 1.0);

    TwoScaleAverage full = two_scale_average(w.f, w.grid, one_plus_cos, 0.1, vec1(0.0));
    TwoScaleAverage osc = two_scale_average(w.f, w.grid, pure_cos, 0.1, vec1(0.0));

    CHECK(full.separated == doctest::Approx(w.plain_integral).epsilon(1e-14));
    CHECK(full.value - full.separated == doctest::Approx(osc.value).epsilon(1e-10));
}

TEST_CASE("averaging guards") {
    Window w = gaussian_window(0.3, 6.0, 512);
    PeriodicPotential g = PeriodicPotential::single_cosine(LatticeSpec::cubic(1, 2.0 * kPi), 1.0);

    SUBCASE("under-resolved oscillation") {
        // delta = 0.01 puts ~5.4 grid points per fast period on this grid
        CHECK_THROWS_AS(two_scale_average(w.f, w.grid, g, 0.01, vec1(0.0)), ResolutionTooLow);
    }
    SUBCASE("sample count must match the grid") {
        Vec bad = Vec::Zero(100);
        CHECK_THROWS_AS(two_scale_average(bad, w.grid, g, 0.1, vec1(0.0)), ConfigError);
    }
    SUBCASE("scale parameter must be positive") {
        CHECK_THROWS_AS(two_scale_average(w.f, w.grid, g, 0.0, vec1(0.0)), ConfigError);
        CHECK_THROWS_AS(two_scale_average(w.f, w.grid, g, -0.1, vec1(0.0)), ConfigError);
    }
    SUBCASE("shift dimension must match") {
        CHECK_THROWS_AS(two_scale_average(w.f, w.grid, g, 0.1, Vec::Zero(2)), ConfigError);
    }
}

TEST_CASE("well-prepared packet observables sit at the classical phase-space point") {
    const double eps = 1.0 / 32.0;
    EnvelopeGrid eg = EnvelopeGrid::standard(1);
    eg.a = gaussian_sample(unit_env_1d(), eg);
    PacketState st;
    st.t = 0.0;
    st.q = vec1(1.0);
    st.p = vec1(0.3);

    SUBCASE("cosine lattice, real eigenvectors, no geometric shift") {
        auto model = mathieu_model();
        PacketObservables ob = observables_from_ansatz(st, eg, *model, eps);
        CHECK(ob.Q[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ob.P[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(ob.N == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("complex lattice amplitudes shift the position by the geometric term") {
        // a potential without inversion symmetry carries a nonzero Bloch-frame
        // connection; the position observable picks it up at first order in
        // epsilon while the momentum observable has no such term
        auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
        PeriodicPotential Vc(lat, {{ivec1(1), cplx(0.3, 0.2)},
                                   {ivec1(-1), cplx(0.3, -0.2)},
                                   {ivec1(2), cplx(0.0, 0.1)},
                                   {ivec1(-2), cplx(0.0, -0.1)}});
        BandOptions opt;
        opt.band = 1;
        BandModel model(Vc, 8.0, opt);
        const double conn = model.derivs(st.p)->berry_connection[0];
        REQUIRE(std::abs(conn) > 1e-3);
        PacketObservables ob = observables_from_ansatz(st, eg, model, eps);
        CHECK(ob.Q[0] == doctest::Approx(1.0 + eps * conn).epsilon(1e-12));
        CHECK(ob.P[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(ob.N == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("displaced and boosted envelopes shift the observables at half order") {
    const double eps = 1.0 / 16.0;
    EnvelopeGrid eg = EnvelopeGrid::standard(1);
    const cplx i1(0.0, 1.0);
    for (int j = 0; j < eg.size(); ++j) {
        const double y = eg.point(j)[0] - 1.5;
        eg.a[j] = std::pow(kPi, -0.25) * std::exp(-0.5 * y * y) * std::exp(i1 * 0.4 * y);
    }
    PacketState st;
    st.t = 0.0;
    st.q = vec1(2.0);
    st.p = vec1(0.7);
    PacketObservables ob = observables_from_ansatz(st, eg, *free_model_1d(), eps);
    const double root_eps = std::sqrt(eps);
    CHECK(ob.Q[0] == doctest::Approx(2.0 + root_eps * 1.5).epsilon(1e-10));
    CHECK(ob.P[0] == doctest::Approx(0.7 + root_eps * 0.4).epsilon(1e-10));
    CHECK(ob.N == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("the norm observable is conserved along the corrector evolution") {
    auto model = mathieu_model();
    const auto W = shallow_trap();
    CoupledSystem sys(model, W);
    LeadingTrajectory traj(sys, vec1(1.0), vec1(0.3), 0.0, 1.0, 1e-3);
    CorrectorSetup cs = corrector_inputs(model, W, traj);

    EnvelopeGrid eg = EnvelopeGrid::standard(1);
    eg.a = gaussian_sample(unit_env_1d(), eg);
    const double eps = 1.0 / 32.0;

    for (double tc : {0.25, 0.5, 1.0}) {
        EnvelopeGrid et = evolve_b_grid(eg, cs.hessE, cs.hessW, cs.source, 0.0, tc, 1e-3);
        PacketState st;
        st.t = tc;
        st.q = traj.q_at(tc);
        st.p = traj.p_at(tc);
        PacketObservables ob = observables_from_ansatz(st, et, *model, eps);
        CHECK(std::abs(ob.N - 1.0) < 1e-10);
        if (tc == 1.0) REQUIRE(et.l2_norm(et.b) > 1e-3);
    }
}

TEST_CASE("field moments of an assembled free packet recover center and momentum") {
    const double eps = 1.0 / 16.0;
    auto model = free_model_1d();

    SUBCASE("modulated Gaussian") {
        WaveField f = assemble_initial_data(*model, vec1(2.0), vec1(0.3), unit_env_1d(),
                                            std::nullopt, eps, grid1(4.0 * kPi, 2.0, 2048));
        Vec pos = position_from_field(f);
        Vec mom = momentum_from_field(f);
        CHECK(pos[0] == doctest::Approx(2.0).epsilon(1e-10));
        CHECK(mom[0] == doctest::Approx(0.3).epsilon(1e-10));
    }
    SUBCASE("a delocalized field has no meaningful moments") {
        WaveField f = WaveField::make(grid1(4.0, 0.0, 256), eps);
        const double k = f.frequency(0, 8);
        for (int j = 0; j < f.size(); ++j)
            f.psi[j] = std::exp(cplx(0.0, k * f.point(j)[0]));
        CHECK_THROWS_AS(position_from_field(f), DomainTooSmall);
        CHECK_THROWS_AS(momentum_from_field(f), DomainTooSmall);
    }
}

TEST_CASE("field moments track the classical trajectory in a shallow trap") {
    // lattice-free packet in the cosine trap: the exact field moments follow
    // the classical center to first order in epsilon over an order-one time
    const double eps = 1.0 / 16.0;
    auto model = free_model_1d();
    const auto W = shallow_trap();

    WaveField f0 = assemble_initial_data(*model, vec1(0.3), vec1(1.0), unit_env_1d(),
                                         std::nullopt, eps, grid1(4.0 * kPi, 0.8, 2048));
    PeriodicPotential none;
    WaveField f1 = propagate(f0, none, W, 1.0, eps / 100.0);

    CoupledSystem sys(model, W);
    LeadingTrajectory traj(sys, vec1(0.3), vec1(1.0), 0.0, 1.0, 1e-3);
    REQUIRE(std::abs(traj.q_at(1.0)[0] - 0.3) > 0.5);

    Vec pos = position_from_field(f1);
    Vec mom = momentum_from_field(f1);
    CHECK(std::abs(pos[0] - traj.q_at(1.0)[0]) < eps / 10.0);
    CHECK(std::abs(mom[0] - traj.p_at(1.0)[0]) < eps / 10.0);
}

TEST_CASE("observable expansion residuals shrink super-polynomially in epsilon") {
    auto model = mathieu_model();
    GaussianEnvelope env = unit_env_1d();

    // the half-order and first-order moment corrections vanish here by parity
    // and by the reality of the eigenframe, so the residual of the moment
    // expansion is the oscillatory lattice coupling, which decays faster than
    // any power of epsilon; halving epsilon must shrink it far more than the
    // factor ~2.3 a slope just above one would give
    SUBCASE("prepared data") {
        PacketState st;
        st.t = 0.0;
        st.q = vec1(1.0);
        st.p = vec1(0.3);
        auto res = [&](double eps, int n) {
            return expansion_residuals(*model, st, env, std::nullopt, eps,
                                       grid1(2.0 * kPi, 1.0, n));
        };
        ExpansionResiduals coarse = res(1.0 / 16.0, 512);
        ExpansionResiduals fine = res(1.0 / 32.0, 1024);
        const double dQ16 = std::abs(coarse.dQ[0]), dQ32 = std::abs(fine.dQ[0]);
        const double dP16 = std::abs(coarse.dP[0]), dP32 = std::abs(fine.dP[0]);
        CHECK(dQ16 > 4e-3);
        CHECK(dQ16 < 7e-3);
        CHECK(dQ32 > 1.5e-4);
        CHECK(dQ32 < 2.6e-4);
        CHECK(dQ16 / dQ32 > 8.0);
        CHECK(dP16 > 5e-7);
        CHECK(dP16 < 3e-6);
        CHECK(dP32 > 1e-9);
        CHECK(dP32 < 5e-8);
        CHECK(dP16 / dP32 > 20.0);
    }
    SUBCASE("evolved data with the corrector") {
        const auto W = shallow_trap();
        CoupledSystem sys(model, W);
        const double t1 = 0.3;
        LeadingTrajectory traj(sys, vec1(1.0), vec1(0.3), 0.0, t1, 1e-3);
        CorrectorSetup cs = corrector_inputs(model, W, traj);

        EnvelopeGrid eg = EnvelopeGrid::standard(1);
        eg.a = gaussian_sample(env, eg);
        eg = evolve_b_grid(eg, cs.hessE, cs.hessW, cs.source, 0.0, t1, 1e-3);
        GaussianEnvelope a1 = evolve_gaussian(env, cs.hessE, cs.hessW, 0.0, t1, 1e-3);
        PacketState st;
        st.t = t1;
        st.q = traj.q_at(t1);
        st.p = traj.p_at(t1);
        st.S = traj.S_at(t1);
        st.phi_B = traj.phi_at(t1);

        auto res = [&](double eps, int n) {
            return expansion_residuals(*model, st, a1, eg, eps, grid1(2.0 * kPi, 1.0, n));
        };
        ExpansionResiduals coarse = res(1.0 / 16.0, 512);
        ExpansionResiduals fine = res(1.0 / 32.0, 1024);
        const double dQ16 = std::abs(coarse.dQ[0]), dQ32 = std::abs(fine.dQ[0]);
        const double dP16 = std::abs(coarse.dP[0]), dP32 = std::abs(fine.dP[0]);
        CHECK(dQ16 > 4e-3);
        CHECK(dQ16 < 7e-3);
        CHECK(dQ32 > 1.5e-4);
        CHECK(dQ32 < 2.6e-4);
        CHECK(dQ16 / dQ32 > 8.0);
        CHECK(dP16 > 8e-6);
        CHECK(dP16 < 3e-5);
        CHECK(dP32 > 1e-6);
        CHECK(dP32 < 6e-6);
        CHECK(dP16 / dP32 > 3.5);
    }
}

TEST_CASE("direct field center agrees with the expanded center through half order") {
    auto model = mathieu_model();
    const auto W = shallow_trap();
    CoupledSystem sys(model, W);
    const double t1 = 0.5;
    LeadingTrajectory traj(sys, vec1(1.0), vec1(0.3), 0.0, t1, 1e-3);
    CorrectorSetup cs = corrector_inputs(model, W, traj);

    GaussianEnvelope env = unit_env_1d();
    EnvelopeGrid eg0 = EnvelopeGrid::standard(1);
    eg0.a = gaussian_sample(env, eg0);
    EnvelopeGrid eg1 = evolve_b_grid(eg0, cs.hessE, cs.hessW, cs.source, 0.0, t1, 1e-3);
    PacketState st;
    st.t = t1;
    st.q = traj.q_at(t1);
    st.p = traj.p_at(t1);

    auto gap = [&](double eps, int n) {
        PacketObservables ob = observables_from_ansatz(st, eg1, *model, eps);
        CHECK(std::abs(ob.N - 1.0) < 1e-9);
        WaveField f0 = assemble_initial_data(*model, vec1(1.0), vec1(0.3), env, std::nullopt,
                                             eps, grid1(4.0 * kPi, 1.0, n));
        WaveField f1 = propagate(f0, model->potential(), W, t1, eps / 400.0);
        Vec pos = position_from_field(f1);
        return std::abs(pos[0] - ob.Q[0]);
    };
    const double d16 = gap(1.0 / 16.0, 1024);
    const double d32 = gap(1.0 / 32.0, 2048);
    CHECK(d16 > 3e-3);
    CHECK(d16 < 8e-3);
    CHECK(d32 > 1.5e-4);
    CHECK(d32 < 4e-4);
    CHECK(d16 / d32 > 4.0);
}
