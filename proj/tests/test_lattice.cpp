#include <blochpack/lattice.hpp>

#include <doctest.h>

#include <cmath>

using namespace bloch;

TEST_CASE("dual lattice satisfies b_i . v_j = 2 pi delta_ij") {
    SUBCASE("1d, v = 2 pi") {
        auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
        CHECK(lat.dual(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(lat.cell_volume_direct == doctest::Approx(2.0 * kPi).epsilon(1e-14));
        CHECK(lat.cell_volume_direct * lat.cell_volume_dual ==
              doctest::Approx(2.0 * kPi).epsilon(1e-12));
    }
    SUBCASE("2d square") {
        auto lat = LatticeSpec::cubic(2, 2.0 * kPi);
        CHECK((lat.dual - Mat::Identity(2, 2)).norm() < 1e-14);
        CHECK(lat.cell_volume_direct * lat.cell_volume_dual ==
              doctest::Approx(std::pow(2.0 * kPi, 2)).epsilon(1e-12));
    }
    SUBCASE("2d hexagonal") {
        const double a = 1.0;
        Mat v(2, 2);
        v.col(0) << a, 0.0;
        v.col(1) << a / 2.0, a * std::sqrt(3.0) / 2.0;
        auto lat = LatticeSpec::from_direct(v);
        // duals computed independently as 2 pi * inverse-transpose
        CHECK(lat.dual(0, 0) == doctest::Approx(6.283185307179586).epsilon(1e-13));
        CHECK(lat.dual(1, 0) == doctest::Approx(-3.627598728468436).epsilon(1e-13));
        CHECK(lat.dual(0, 1) == doctest::Approx(0.0).epsilon(1e-13));
        CHECK(std::abs(lat.dual(0, 1)) < 1e-13);
        CHECK(lat.dual(1, 1) == doctest::Approx(7.255197456936872).epsilon(1e-13));
        Mat prod = lat.dual.transpose() * lat.direct;
        CHECK((prod - 2.0 * kPi * Mat::Identity(2, 2)).norm() < 1e-12 * prod.norm());
    }
    SUBCASE("singular generators rejected") {
        Mat v(2, 2);
        v << 1.0, 2.0, 2.0, 4.0;
        CHECK_THROWS_AS(LatticeSpec::from_direct(v), SingularLattice);
    }
}

TEST_CASE("reciprocal enumeration is the lexicographic integer ball") {
    SUBCASE("1d cutoff 1.5") {
        auto lat = LatticeSpec::cubic(1, 2.0 * kPi);  // b = 1
        auto modes = enumerate_reciprocal(lat, 1.5);
        REQUIRE(modes.count() == 3);
        CHECK(modes.m(0, 0) == -1);
        CHECK(modes.m(0, 1) == 0);
        CHECK(modes.m(0, 2) == 1);
        CHECK(modes.index_of_zero == 1);
    }
    SUBCASE("1d cutoff 0.5") {
        auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
        auto modes = enumerate_reciprocal(lat, 0.5);
        REQUIRE(modes.count() == 1);
        CHECK(modes.m(0, 0) == 0);
    }
    SUBCASE("2d square cutoff 1.0") {
        auto lat = LatticeSpec::cubic(2, 2.0 * kPi);
        auto modes = enumerate_reciprocal(lat, 1.0);
        REQUIRE(modes.count() == 5);
        // lexicographic: (-1,0),(0,-1),(0,0),(0,1),(1,0)
        int expected[5][2] = {{-1, 0}, {0, -1}, {0, 0}, {0, 1}, {1, 0}};
        for (int j = 0; j < 5; ++j) {
            CHECK(modes.m(0, j) == expected[j][0]);
            CHECK(modes.m(1, j) == expected[j][1]);
        }
    }
    SUBCASE("2d norm ball radius 4 has 49 points") {
        auto lat = LatticeSpec::cubic(2, 2.0 * kPi);
        auto modes = enumerate_reciprocal(lat, 4.0);
        CHECK(modes.count() == 49);
    }
}

TEST_CASE("brillouin zone folding") {
    auto lat1 = LatticeSpec::cubic(1, 2.0 * kPi);
    SUBCASE("origin fixed") {
        Vec p(1);
        p << 0.0;
        auto r = fold_to_bz(lat1, p);
        CHECK(r.p_folded[0] == 0.0);
        CHECK(r.shift[0] == 0);
    }
    SUBCASE("p = 0.7 folds to -0.3 with unit shift") {
        Vec p(1);
        p << 0.7;
        auto r = fold_to_bz(lat1, p);
        CHECK(r.p_folded[0] == doctest::Approx(-0.3).epsilon(1e-13));
        CHECK(r.shift[0] == 1);
    }
    SUBCASE("half-open cell keeps +1/2") {
        Vec p(1);
        p << 0.5;
        auto r = fold_to_bz(lat1, p);
        CHECK(r.p_folded[0] == doctest::Approx(0.5).epsilon(1e-13));
        CHECK(r.shift[0] == 0);
        p << -0.5;
        r = fold_to_bz(lat1, p);
        CHECK(r.p_folded[0] == doctest::Approx(0.5).epsilon(1e-13));
        CHECK(r.shift[0] == -1);
    }
    SUBCASE("2d componentwise") {
        auto lat2 = LatticeSpec::cubic(2, 2.0 * kPi);
        Vec p(2);
        p << 1.2, -0.6;
        auto r = fold_to_bz(lat2, p);
        CHECK(r.p_folded[0] == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(r.p_folded[1] == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(r.shift[0] == 1);
        CHECK(r.shift[1] == -1);
    }
    SUBCASE("idempotent") {
        Vec p(1);
        p << 0.7;
        auto r1 = fold_to_bz(lat1, p);
        auto r2 = fold_to_bz(lat1, r1.p_folded);
        CHECK(r2.shift[0] == 0);
        CHECK(r2.p_folded[0] == r1.p_folded[0]);
    }
}

TEST_CASE("periodic potential coefficients and evaluation") {
    auto lat = LatticeSpec::cubic(1, 2.0 * kPi);
    SUBCASE("mathieu V = 2 cos z") {
        auto V = PeriodicPotential::single_cosine(lat, 2.0);
        Vec z(1);
        z << 0.3;
        CHECK(V.eval(z) == doctest::Approx(2.0 * std::cos(0.3)).epsilon(1e-14));
        IVec m(1);
        m << 1;
        CHECK(V.coefficient(m).real() == doctest::Approx(1.0));
    }
    SUBCASE("non-Hermitian data rejected") {
        IVec m(1);
        m << 1;
        std::vector<std::pair<IVec, cplx>> c = {{m, cplx(1.0, 0.5)}, {-m, cplx(1.0, 0.5)}};
        CHECK_THROWS_AS(PeriodicPotential(lat, c), ConfigError);
    }
    SUBCASE("Hermitian complex pair accepted and real-valued") {
        IVec m(1);
        m << 2;
        std::vector<std::pair<IVec, cplx>> c = {{m, cplx(0.3, 0.4)}, {-m, cplx(0.3, -0.4)}};
        PeriodicPotential V(lat, c);
        Vec z(1);
        z << 1.1;
        const double expect = 2.0 * (0.3 * std::cos(2.0 * 1.1) - 0.4 * std::sin(2.0 * 1.1));
        CHECK(V.eval(z) == doctest::Approx(expect).epsilon(1e-13));
    }
}

TEST_CASE("external potential derivatives") {
    SUBCASE("quadratic constant hessian") {
        const double omega = 1.3;
        Vec g = Vec::Zero(1);
        Mat H(1, 1);
        H << omega * omega;
        auto W = ExternalPotential::quadratic(0.0, g, H);
        Vec x(1);
        x << 1.0;
        CHECK(W.hess(x)(0, 0) == doctest::Approx(omega * omega));
        CHECK(W.third(x)(0, 0, 0) == 0.0);
        CHECK(W.value(x) == doctest::Approx(0.5 * omega * omega));
    }
    SUBCASE("cosine parity at the origin") {
        Vec k(1);
        k << 1.0;
        auto W = ExternalPotential::cosine_sum({0.7}, {k}, {0.0});
        Vec x = Vec::Zero(1);
        CHECK(W.grad(x)[0] == 0.0);
        CHECK(W.third(x)(0, 0, 0) == 0.0);
        CHECK(W.hess(x)(0, 0) == doctest::Approx(-0.7));
    }
    SUBCASE("gaussian well closed forms at x = 0.7") {
        Vec x0 = Vec::Zero(1);
        auto W = ExternalPotential::gaussian_well(1.0, x0, 1.0);
        Vec x(1);
        x << 0.7;
        // frozen values computed by order-6 centered finite differences
        CHECK(W.grad(x)[0] == doctest::Approx(0.5478931767693077).epsilon(1e-12));
        CHECK(W.hess(x)(0, 0) == doctest::Approx(0.39917931450335276).epsilon(1e-12));
        CHECK(W.third(x)(0, 0, 0) == doctest::Approx(-1.375211873690962).epsilon(1e-11));
        CHECK(W.fourth(x)(0, 0, 0, 0) == doctest::Approx(-0.234889631926385).epsilon(1e-10));
    }
    SUBCASE("order above four refused") {
        auto W = ExternalPotential::zero(1);
        Vec x = Vec::Zero(1);
        CHECK_THROWS_AS(eval_W_derivatives(W, x, 5), UnsupportedOrder);
        CHECK(std::get<double>(eval_W_derivatives(W, x, 0)) == 0.0);
    }
}

// property: each closed-form tensor is the O(h^2) centered difference of the
// one a rank below, for every family
TEST_CASE("derivative tensors consistent with finite differences") {
    const double h = 1e-5;
    auto check_family = [&](const ExternalPotential& W, const Vec& x) {
        const int d = W.dim();
        Vec g = W.grad(x);
        Mat H = W.hess(x);
        Tensor3 T = W.third(x);
        Tensor4 F = W.fourth(x);
        for (int i = 0; i < d; ++i) {
            Vec xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            CHECK(g[i] == doctest::Approx((W.value(xp) - W.value(xm)) / (2 * h)).epsilon(1e-7));
            Vec gp = W.grad(xp), gm = W.grad(xm);
            Mat Hp = W.hess(xp), Hm = W.hess(xm);
            Tensor3 Tp = W.third(xp), Tm = W.third(xm);
            for (int j = 0; j < d; ++j) {
                CHECK(H(j, i) == doctest::Approx((gp[j] - gm[j]) / (2 * h)).epsilon(1e-6));
                for (int k = 0; k < d; ++k) {
                    CHECK(T(j, k, i) ==
                          doctest::Approx((Hp(j, k) - Hm(j, k)) / (2 * h)).epsilon(2e-5));
                    for (int l = 0; l < d; ++l)
                        CHECK(F(j, k, l, i) ==
                              doctest::Approx((Tp(j, k, l) - Tm(j, k, l)) / (2 * h)).epsilon(2e-4));
                }
            }
        }
        // permutation symmetry of the third tensor
        CHECK(T.max_asymmetry() < 1e-12);
    };

    SUBCASE("cosine_sum 2d") {
        Vec k1(2), k2(2), x(2);
        k1 << 1.0, 0.5;
        k2 << -0.3, 1.1;
        x << 0.4, -0.2;
        check_family(ExternalPotential::cosine_sum({0.8, 0.25}, {k1, k2}, {0.1, -0.7}), x);
    }
    SUBCASE("gaussian well 2d") {
        Vec x0(2), x(2);
        x0 << 0.1, -0.3;
        x << 0.6, 0.2;
        check_family(ExternalPotential::gaussian_well(1.4, x0, 0.9), x);
    }
    SUBCASE("quadratic 2d") {
        Vec g(2), x(2);
        g << 0.2, -0.1;
        Mat H(2, 2);
        H << 1.0, 0.3, 0.3, 2.0;
        x << 0.5, 0.8;
        check_family(ExternalPotential::quadratic(0.4, g, H), x);
    }
}
