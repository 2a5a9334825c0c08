#include <doctest.h>

#include "oracles.hpp"
#include "rispos/geometry.hpp"
#include "rispos/positioning.hpp"

using namespace rispos;

namespace {

constexpr double kDeg = 180.0 / kPi;

} // namespace

TEST_CASE("steering vectors follow exp(-j 2 pi k u)") {
    const CVec a = steer_ula(0.3, 8);
    CHECK((a - oracle::ula(0.3, 8)).norm() < 1e-13);
    CHECK(a(0) == cd(1.0, 0.0));

    // Broadside steering is the all-ones vector.
    CHECK((steer_ula(0.0, 5) - CVec::Ones(5)).norm() == 0.0);

    const ScenarioGeometry g = default_geometry();
    const CVec upa = steer_upa(g.ris_a_ratio() * std::sin(4.0) * std::sin(1.1), g.ris_e_ratio() * std::cos(1.1),
                               g.n_a, g.n_e);
    CHECK((upa - oracle::upa(g, 1.1, 4.0)).norm() < 1e-12);

    // The scalar template also works in single precision.
    const auto af = steer_ula<float>(0.25f, 4);
    CHECK(std::abs(af(1) - std::complex<float>(0.0f, -1.0f)) < 1e-6f);
}

TEST_CASE("default scenario angles and delays match direct vector geometry") {
    const ScenarioGeometry g = default_geometry();
    g.validate();
    const std::vector<PathAngles> a = angles_from_geometry(g);
    const std::vector<double> tau = toas_from_geometry(g);
    REQUIRE(a.size() == 2);

    double phi = 0.0, psi = 0.0;
    oracle::incidence(g.ris - g.ms, phi, psi);
    CHECK(a[0].phi_in == doctest::Approx(phi).epsilon(1e-12));
    CHECK(a[0].psi_in == doctest::Approx(psi).epsilon(1e-12));
    CHECK(a[0].theta_t == doctest::Approx(oracle::aod(g.ris - g.ms, g.alpha)).epsilon(1e-12));

    oracle::incidence(g.ris - g.scatterers[0], phi, psi);
    CHECK(a[1].phi_in == doctest::Approx(phi).epsilon(1e-12));
    CHECK(a[1].psi_in == doctest::Approx(psi).epsilon(1e-12));
    CHECK(a[1].theta_t == doctest::Approx(oracle::aod(g.scatterers[0] - g.ms, g.alpha)).epsilon(1e-12));

    // Rounded values for the layout with BS (0,0,28), RIS (-6,8,20), MS (22,35,1.5), scatterer (6,5,3).
    CHECK(a[0].psi_in * kDeg == doctest::Approx(223.958).epsilon(1e-5));
    CHECK(a[0].phi_in * kDeg == doctest::Approx(64.5637).epsilon(1e-5));
    CHECK(a[0].theta_t * kDeg == doctest::Approx(25.9279).epsilon(1e-5));
    CHECK(a[1].theta_t * kDeg == doctest::Approx(46.8680).epsilon(1e-5));

    const double d_rb = std::sqrt(6.0 * 6.0 + 8.0 * 8.0 + 8.0 * 8.0);
    const double d_mr = std::sqrt(28.0 * 28.0 + 27.0 * 27.0 + 18.5 * 18.5);
    CHECK(tau[0] == doctest::Approx((d_rb + d_mr) / oracle::kC).epsilon(1e-14));
    const double d_sr = std::sqrt(12.0 * 12.0 + 3.0 * 3.0 + 17.0 * 17.0);
    const double d_ms = std::sqrt(16.0 * 16.0 + 30.0 * 30.0 + 1.5 * 1.5);
    CHECK(tau[1] == doctest::Approx((d_rb + d_sr + d_ms) / oracle::kC).epsilon(1e-14));

    const RisBsAngles out = ris_bs_angles(g.bs, g.ris);
    CHECK(out.theta_r0 == doctest::Approx(std::asin(6.0 / d_rb)).epsilon(1e-14));
    CHECK(out.phi_out0 == doctest::Approx(std::acos(8.0 / d_rb)).epsilon(1e-14));
    CHECK(out.psi_out0 == doctest::Approx(std::asin(-0.8)).epsilon(1e-14));
}

TEST_CASE("RIS frequency difference of the default scenario stays within one period") {
    const ScenarioGeometry g = default_geometry();
    const RisBsAngles out = ris_bs_angles(g.bs, g.ris);
    for (const PathAngles& a : angles_from_geometry(g)) {
        const RisFrequency d = ris_frequency_difference(g, a.phi_in, a.psi_in, out);
        CHECK(d.az / g.ris_a_ratio() >= -1.0);
        CHECK(d.az / g.ris_a_ratio() < 1.0);
        CHECK(d.el / g.ris_e_ratio() >= -1.0);
        CHECK(d.el / g.ris_e_ratio() < 1.0);
    }
}

TEST_CASE("degenerate geometry is rejected") {
    CHECK_THROWS_AS(guarded_asin(1.1), Error);
    CHECK(guarded_asin(1.0 + 1e-12) == doctest::Approx(kPi / 2));
    CHECK_THROWS_AS(ris_bs_angles(Vec3(1, 2, 3), Vec3(1, 2, 3)), Error);
    // BS directly above the RIS has no azimuth.
    CHECK_THROWS_AS(ris_bs_angles(Vec3(0, 0, 5), Vec3(0, 0, 1)), Error);

    ScenarioGeometry g = default_geometry();
    g.alpha = kPi;
    CHECK_THROWS_AS(g.validate(), Error);
    g = default_geometry();
    g.d_ms = g.wavelength;
    CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("parameter vectors flatten and unflatten losslessly") {
    const ScenarioGeometry g = default_geometry();
    const std::vector<cd> gains{cd(1e-7, -2e-7), cd(3e-8, 4e-8)};
    const ChannelParams c = channel_params(g, gains);
    const VecX eta = c.flatten();
    REQUIRE(eta.size() == 12);
    CHECK(eta(kDeltaI) == -2e-7);
    CHECK(eta(kPerPath + kTheta) == c.paths[1].theta_t);
    CHECK((ChannelParams::unflatten(eta, c.out).flatten() - eta).norm() == 0.0);

    const PositionParams p = position_params(g, gains);
    const VecX v = p.flatten();
    REQUIRE(v.size() == 5 * 1 + 6);
    CHECK(v(p.ms_offset()) == 22.0);
    CHECK(v(p.alpha_offset()) == g.alpha);
    CHECK(v(p.alpha_offset() + 1) == 6.0);
    CHECK((PositionParams::unflatten(v, 2).flatten() - v).norm() == 0.0);
}

TEST_CASE("closed forms invert the forward map") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 50; ++i) {
        const ScenarioGeometry g = oracle::random_geometry(rng);
        const std::vector<cd> gains{cd(1e-7, 2e-7), cd(-3e-8, 1e-8)};
        const ChannelParams eta = channel_params(g, gains);
        const PositionParams p = closed_form_position(eta, g.ris, g.bs);
        const ChannelParams back = forward_map_G(p, g.bs, g.ris);
        for (int q = 0; q < 2; ++q) {
            CHECK(back.paths[q].tau == doctest::Approx(eta.paths[q].tau).epsilon(1e-9));
            CHECK(std::abs(back.paths[q].theta_t - eta.paths[q].theta_t) < 1e-8);
            CHECK(std::abs(back.paths[q].phi_in - eta.paths[q].phi_in) < 1e-8);
            CHECK(std::abs(wrap_difference(back.paths[q].psi_in - eta.paths[q].psi_in, 2 * kPi)) < 1e-8);
        }
    }
}

TEST_CASE("angle wrapping") {
    CHECK(wrap_positive(-0.5, 2.0) == doctest::Approx(1.5));
    CHECK(wrap_positive(4.25, 2.0) == doctest::Approx(0.25));
    CHECK(wrap_difference(3.5, 2 * kPi) == doctest::Approx(3.5 - 2 * kPi));
    CHECK(wrap_difference(-0.1, 2 * kPi) == doctest::Approx(-0.1));
}
