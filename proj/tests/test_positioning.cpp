#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "rispos/bounds.hpp"
#include "rispos/harness.hpp"
#include "rispos/positioning.hpp"

using namespace rispos;

namespace {

const std::vector<cd> kGains{cd(2e-7, -1e-7), cd(1e-7, 3e-7)};

} // namespace

TEST_CASE("closed form recovers the default scenario") {
    const ScenarioGeometry g = default_geometry();
    const ChannelParams eta = channel_params(g, kGains);
    std::vector<std::string> flags;
    const PositionParams p = closed_form_position(eta, g.ris, g.bs, &flags);
    CHECK((p.ms - Vec3(22.0, 35.0, 1.5)).norm() < 1e-9);
    CHECK(p.alpha * 180.0 / kPi == doctest::Approx(75.0).epsilon(1e-10));
    REQUIRE(p.scatterers.size() == 1);
    CHECK((p.scatterers[0] - Vec3(6.0, 5.0, 3.0)).norm() < 1e-9);
    CHECK(flags.empty());
    CHECK(p.gains[1] == kGains[1]);
}

TEST_CASE("scatterer level with the RIS uses the distance form") {
    ScenarioGeometry g = default_geometry();
    g.scatterers = {Vec3(g.ris.x(), 2.0, 5.0)};
    const ChannelParams eta = channel_params(g, kGains);
    const Vec3 s = closed_form_scatterer(eta.paths[1], g.ms, g.alpha, g.ris, g.bs);
    CHECK((s - g.scatterers[0]).norm() < 1e-9);
}

TEST_CASE("closed form reports infeasible inputs") {
    const ScenarioGeometry g = default_geometry();
    const ChannelParams eta = channel_params(g, kGains);

    PathParams short_delay = eta.paths[0];
    short_delay.tau = 0.5 * (g.ris - g.bs).norm() / kSpeedOfLight;
    CHECK_THROWS_AS(closed_form_ms(short_delay, g.ris, g.bs), Error);

    PathParams normal = eta.paths[0];
    normal.phi_in = 0.0;
    CHECK_THROWS_AS(closed_form_ms(normal, g.ris, g.bs), Error);

    PathParams steep = eta.paths[0];
    steep.theta_t = 80.0 * kPi / 180.0;
    steep.phi_in = 20.0 * kPi / 180.0;
    try {
        closed_form_ms(steep, g.ris, g.bs);
        FAIL("expected ArccosDomain");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ArccosDomain);
    }

    PathParams flat = eta.paths[1];
    const double a = -std::sin(flat.phi_in) * std::cos(flat.psi_in);
    const double b = -std::sin(flat.phi_in) * std::sin(flat.psi_in);
    flat.theta_t = std::asin(-(a * std::cos(g.alpha) - b * std::sin(g.alpha)));
    try {
        closed_form_scatterer(flat, g.ms, g.alpha, g.ris, g.bs);
        FAIL("expected SingularDenominator");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularDenominator);
    }
}

TEST_CASE("orientation branch stays consistent with the AOD") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 50; ++i) {
        const ScenarioGeometry g = oracle::random_geometry(rng);
        const ChannelParams eta = channel_params(g, kGains);
        const MsEstimate e = closed_form_ms(eta.paths[0], g.ris, g.bs);
        CHECK(e.alpha >= 0.0);
        CHECK(e.alpha < kPi);
        CHECK(std::sin(oracle::aod(g.ris - e.ms, e.alpha)) == doctest::Approx(std::sin(eta.paths[0].theta_t)));
    }
}

TEST_CASE("Levenberg-Marquardt stays at an exact fixed point") {
    const ScenarioGeometry g = default_geometry();
    const PositionParams truth = position_params(g, kGains);
    const VecX eta = channel_params(g, kGains).flatten();
    const MatX w = MatX::Identity(eta.size(), eta.size());
    const LmResult r = refine_position_lm(eta, w, truth, g.bs, g.ris);
    CHECK(r.converged);
    CHECK(r.iterations <= 2);
    CHECK((r.params.ms - truth.ms).norm() < 1e-9);
}

TEST_CASE("Levenberg-Marquardt returns to the truth from a perturbed start") {
    ExperimentConfig cfg;
    const SystemModel m = make_model(cfg, 10.0);
    const ChannelParams eta = channel_params(m.arrays, kGains);
    const PositionParams truth = position_params(m.arrays, kGains);
    const MatX w = fim_channel(m, eta, m.cfg.noise_variance());
    PositionParams init = truth;
    init.ms += Vec3(0.3, -0.2, 0.1);
    init.alpha += 0.01;
    init.scatterers[0] += Vec3(-0.2, 0.1, 0.15);
    const LmResult r = refine_position_lm(eta.flatten(), w, init, m.arrays.bs, m.arrays.ris);
    CHECK(r.final_cost <= r.initial_cost);
    CHECK((r.params.ms - truth.ms).norm() < 1e-6);
    CHECK(std::abs(r.params.alpha - truth.alpha) < 1e-8);
    CHECK((r.params.scatterers[0] - truth.scatterers[0]).norm() < 1e-6);

    // Any weight still never ends above the starting cost.
    const MatX id = MatX::Identity(w.rows(), w.cols());
    const LmResult ri = refine_position_lm(eta.flatten(), id, init, m.arrays.bs, m.arrays.ris);
    CHECK(ri.final_cost <= ri.initial_cost);

    LmSettings bad;
    bad.damping_up = 0.5;
    CHECK_THROWS_AS(refine_position_lm(eta.flatten(), w, init, m.arrays.bs, m.arrays.ris, bad), Error);
}

TEST_CASE("weight regularization floors the spectrum") {
    MatX w = MatX::Zero(3, 3);
    w(0, 0) = 4.0;
    w(1, 1) = 1.0;
    w(0, 1) = 2.0;
    w(1, 0) = 2.0;
    const MatX r = regularize_weight(w);
    Eigen::SelfAdjointEigenSolver<MatX> eig(r);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
    CHECK((r - r.transpose()).norm() == 0.0);
}
