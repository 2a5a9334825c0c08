#include "rispos/channel.hpp"

#include <cmath>

#include "rispos/rng.hpp"

namespace rispos {

double SystemConfig::power_watts() const { return std::pow(10.0, (power_dbm - 30.0) / 10.0); }

double SystemConfig::noise_variance() const {
    return std::pow(10.0, (noise_dbm_hz - 30.0) / 10.0) * bandwidth_hz / subcarriers;
}

void SystemConfig::validate(int num_paths) const {
    if (!(carrier_hz > 0.0) || !(bandwidth_hz > 0.0) || subcarriers < 1)
        throw Error(ErrorCode::ConfigError, "carrier, bandwidth and subcarrier count must be positive");
    if (grid_m < 2 || grid_a < 2 || grid_e < 2)
        throw Error(ErrorCode::ConfigError, "dictionary grids need at least two points");
    if (slots != block0_slots + blocks * block_slots)
        throw Error(ErrorCode::ScheduleInfeasible, "T must equal T1 + blocks * V");
    if (block0_slots < 8 * num_paths - 2)
        throw Error(ErrorCode::ScheduleInfeasible, "T1 must be at least 8(Q+1) - 2");
    if (block_slots < num_paths)
        throw Error(ErrorCode::ScheduleInfeasible, "V must be at least Q+1");
    if (blocks + 1 < 6)
        throw Error(ErrorCode::ScheduleInfeasible, "at least six distinct RIS phase blocks are needed");
}

namespace {

Dictionary ula_dictionary(int grid, double ratio, int n_ant) {
    Dictionary d;
    d.grid = grid;
    d.ratio = ratio;
    d.atoms.resize(n_ant, grid);
    for (int k = 0; k < grid; ++k)
        d.atoms.col(k) = steer_ula(d.frequency(k), n_ant);
    return d;
}

} // namespace

Dictionary build_ms_dictionary(const SystemConfig& cfg, const ScenarioGeometry& g) {
    return ula_dictionary(cfg.grid_m, g.ms_ratio(), g.n_m);
}

RisDictionary build_ris_dictionary(const SystemConfig& cfg, const ScenarioGeometry& g) {
    RisDictionary r;
    r.az = ula_dictionary(cfg.grid_a, g.ris_a_ratio(), g.n_a);
    r.el = ula_dictionary(cfg.grid_e, g.ris_e_ratio(), g.n_e);
    r.atoms.resize(g.n_r(), cfg.grid_a * cfg.grid_e);
    for (int ke = 0; ke < cfg.grid_e; ++ke)
        for (int ka = 0; ka < cfg.grid_a; ++ka)
            r.atoms.col(r.index(ke, ka)) = steer_upa(r.az.frequency(ka), r.el.frequency(ke), g.n_a, g.n_e);
    return r;
}

CVec bs_response(const ScenarioGeometry& g, const RisBsAngles& out) {
    return steer_ula(g.bs_ratio() * std::sin(out.theta_r0), g.n_b);
}

CVec ms_response(const ScenarioGeometry& g, double theta_t) {
    return steer_ula(g.ms_ratio() * std::sin(theta_t), g.n_m);
}

CVec ris_difference_response(const ScenarioGeometry& g, double phi_in, double psi_in, const RisBsAngles& out) {
    const RisFrequency d = ris_frequency_difference(g, phi_in, psi_in, out);
    return steer_upa(d.az, d.el, g.n_a, g.n_e);
}

cd delay_phase(double tau, int n, const SystemConfig& cfg) {
    return std::polar(1.0, -2.0 * kPi * tau * n * cfg.bandwidth_hz / cfg.subcarriers);
}

namespace {

struct PathResponse {
    CVec a_m;
    CVec a_r;
};

std::vector<PathResponse> path_responses(const ScenarioGeometry& g, const ChannelParams& params) {
    std::vector<PathResponse> r;
    for (const PathParams& p : params.paths)
        r.push_back({ms_response(g, p.theta_t), ris_difference_response(g, p.phi_in, p.psi_in, params.out)});
    return r;
}

CMat channel_from_responses(const SystemConfig& cfg, const CVec& a_b, const std::vector<PathResponse>& resp,
                            const ChannelParams& params, const CVec& g_t, int n) {
    CMat h = CMat::Zero(a_b.size(), resp.front().a_m.size());
    for (int q = 0; q < params.num_paths(); ++q) {
        const PathParams& p = params.paths[q];
        const cd coeff = p.delta * delay_phase(p.tau, n, cfg) * (g_t.transpose() * resp[q].a_r)(0);
        h.noalias() += coeff * a_b * resp[q].a_m.adjoint();
    }
    return h;
}

} // namespace

CMat build_channel(const SystemConfig& cfg, const ScenarioGeometry& g, const ChannelParams& params, const CVec& g_t,
                   int n) {
    if (params.num_paths() < 1 || g_t.size() != g.n_r())
        throw Error(ErrorCode::DimensionMismatch, "RIS phase vector length or empty path list");
    if (n < 0 || n >= cfg.subcarriers)
        throw Error(ErrorCode::DimensionMismatch, "subcarrier index out of range");
    return channel_from_responses(cfg, bs_response(g, params.out), path_responses(g, params), params, g_t, n);
}

RxSignal synthesize_rx(const SystemConfig& cfg, const ScenarioGeometry& g, const ChannelParams& params,
                       const PhaseSchedule& schedule, const Pilots& pilots, std::uint64_t noise_seed, bool add_noise) {
    const int T = schedule.num_slots();
    if (pilots.rows() != g.n_m || pilots.cols() != T || schedule.blocks.cols() != g.n_r())
        throw Error(ErrorCode::DimensionMismatch, "pilots or schedule do not match the arrays");
    if (params.num_paths() < 1)
        throw Error(ErrorCode::DimensionMismatch, "empty path list");

    // Steering vectors are evaluated once per path and shared by all subcarriers.
    const CVec a_b = bs_response(g, params.out);
    const std::vector<PathResponse> resp = path_responses(g, params);

    RxSignal rx;
    rx.x = pilots;
    rx.y.assign(cfg.subcarriers, CMat::Zero(g.n_b, T));
    for (int n = 0; n < cfg.subcarriers; ++n) {
        for (int i = 0; i < schedule.num_blocks(); ++i) {
            const CMat h = channel_from_responses(cfg, a_b, resp, params, schedule.blocks.row(i).transpose(), n);
            for (int t = 0; t < T; ++t)
                if (schedule.slot_block[t] == i)
                    rx.y[n].col(t).noalias() = h * pilots.col(t);
        }
    }
    if (add_noise) {
        Rng rng(noise_seed);
        std::normal_distribution<double> normal(0.0, std::sqrt(cfg.noise_variance() / 2.0));
        for (int n = 0; n < cfg.subcarriers; ++n)
            for (int t = 0; t < T; ++t)
                for (int b = 0; b < g.n_b; ++b) {
                    const double re = normal(rng);
                    const double im = normal(rng);
                    rx.y[n](b, t) += cd(re, im);
                }
    }
    return rx;
}

PhaseSchedule make_phase_schedule(const SystemConfig& cfg, int n_r, std::uint64_t seed) {
    if (cfg.slots != cfg.block0_slots + cfg.blocks * cfg.block_slots || cfg.block0_slots < 1 || cfg.block_slots < 1)
        throw Error(ErrorCode::ScheduleInfeasible, "T must equal T1 + blocks * V with positive block lengths");
    Rng rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    PhaseSchedule s;
    s.blocks.resize(cfg.blocks + 1, n_r);
    for (int i = 0; i <= cfg.blocks; ++i)
        for (int k = 0; k < n_r; ++k)
            s.blocks(i, k) = std::polar(1.0, phase(rng));
    s.slot_block.resize(cfg.slots);
    for (int t = 0; t < cfg.slots; ++t)
        s.slot_block[t] = t < cfg.block0_slots ? 0 : 1 + (t - cfg.block0_slots) / cfg.block_slots;
    return s;
}

CMat make_pilot_signs(const SystemConfig& cfg, int n_m, std::uint64_t seed) {
    Rng rng(seed);
    std::bernoulli_distribution coin(0.5);
    CMat s(n_m, cfg.slots);
    for (int t = 0; t < cfg.slots; ++t)
        for (int k = 0; k < n_m; ++k)
            s(k, t) = coin(rng) ? 1.0 : -1.0;
    return s;
}

Pilots scale_pilots(const CMat& signs, double power_watts) {
    return signs * std::sqrt(power_watts / static_cast<double>(signs.rows()));
}

Pilots make_pilots(const SystemConfig& cfg, int n_m, std::uint64_t seed) {
    return scale_pilots(make_pilot_signs(cfg, n_m, seed), cfg.power_watts());
}

double vlos_path_loss_db(const SystemConfig& cfg, const ScenarioGeometry& g, double shadowing_db) {
    const double d_mr = (g.ms - g.ris).norm();
    const double d_rb = (g.ris - g.bs).norm();
    if (!(d_mr > 0.0) || !(d_rb > 0.0))
        throw Error(ErrorCode::DegenerateGeometry, "path loss needs positive distances");
    return 28.0 + 40.0 * std::log10(cfg.carrier_hz / 1e9) + 10.0 * cfg.pathloss_exponent * std::log10(d_mr * d_rb) +
           shadowing_db;
}

std::vector<cd> draw_gains(const SystemConfig& cfg, const ScenarioGeometry& g, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double xi = cfg.shadowing_db > 0.0 ? cfg.shadowing_db * normal(rng) : 0.0;
    const double pl0 = vlos_path_loss_db(cfg, g, xi);
    std::vector<cd> gains;
    for (int q = 0; q < g.num_paths(); ++q) {
        const double pl = q == 0 ? pl0 : pl0 + cfg.nlos_excess_db;
        const double sd = std::sqrt(std::pow(10.0, -pl / 10.0) / 2.0);
        const double re = normal(rng);
        const double im = normal(rng);
        gains.emplace_back(sd * re, sd * im);
    }
    return gains;
}

} // namespace rispos
