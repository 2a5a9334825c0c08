#include "rispos/sage.hpp"

#include <algorithm>
#include <cmath>

#include "rispos/coarse_est.hpp"

namespace rispos {

namespace {

CVec slot_ris_gain(const SystemModel& model, const RisBsAngles& out, double phi_in, double psi_in) {
    const CVec a_r = ris_difference_response(model.arrays, phi_in, psi_in, out);
    const CVec per_block = model.schedule.blocks * a_r;
    CVec sigma(model.schedule.num_slots());
    for (int t = 0; t < sigma.size(); ++t)
        sigma(t) = per_block(model.schedule.slot_block[t]);
    return sigma;
}

CVec delay_ramp(const SystemConfig& cfg, double tau, int nsub) {
    CVec e(nsub);
    for (int n = 0; n < nsub; ++n)
        e(n) = delay_phase(tau, n, cfg);
    return e;
}

} // namespace

CVec pilot_projection(const SystemModel& model, double theta_t) {
    return (ms_response(model.arrays, theta_t).adjoint() * model.pilots).transpose();
}

CVec ris_gain_per_slot(const SystemModel& model, double phi_in, double psi_in) {
    return slot_ris_gain(model, model.out(), phi_in, psi_in);
}

std::vector<CMat> path_signal(const SystemModel& model, const RisBsAngles& out, const PathParams& path) {
    const CVec a_b = bs_response(model.arrays, out);
    const CVec r = pilot_projection(model, path.theta_t).cwiseProduct(slot_ris_gain(model, out, path.phi_in, path.psi_in));
    const CMat rank_one = a_b * r.transpose();
    std::vector<CMat> y;
    for (int n = 0; n < model.cfg.subcarriers; ++n)
        y.push_back(path.delta * delay_phase(path.tau, n, model.cfg) * rank_one);
    return y;
}

std::vector<CMat> mean_signal(const SystemModel& model, const ChannelParams& params) {
    std::vector<CMat> mu(model.cfg.subcarriers, CMat::Zero(model.arrays.n_b, model.schedule.num_slots()));
    for (const PathParams& p : params.paths) {
        const std::vector<CMat> y = path_signal(model, params.out, p);
        for (std::size_t n = 0; n < mu.size(); ++n)
            mu[n] += y[n];
    }
    return mu;
}

double global_log_likelihood(const SystemModel& model, const ChannelParams& params, const RxSignal& rx) {
    const int nsub = static_cast<int>(rx.y.size());
    const int np = params.num_paths();
    const CVec a_b = bs_response(model.arrays, params.out);
    CMat z(model.schedule.num_slots(), nsub);
    for (int n = 0; n < nsub; ++n)
        z.col(n) = (a_b.adjoint() * rx.y[n]).transpose();

    std::vector<CVec> r(np);
    std::vector<CVec> e(np);
    for (int q = 0; q < np; ++q) {
        const PathParams& p = params.paths[q];
        r[q] = pilot_projection(model, p.theta_t).cwiseProduct(slot_ris_gain(model, params.out, p.phi_in, p.psi_in));
        e[q] = delay_ramp(model.cfg, p.tau, nsub);
    }

    double cross = 0.0;
    for (int q = 0; q < np; ++q) {
        // a_M^H X Sigma_q Y^H[n] a_B = sum_t r_q,t conj(z_t[n])
        const cd s = (r[q].transpose() * z.conjugate() * e[q])(0);
        cross += 2.0 * (params.paths[q].delta * s).real();
    }
    cd energy(0.0, 0.0);
    for (int q1 = 0; q1 < np; ++q1)
        for (int q2 = 0; q2 < np; ++q2) {
            const cd sub = e[q1].dot(e[q2]);
            const cd slot = r[q1].dot(r[q2]);
            energy += std::conj(params.paths[q1].delta) * params.paths[q2].delta * sub * slot;
        }
    return cross - static_cast<double>(model.arrays.n_b) * energy.real();
}

std::vector<CMat> reconstruct_complete_data(const SystemModel& model, const RxSignal& rx, const ChannelParams& fresh,
                                            const ChannelParams& previous, int q) {
    std::vector<CMat> yq = rx.y;
    const int np = fresh.num_paths();
    for (int other = 0; other < np; ++other) {
        if (other == q)
            continue;
        const ChannelParams& src = other < q ? fresh : previous;
        const std::vector<CMat> s = path_signal(model, src.out, src.paths[other]);
        for (std::size_t n = 0; n < yq.size(); ++n)
            yq[n] -= s[n];
    }
    return yq;
}

cd gain_closed_form(const SystemModel& model, const std::vector<CMat>& yq, double tau, double theta_t,
                    const CVec& sigma) {
    const CVec a_b = bs_response(model.arrays, model.out());
    const CVec p = pilot_projection(model, theta_t);
    const int nsub = static_cast<int>(yq.size());
    cd num(0.0, 0.0);
    for (int n = 0; n < nsub; ++n) {
        const CVec z = (a_b.adjoint() * yq[n]).transpose();
        // sum_t z_t conj(sigma_t) x_t^H a_M, with x_t^H a_M = conj(p_t)
        num += std::conj(delay_phase(tau, n, model.cfg)) * (z.transpose() * sigma.cwiseProduct(p).conjugate())(0);
    }
    const double den = model.arrays.n_b * nsub * sigma.cwiseProduct(p).squaredNorm();
    if (!(den > 0.0))
        throw Error(ErrorCode::ZeroDenominator, "gain denominator vanished");
    return num / den;
}

SinglePathObjective::SinglePathObjective(const SystemModel& model, const std::vector<CMat>& yq) : model_(&model) {
    const CVec a_b = bs_response(model.arrays, model.out());
    z_.resize(model.schedule.num_slots(), static_cast<Eigen::Index>(yq.size()));
    for (std::size_t n = 0; n < yq.size(); ++n)
        z_.col(static_cast<Eigen::Index>(n)) = (a_b.adjoint() * yq[n]).transpose();
}

cd SinglePathObjective::numerator(double tau, const CVec& p, const CVec& sigma) const {
    const CVec ramp = delay_ramp(model_->cfg, tau, static_cast<int>(z_.cols())).conjugate();
    const CVec w = z_ * ramp;
    return (w.transpose() * sigma.cwiseProduct(p).conjugate())(0);
}

double SinglePathObjective::denominator(const CVec& p, const CVec& sigma) const {
    return model_->arrays.n_b * static_cast<double>(z_.cols()) * sigma.cwiseProduct(p).squaredNorm();
}

double SinglePathObjective::value(double tau, double theta_t, double phi_in, double psi_in) const {
    const CVec p = pilot_projection(*model_, theta_t);
    const CVec sigma = ris_gain_per_slot(*model_, phi_in, psi_in);
    const double den = denominator(p, sigma);
    if (!(den > 0.0))
        throw Error(ErrorCode::ZeroDenominator, "single-path denominator vanished");
    return std::norm(numerator(tau, p, sigma)) / den;
}

cd SinglePathObjective::gain(double tau, double theta_t, double phi_in, double psi_in) const {
    const CVec p = pilot_projection(*model_, theta_t);
    const CVec sigma = ris_gain_per_slot(*model_, phi_in, psi_in);
    const double den = denominator(p, sigma);
    if (!(den > 0.0))
        throw Error(ErrorCode::ZeroDenominator, "single-path denominator vanished");
    return numerator(tau, p, sigma) / den;
}

void coordinate_update_cycle(const SystemModel& model, const std::vector<CMat>& yq, PathParams& path, bool vlos,
                             const SageSettings& settings) {
    const SinglePathObjective obj(model, yq);
    const SystemConfig& cfg = model.cfg;
    auto safe = [](auto&& fn) {
        return [fn](double x) -> double {
            try {
                return fn(x);
            } catch (const Error&) {
                return -INFINITY;
            }
        };
    };

    // Delay, in units of 1/B.
    {
        const double x0 = path.tau * cfg.bandwidth_hz;
        const double lo = std::max(x0 - 0.5, 1e-9);
        const double hi = x0 + 0.5;
        const auto f = safe([&](double x) { return obj.value(x / cfg.bandwidth_hz, path.theta_t, path.phi_in, path.psi_in); });
        path.tau = maximize_1d(f, lo, hi, x0, settings.search).x / cfg.bandwidth_hz;
    }
    // AOD, in sin-space.
    {
        const double u0 = std::sin(path.theta_t);
        const double half = settings.angle_bracket_cells * 2.0 / cfg.grid_m;
        const auto f = safe([&](double u) { return obj.value(path.tau, std::asin(u), path.phi_in, path.psi_in); });
        const double u = maximize_1d(f, std::max(-1.0, u0 - half), std::min(1.0, u0 + half), u0, settings.search).x;
        path.theta_t = std::asin(u);
    }
    // Elevation of incidence, in cos-space.
    {
        const double c0 = std::cos(path.phi_in);
        const double half = settings.angle_bracket_cells * 2.0 / cfg.grid_e;
        const auto f = safe([&](double c) { return obj.value(path.tau, path.theta_t, std::acos(c), path.psi_in); });
        const double c = maximize_1d(f, std::max(-1.0, c0 - half), std::min(1.0, c0 + half), c0, settings.search).x;
        path.phi_in = std::acos(c);
    }
    // Azimuth of incidence, in sin-space on the branch of the path class.
    {
        const double s0 = std::sin(path.psi_in);
        const double half = settings.angle_bracket_cells * 2.0 / cfg.grid_a / std::max(std::sin(path.phi_in), 1e-3);
        const double lo = vlos ? std::max(-1.0, s0 - half) : std::max(0.0, s0 - half);
        const double hi = vlos ? std::min(0.0, s0 + half) : std::min(1.0, s0 + half);
        const auto f = safe([&](double s) {
            return obj.value(path.tau, path.theta_t, path.phi_in, select_azimuth_branch(s, vlos));
        });
        const double start = std::clamp(s0, lo, hi);
        const SearchResult r = maximize_1d(f, lo, hi, start, settings.search);
        if (r.x != s0)
            path.psi_in = select_azimuth_branch(r.x, vlos);
    }
    path.delta = obj.gain(path.tau, path.theta_t, path.phi_in, path.psi_in);
}

namespace {

bool small_change(const ChannelParams& a, const ChannelParams& b, const SageSettings& s, double bandwidth) {
    for (int q = 0; q < a.num_paths(); ++q) {
        const PathParams& x = a.paths[q];
        const PathParams& y = b.paths[q];
        if (std::abs(x.tau - y.tau) * bandwidth > s.eps_tau_b)
            return false;
        if (std::abs(x.theta_t - y.theta_t) > s.eps_angle || std::abs(x.phi_in - y.phi_in) > s.eps_angle ||
            std::abs(x.psi_in - y.psi_in) > s.eps_angle)
            return false;
        if (std::abs(x.delta - y.delta) > s.eps_gain_rel * std::max(std::abs(y.delta), 1e-300))
            return false;
    }
    return true;
}

} // namespace

SageResult run_sage(const SystemModel& model, const RxSignal& rx, const ChannelParams& init,
                    const SageSettings& settings) {
    if (init.num_paths() < 1)
        throw Error(ErrorCode::DimensionMismatch, "SAGE needs at least one path");
    if (settings.max_cycles < 1)
        throw Error(ErrorCode::ConfigError, "SAGE needs at least one cycle");
    SageResult res;
    res.params = init;
    res.likelihood.push_back(global_log_likelihood(model, res.params, rx));
    for (int cycle = 0; cycle < settings.max_cycles; ++cycle) {
        const ChannelParams before = res.params;
        for (int q = 0; q < res.params.num_paths(); ++q) {
            // Paths already visited in this cycle carry their new values.
            const std::vector<CMat> yq = reconstruct_complete_data(model, rx, res.params, res.params, q);
            coordinate_update_cycle(model, yq, res.params.paths[q], q == 0, settings);
        }
        const double lam = global_log_likelihood(model, res.params, rx);
        const double last = res.likelihood.back();
        res.likelihood.push_back(lam);
        res.cycles = cycle + 1;
        if (small_change(res.params, before, settings, model.cfg.bandwidth_hz) ||
            std::abs(lam - last) <= settings.eps_lik_rel * std::abs(lam)) {
            res.converged = true;
            break;
        }
    }
    return res;
}

} // namespace rispos
