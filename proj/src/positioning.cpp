#include "rispos/positioning.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "rispos/bounds.hpp"

namespace rispos {

namespace {

Vec3 incidence_direction(double phi, double psi) {
    // Unit vector pointing from the RIS towards the source of the incident ray.
    return Vec3(-std::sin(phi) * std::cos(psi), -std::sin(phi) * std::sin(psi), -std::cos(phi));
}

bool in_half_turn(double a) { return a >= 0.0 && a < kPi; }

} // namespace

MsEstimate closed_form_ms(const PathParams& vlos, const Vec3& ris, const Vec3& bs) {
    const double range = vlos.tau * kSpeedOfLight - (ris - bs).norm();
    if (!(range > 0.0))
        throw Error(ErrorCode::InfeasibleGeometry, "VLoS delay does not exceed the RIS-BS leg");
    const double sin_phi = std::sin(vlos.phi_in);
    if (std::abs(sin_phi) < 1e-12)
        throw Error(ErrorCode::InfeasibleGeometry, "VLoS incidence along the RIS normal");

    MsEstimate est;
    est.ms = ris + range * incidence_direction(vlos.phi_in, vlos.psi_in);

    double arg = std::sin(vlos.theta_t) / sin_phi;
    if (std::abs(arg) > 1.0 + 1e-9)
        throw Error(ErrorCode::ArccosDomain, "AOD and incidence elevation are inconsistent");
    arg = std::clamp(arg, -1.0, 1.0);
    const double branch = std::acos(arg);
    const double primary = wrap_positive(2.0 * kPi - vlos.psi_in - branch, 2.0 * kPi);
    const double mirror = wrap_positive(2.0 * kPi - vlos.psi_in + branch, 2.0 * kPi);
    if (in_half_turn(primary)) {
        est.alpha = primary;
        if (in_half_turn(mirror) && std::abs(mirror - primary) > 1e-12)
            est.alpha_alt = mirror;
    } else if (in_half_turn(mirror)) {
        est.alpha = mirror;
        est.flags.push_back("alpha_mirror_branch");
    } else {
        est.alpha = wrap_positive(primary, kPi);
        est.flags.push_back("alpha_wrapped");
    }
    return est;
}

Vec3 closed_form_scatterer(const PathParams& path, const Vec3& ms, double alpha, const Vec3& ris, const Vec3& bs) {
    const Vec3 u = incidence_direction(path.phi_in, path.psi_in);
    const double a = u.x();
    const double b = u.y();
    const double c = u.z();
    const double d = path.tau * kSpeedOfLight - (ris - bs).norm();
    const double st = std::sin(path.theta_t);
    const double ca = std::cos(alpha);
    const double sa = std::sin(alpha);
    const double den = st + a * ca - b * sa;
    if (std::abs(den) < 1e-12)
        throw Error(ErrorCode::SingularDenominator, "scatterer system is singular");

    if (std::abs(a) >= 1e-12) {
        const double sx =
            ((a * d + ris.x()) * st + ms.x() * a * ca + (ris.y() * a - ris.x() * b - ms.y() * a) * sa) / den;
        return Vec3(sx, ris.y() + (sx - ris.x()) * b / a, ris.z() + (sx - ris.x()) * c / a);
    }
    // Same system parameterized by the RIS-scatterer distance, free of the division by A.
    const double d_sr = (d * st - (ris.x() - ms.x()) * ca + (ris.y() - ms.y()) * sa) / den;
    return ris + d_sr * u;
}

PositionParams closed_form_position(const ChannelParams& eta, const Vec3& ris, const Vec3& bs,
                                    std::vector<std::string>* flags) {
    PositionParams p;
    const MsEstimate ms = closed_form_ms(eta.paths.at(0), ris, bs);
    if (flags)
        flags->insert(flags->end(), ms.flags.begin(), ms.flags.end());
    p.ms = ms.ms;
    p.alpha = ms.alpha;
    for (const PathParams& path : eta.paths)
        p.gains.push_back(path.delta);

    // The scatterer formula folds delay and AOD into one equation; the plain
    // path-length equation is left over and scores each orientation branch.
    auto solve = [&](double alpha, std::vector<Vec3>& out) {
        out.clear();
        double mismatch = 0.0;
        for (int q = 1; q < eta.num_paths(); ++q) {
            const Vec3 s = closed_form_scatterer(eta.paths[q], p.ms, alpha, ris, bs);
            const double length = (s - ris).norm() + (p.ms - s).norm() + (ris - bs).norm();
            mismatch += std::abs(length - eta.paths[q].tau * kSpeedOfLight);
            out.push_back(s);
        }
        return mismatch;
    };
    const double primary = solve(p.alpha, p.scatterers);
    if (std::isfinite(ms.alpha_alt) && eta.num_paths() > 1) {
        std::vector<Vec3> alt;
        try {
            if (solve(ms.alpha_alt, alt) < primary) {
                p.alpha = ms.alpha_alt;
                p.scatterers = alt;
                if (flags)
                    flags->push_back("alpha_branch_from_scatterers");
            }
        } catch (const Error&) {
        }
    }
    return p;
}

VecX position_residual(const VecX& eta_hat, const PositionParams& p, const Vec3& bs, const Vec3& ris) {
    VecX r = eta_hat - forward_map_G(p, bs, ris).flatten();
    for (int q = 0; q < p.num_paths(); ++q)
        r(kPerPath * q + kPsi) = wrap_difference(r(kPerPath * q + kPsi), 2.0 * kPi);
    return r;
}

MatX regularize_weight(const MatX& w, double floor_rel) {
    const MatX sym = 0.5 * (w + w.transpose());
    const Eigen::Index n = sym.rows();
    VecX scale(n);
    for (Eigen::Index i = 0; i < n; ++i)
        scale(i) = sym(i, i) > 0.0 ? std::sqrt(sym(i, i)) : 1.0;
    const MatX eq = scale.cwiseInverse().asDiagonal() * sym * scale.cwiseInverse().asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatX> eig(eq);
    VecX lam = eig.eigenvalues();
    const double floor = floor_rel * lam.cwiseAbs().maxCoeff();
    lam = lam.cwiseMax(floor);
    const MatX fixed = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    return scale.asDiagonal() * fixed * scale.asDiagonal();
}

LmResult refine_position_lm(const VecX& eta_hat, const MatX& weight, const PositionParams& init, const Vec3& bs,
                            const Vec3& ris, const LmSettings& settings) {
    if (!(settings.damping > 0.0) || !(settings.damping_up > 1.0) || !(settings.damping_down < 1.0))
        throw Error(ErrorCode::ConfigError, "invalid Levenberg-Marquardt settings");
    const int np = init.num_paths();
    const MatX w = regularize_weight(weight);

    auto cost_of = [&](const PositionParams& p, VecX* residual) -> double {
        try {
            const VecX r = position_residual(eta_hat, p, bs, ris);
            if (residual)
                *residual = r;
            return r.dot(w * r);
        } catch (const Error&) {
            return INFINITY;
        }
    };

    LmResult res;
    res.params = init;
    VecX x = init.flatten();
    VecX r;
    double cost = cost_of(init, &r);
    if (!std::isfinite(cost))
        throw Error(ErrorCode::DegenerateGeometry, "initial position parameters are outside the model domain");
    res.initial_cost = cost;
    double lambda = settings.damping;

    for (int it = 0; it < settings.max_iterations; ++it) {
        res.iterations = it;
        if (cost == 0.0) {
            res.converged = true;
            break;
        }
        // Jacobian of G is T^T, so the Gauss-Newton system uses T W T^T and T W r.
        const MatX t = transformation_matrix(PositionParams::unflatten(x, np), bs, ris);
        const MatX h = t * w * t.transpose();
        const VecX g = t * (w * r);
        const VecX hd = h.diagonal().cwiseMax(1e-300);
        // Dimensionless gradient: each component against its own curvature and the cost.
        const double grad = (g.cwiseAbs().array() / (hd.array() * cost).sqrt()).maxCoeff();
        if (grad <= settings.gradient_tol) {
            res.converged = true;
            break;
        }

        bool accepted = false;
        while (!accepted) {
            MatX a = h;
            a.diagonal() += lambda * hd;
            const VecX step = a.ldlt().solve(g);
            const VecX x_new = x + step;
            VecX r_new;
            const double cost_new = cost_of(PositionParams::unflatten(x_new, np), &r_new);
            if (cost_new < cost) {
                const bool tiny = step.norm() <= settings.step_tol * (x.norm() + settings.step_tol);
                x = x_new;
                r = r_new;
                cost = cost_new;
                lambda = std::max(lambda * settings.damping_down, 1e-15);
                accepted = true;
                if (tiny)
                    res.converged = true;
            } else {
                lambda *= settings.damping_up;
                if (lambda > 1e16) {
                    res.stalled = true;
                    break;
                }
            }
        }
        res.iterations = it + 1;
        if (res.stalled || res.converged)
            break;
    }

    res.params = PositionParams::unflatten(x, np);
    res.params.alpha = wrap_positive(res.params.alpha, 2.0 * kPi);
    res.final_cost = cost;
    return res;
}

} // namespace rispos
