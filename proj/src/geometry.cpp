#include "rispos/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace rispos {

namespace {

constexpr double kDomainTol = 1e-9;
constexpr double kMinDistance = 1e-12;

double checked_norm(const Vec3& v, const char* what) {
    const double d = v.norm();
    if (!(d > kMinDistance))
        throw Error(ErrorCode::DegenerateGeometry, std::string("zero distance: ") + what);
    return d;
}

} // namespace

void ScenarioGeometry::validate() const {
    if (n_b < 1 || n_m < 1 || n_a < 1 || n_e < 1)
        throw Error(ErrorCode::ConfigError, "array sizes must be positive");
    if (!(wavelength > 0.0))
        throw Error(ErrorCode::ConfigError, "wavelength must be positive");
    const double half = 0.5 * wavelength * (1.0 + 1e-12);
    for (double d : {d_bs, d_ms, d_ris_a, d_ris_e})
        if (!(d > 0.0) || d > half)
            throw Error(ErrorCode::ConfigError, "element spacing must lie in (0, lambda/2]");
    if (alpha < 0.0 || alpha >= kPi)
        throw Error(ErrorCode::ConfigError, "alpha must lie in [0, pi)");
    checked_norm(ris - bs, "RIS-BS");
    checked_norm(ris - ms, "RIS-MS");
    for (const Vec3& s : scatterers) {
        checked_norm(ris - s, "RIS-scatterer");
        checked_norm(ms - s, "MS-scatterer");
    }
}

ScenarioGeometry default_geometry(double carrier_hz) {
    ScenarioGeometry g;
    g.bs = Vec3(0.0, 0.0, 28.0);
    g.ris = Vec3(-6.0, 8.0, 20.0);
    g.ms = Vec3(22.0, 35.0, 1.5);
    g.alpha = 75.0 * kPi / 180.0;
    g.scatterers = {Vec3(6.0, 5.0, 3.0)};
    g.n_b = 40;
    g.n_m = 16;
    g.n_a = 10;
    g.n_e = 10;
    g.wavelength = kSpeedOfLight / carrier_hz;
    g.d_bs = g.wavelength / 2.0;
    g.d_ms = g.wavelength / 2.0;
    g.d_ris_a = g.wavelength / 3.0;
    g.d_ris_e = g.wavelength / 3.0;
    return g;
}

double guarded_asin(double x) {
    if (std::abs(x) > 1.0 + kDomainTol)
        throw Error(ErrorCode::DegenerateGeometry, "arcsin argument outside [-1, 1]");
    return std::asin(std::clamp(x, -1.0, 1.0));
}

double guarded_acos(double x) {
    if (std::abs(x) > 1.0 + kDomainTol)
        throw Error(ErrorCode::DegenerateGeometry, "arccos argument outside [-1, 1]");
    return std::acos(std::clamp(x, -1.0, 1.0));
}

RisFrequency ris_frequency_difference(const ScenarioGeometry& g, double phi_in, double psi_in,
                                      const RisBsAngles& out) {
    const RisFrequency in = ris_frequency(phi_in, psi_in, g.ris_a_ratio(), g.ris_e_ratio());
    const RisFrequency o = ris_frequency(out.phi_out0, out.psi_out0, g.ris_a_ratio(), g.ris_e_ratio());
    return {in.az - o.az, in.el - o.el};
}

RisBsAngles ris_bs_angles(const Vec3& bs, const Vec3& ris) {
    const Vec3 d = bs - ris;
    const double dist = checked_norm(d, "RIS-BS");
    const double horiz = std::hypot(d.x(), d.y());
    if (!(horiz > kMinDistance))
        throw Error(ErrorCode::DegenerateGeometry, "BS directly above the RIS");
    RisBsAngles a;
    a.theta_r0 = guarded_asin(d.x() / dist);
    a.phi_out0 = guarded_acos(d.z() / dist);
    a.psi_out0 = guarded_asin(d.y() / horiz);
    return a;
}

namespace {

// Incidence angles at the RIS for a wave arriving from `from`, and the AOD
// at the MS towards `towards` (the first hop of the path).
PathAngles path_angles(const Vec3& ris, const Vec3& from, const Vec3& ms, double alpha, const Vec3& towards) {
    const Vec3 v = ris - from;
    const double dist = checked_norm(v, "RIS-source");
    const double horiz = std::hypot(v.x(), v.y());
    if (!(horiz > kMinDistance))
        throw Error(ErrorCode::DegenerateGeometry, "source directly below the RIS");
    const Vec3 w = towards - ms;
    const double wdist = checked_norm(w, "MS-first hop");
    PathAngles a;
    a.theta_t = guarded_asin((w.x() * std::cos(alpha) - w.y() * std::sin(alpha)) / wdist);
    a.phi_in = guarded_acos(v.z() / dist);
    a.psi_in = kPi - guarded_asin(v.y() / horiz);
    return a;
}

} // namespace

PathAngles vlos_angles(const Vec3& ris, const Vec3& ms, double alpha) {
    return path_angles(ris, ms, ms, alpha, ris);
}

PathAngles nlos_angles(const Vec3& ris, const Vec3& ms, double alpha, const Vec3& scatterer) {
    return path_angles(ris, scatterer, ms, alpha, scatterer);
}

std::vector<PathAngles> angles_from_geometry(const ScenarioGeometry& g) {
    std::vector<PathAngles> out;
    out.push_back(vlos_angles(g.ris, g.ms, g.alpha));
    for (const Vec3& s : g.scatterers)
        out.push_back(nlos_angles(g.ris, g.ms, g.alpha, s));
    return out;
}

namespace {

std::vector<double> toas(const Vec3& bs, const Vec3& ris, const Vec3& ms, const std::vector<Vec3>& scatterers) {
    const double d_rb = checked_norm(ris - bs, "RIS-BS");
    std::vector<double> out;
    out.push_back((d_rb + checked_norm(ms - ris, "MS-RIS")) / kSpeedOfLight);
    for (const Vec3& s : scatterers)
        out.push_back((d_rb + checked_norm(s - ris, "scatterer-RIS") + checked_norm(ms - s, "MS-scatterer")) /
                      kSpeedOfLight);
    return out;
}

} // namespace

std::vector<double> toas_from_geometry(const ScenarioGeometry& g) {
    return toas(g.bs, g.ris, g.ms, g.scatterers);
}

VecX ChannelParams::flatten() const {
    VecX eta(kPerPath * num_paths());
    for (int q = 0; q < num_paths(); ++q) {
        const PathParams& p = paths[q];
        eta.segment<kPerPath>(kPerPath * q) << p.tau, p.delta.real(), p.delta.imag(), p.theta_t, p.phi_in, p.psi_in;
    }
    return eta;
}

ChannelParams ChannelParams::unflatten(const VecX& eta, const RisBsAngles& out) {
    if (eta.size() % kPerPath != 0)
        throw Error(ErrorCode::DimensionMismatch, "channel parameter vector length");
    ChannelParams c;
    c.out = out;
    for (int q = 0; q < eta.size() / kPerPath; ++q) {
        const auto s = eta.segment<kPerPath>(kPerPath * q);
        c.paths.push_back({s(kTau), cd(s(kDeltaR), s(kDeltaI)), s(kTheta), s(kPhi), s(kPsi)});
    }
    return c;
}

VecX PositionParams::flatten() const {
    const int np = num_paths();
    VecX v(5 * np + 1);
    for (int q = 0; q < np; ++q) {
        v(2 * q) = gains[q].real();
        v(2 * q + 1) = gains[q].imag();
    }
    v.segment<3>(ms_offset()) = ms;
    v(alpha_offset()) = alpha;
    for (int q = 1; q < np; ++q)
        v.segment<3>(alpha_offset() + 1 + 3 * (q - 1)) = scatterers[q - 1];
    return v;
}

PositionParams PositionParams::unflatten(const VecX& v, int num_paths) {
    if (v.size() != 5 * num_paths + 1)
        throw Error(ErrorCode::DimensionMismatch, "position parameter vector length");
    PositionParams p;
    for (int q = 0; q < num_paths; ++q)
        p.gains.emplace_back(v(2 * q), v(2 * q + 1));
    p.ms = v.segment<3>(p.ms_offset());
    p.alpha = v(p.alpha_offset());
    for (int q = 1; q < num_paths; ++q)
        p.scatterers.push_back(v.segment<3>(p.alpha_offset() + 1 + 3 * (q - 1)));
    return p;
}

ChannelParams forward_map_G(const PositionParams& p, const Vec3& bs, const Vec3& ris) {
    if (static_cast<int>(p.scatterers.size()) + 1 != p.num_paths())
        throw Error(ErrorCode::DimensionMismatch, "gains and scatterers disagree on the path count");
    ChannelParams c;
    c.out = ris_bs_angles(bs, ris);
    const std::vector<double> tau = toas(bs, ris, p.ms, p.scatterers);
    for (int q = 0; q < p.num_paths(); ++q) {
        const PathAngles a = q == 0 ? vlos_angles(ris, p.ms, p.alpha)
                                    : nlos_angles(ris, p.ms, p.alpha, p.scatterers[q - 1]);
        c.paths.push_back({tau[q], p.gains[q], a.theta_t, a.phi_in, a.psi_in});
    }
    return c;
}

PositionParams position_params(const ScenarioGeometry& g, const std::vector<cd>& gains) {
    if (static_cast<int>(gains.size()) != g.num_paths())
        throw Error(ErrorCode::DimensionMismatch, "one gain per path expected");
    return {gains, g.ms, g.alpha, g.scatterers};
}

ChannelParams channel_params(const ScenarioGeometry& g, const std::vector<cd>& gains) {
    return forward_map_G(position_params(g, gains), g.bs, g.ris);
}

double wrap_positive(double x, double period) {
    double r = std::fmod(x, period);
    if (r < 0.0)
        r += period;
    if (r >= period)
        r -= period;
    return r;
}

double wrap_difference(double x, double period) {
    return wrap_positive(x + period / 2.0, period) - period / 2.0;
}

} // namespace rispos
