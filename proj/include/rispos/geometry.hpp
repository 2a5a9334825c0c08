#pragma once

#include <vector>

#include "rispos/types.hpp"

namespace rispos {

/// Node positions, MS rotation and array constants of one scenario.
struct ScenarioGeometry {
    Vec3 bs{0.0, 0.0, 0.0};
    Vec3 ris{0.0, 0.0, 0.0};
    Vec3 ms{0.0, 0.0, 0.0};
    double alpha = 0.0;
    std::vector<Vec3> scatterers;

    int n_b = 1;
    int n_m = 1;
    int n_a = 1;
    int n_e = 1;
    double d_bs = 0.0;
    double d_ms = 0.0;
    double d_ris_a = 0.0;
    double d_ris_e = 0.0;
    double wavelength = 1.0;

    int num_paths() const { return static_cast<int>(scatterers.size()) + 1; }
    int n_r() const { return n_a * n_e; }
    double bs_ratio() const { return d_bs / wavelength; }
    double ms_ratio() const { return d_ms / wavelength; }
    double ris_a_ratio() const { return d_ris_a / wavelength; }
    double ris_e_ratio() const { return d_ris_e / wavelength; }

    /// Checks spacing, rotation and distance invariants.
    void validate() const;
};

/// The single-scatterer layout used throughout the simulations.
ScenarioGeometry default_geometry(double carrier_hz = 4.9e9);

/// MS-side and RIS-incidence angles of one path.
struct PathAngles {
    double theta_t = 0.0;
    double phi_in = 0.0;
    double psi_in = 0.0;
};

/// Angles of the RIS-to-BS leg, known once BS and RIS are placed.
struct RisBsAngles {
    double theta_r0 = 0.0;
    double phi_out0 = 0.0;
    double psi_out0 = 0.0;
};

/// Layout of one path inside the flattened channel parameter vector.
enum PathSlot : int { kTau = 0, kDeltaR = 1, kDeltaI = 2, kTheta = 3, kPhi = 4, kPsi = 5 };
inline constexpr int kPerPath = 6;

struct PathParams {
    double tau = 0.0;
    cd delta{0.0, 0.0};
    double theta_t = 0.0;
    double phi_in = 0.0;
    double psi_in = 0.0;
};

/// Channel parameters of all paths plus the known RIS-to-BS angles.
struct ChannelParams {
    std::vector<PathParams> paths;
    RisBsAngles out;

    int num_paths() const { return static_cast<int>(paths.size()); }
    /// Per path [tau, delta_R, delta_I, theta_t, phi_in, psi_in].
    VecX flatten() const;
    static ChannelParams unflatten(const VecX& eta, const RisBsAngles& out);
};

/// Gains, MS pose and scatterer positions.
struct PositionParams {
    std::vector<cd> gains;
    Vec3 ms{0.0, 0.0, 0.0};
    double alpha = 0.0;
    std::vector<Vec3> scatterers;

    int num_paths() const { return static_cast<int>(gains.size()); }
    /// [gains (re, im per path), m, alpha, s^1, ..., s^Q].
    VecX flatten() const;
    static PositionParams unflatten(const VecX& v, int num_paths);
    int ms_offset() const { return 2 * num_paths(); }
    int alpha_offset() const { return 2 * num_paths() + 3; }
};

/// ULA response with element k equal to exp(-j 2 pi k u).
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> steer_ula(Scalar u, int n_ant) {
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> a(n_ant);
    const Scalar two_pi = Scalar(2) * Scalar(kPi);
    for (int k = 0; k < n_ant; ++k)
        a(k) = std::polar(Scalar(1), -two_pi * Scalar(k) * u);
    return a;
}

/// UPA response, elevation factor on the left of the Kronecker product.
template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> steer_upa(Scalar u_az, Scalar u_el, int n_a, int n_e) {
    const auto fa = steer_ula(u_az, n_a);
    const auto fe = steer_ula(u_el, n_e);
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> a(n_a * n_e);
    for (int ke = 0; ke < n_e; ++ke)
        a.segment(ke * n_a, n_a) = fe(ke) * fa;
    return a;
}

/// Azimuth and elevation spatial frequencies at the RIS.
struct RisFrequency {
    double az = 0.0;
    double el = 0.0;
};

inline RisFrequency ris_frequency(double phi, double psi, double ratio_a, double ratio_e) {
    return {ratio_a * std::sin(psi) * std::sin(phi), ratio_e * std::cos(phi)};
}

/// Frequency difference between an incident path and the fixed outgoing direction.
RisFrequency ris_frequency_difference(const ScenarioGeometry& g, double phi_in, double psi_in,
                                      const RisBsAngles& out);

/// Arcsine and arccosine with a 1e-9 domain tolerance; beyond it the geometry is rejected.
double guarded_asin(double x);
double guarded_acos(double x);

RisBsAngles ris_bs_angles(const Vec3& bs, const Vec3& ris);
PathAngles vlos_angles(const Vec3& ris, const Vec3& ms, double alpha);
PathAngles nlos_angles(const Vec3& ris, const Vec3& ms, double alpha, const Vec3& scatterer);

std::vector<PathAngles> angles_from_geometry(const ScenarioGeometry& g);
std::vector<double> toas_from_geometry(const ScenarioGeometry& g);

/// Channel parameters generated by a position parameter vector.
ChannelParams forward_map_G(const PositionParams& p, const Vec3& bs, const Vec3& ris);

PositionParams position_params(const ScenarioGeometry& g, const std::vector<cd>& gains);
ChannelParams channel_params(const ScenarioGeometry& g, const std::vector<cd>& gains);

/// Wraps an angle into [0, period).
double wrap_positive(double x, double period);
/// Wraps an angle difference into [-period/2, period/2).
double wrap_difference(double x, double period);

} // namespace rispos
