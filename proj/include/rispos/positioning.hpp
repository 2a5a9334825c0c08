#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rispos/geometry.hpp"

namespace rispos {

struct MsEstimate {
    Vec3 ms{0.0, 0.0, 0.0};
    double alpha = 0.0;               // in [0, pi)
    double alpha_alt = NAN;           // the other arccos branch when it also lies in [0, pi)
    std::vector<std::string> flags;
};

/// MS position and rotation from the VLoS delay and angles.
MsEstimate closed_form_ms(const PathParams& vlos, const Vec3& ris, const Vec3& bs);

/// Scatterer position from one NLoS path, given the MS pose.
Vec3 closed_form_scatterer(const PathParams& path, const Vec3& ms, double alpha, const Vec3& ris, const Vec3& bs);

/// Closed-form position parameters for every path of a channel estimate. When
/// both orientation branches are admissible, the one whose scatterers best
/// satisfy their path-length equation is kept.
PositionParams closed_form_position(const ChannelParams& eta, const Vec3& ris, const Vec3& bs,
                                    std::vector<std::string>* flags = nullptr);

struct LmSettings {
    double damping = 1e-3;
    double damping_up = 10.0;
    double damping_down = 0.1;
    int max_iterations = 100;
    double gradient_tol = 1e-10;
    double step_tol = 1e-12;
};

struct LmResult {
    PositionParams params;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
};

/// Residual eta_hat - G(eta_tilde); the azimuth entries are wrapped into [-pi, pi).
VecX position_residual(const VecX& eta_hat, const PositionParams& p, const Vec3& bs, const Vec3& ris);

/// Symmetrized, equilibrated and eigenvalue-floored copy of a weight matrix.
MatX regularize_weight(const MatX& w, double floor_rel = 1e-12);

/// Minimizes r^T W r with r = eta_hat - G(eta_tilde) by Levenberg-Marquardt.
LmResult refine_position_lm(const VecX& eta_hat, const MatX& weight, const PositionParams& init, const Vec3& bs,
                            const Vec3& ris, const LmSettings& settings = {});

} // namespace rispos
