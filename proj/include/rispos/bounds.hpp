#pragma once

#include <vector>

#include "rispos/channel.hpp"

namespace rispos {

/// Derivative of the noiseless received signal M[n] (N_b x T per subcarrier)
/// with respect to entry `index` of the flattened channel parameter vector.
std::vector<CMat> mean_derivative(const SystemModel& model, const ChannelParams& params, int index);

/// Channel-parameter Fisher information
/// J_uv = (2 / sigma^2) sum_n Re tr(dM[n]/du^H dM[n]/dv).
MatX fim_channel(const SystemModel& model, const ChannelParams& params, double noise_variance);

/// T = d eta^T / d eta_tilde, rows indexed by position parameters.
MatX transformation_matrix(const PositionParams& p, const Vec3& bs, const Vec3& ris);

/// Inverse of a symmetric PSD matrix after Jacobi equilibration. Falls back to a
/// pseudo-inverse when the equilibrated condition number exceeds 1e12.
struct SymmetricInverse {
    MatX inverse;
    double condition = 0.0;
    bool singular = false;
};

SymmetricInverse symmetric_inverse(const MatX& j, double max_condition = 1e12);

struct BoundReport {
    VecX crlb_channel;  // variances, flattened channel ordering
    VecX crlb_position; // variances, flattened position ordering
    double peb = 0.0;   // meters
    double oeb = 0.0;   // radians
    double condition = 0.0;
    bool singular = false;
};

BoundReport position_bounds(const MatX& j_eta, const MatX& t);

} // namespace rispos
