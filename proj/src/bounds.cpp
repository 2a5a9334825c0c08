#include "rispos/bounds.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace rispos {

namespace {

// Derivative of the slot response m_t[n] = sum_q delta_q e_q[n] p_q,t sigma_q,t,
// stacked subcarrier-major into one vector of length N * T.
CVec response_derivative(const SystemModel& model, const ChannelParams& params, int index) {
    const ScenarioGeometry& g = model.arrays;
    const SystemConfig& cfg = model.cfg;
    const int q = index / kPerPath;
    const int slot = index % kPerPath;
    const PathParams& p = params.paths.at(q);
    const int nt = model.schedule.num_slots();

    const CVec a_m = ms_response(g, p.theta_t);
    const CVec a_r = ris_difference_response(g, p.phi_in, p.psi_in, params.out);
    const cd j(0.0, 1.0);

    CVec pil = (a_m.adjoint() * model.pilots).transpose();
    CVec ris_factor = a_r;
    cd scale = p.delta;

    switch (slot) {
    case kTau:
        scale = p.delta * (-j * 2.0 * kPi * cfg.bandwidth_hz / static_cast<double>(cfg.subcarriers));
        break;
    case kDeltaR:
        scale = 1.0;
        break;
    case kDeltaI:
        scale = j;
        break;
    case kTheta: {
        // d a_M^H / d theta = j 2 pi (d / lambda) cos(theta) a_M^H D_Nm
        CVec d_nm(g.n_m);
        for (int k = 0; k < g.n_m; ++k)
            d_nm(k) = static_cast<double>(k);
        const cd factor = j * 2.0 * kPi * g.ms_ratio() * std::cos(p.theta_t);
        pil = factor * (a_m.cwiseProduct(d_nm).adjoint() * model.pilots).transpose();
        break;
    }
    case kPhi:
    case kPsi: {
        // D_phi = j 2 pi [(d_e/lambda) sin(phi) (D_Ne (x) I) - (d_a/lambda) sin(psi) cos(phi) (I (x) D_Na)]
        // D_psi = -j 2 pi (d_a/lambda) cos(psi) sin(phi) (I (x) D_Na)
        CVec diag(g.n_r());
        for (int ke = 0; ke < g.n_e; ++ke)
            for (int ka = 0; ka < g.n_a; ++ka) {
                const double el = static_cast<double>(ke);
                const double az = static_cast<double>(ka);
                if (slot == kPhi)
                    diag(ke * g.n_a + ka) = j * 2.0 * kPi *
                                            (g.ris_e_ratio() * std::sin(p.phi_in) * el -
                                             g.ris_a_ratio() * std::sin(p.psi_in) * std::cos(p.phi_in) * az);
                else
                    diag(ke * g.n_a + ka) =
                        -j * 2.0 * kPi * g.ris_a_ratio() * std::cos(p.psi_in) * std::sin(p.phi_in) * az;
            }
        ris_factor = diag.cwiseProduct(a_r);
        break;
    }
    default:
        break;
    }

    const CVec per_block = model.schedule.blocks * ris_factor;
    CVec base(nt);
    for (int t = 0; t < nt; ++t)
        base(t) = pil(t) * per_block(model.schedule.slot_block[t]);

    CVec out(static_cast<Eigen::Index>(cfg.subcarriers) * nt);
    for (int n = 0; n < cfg.subcarriers; ++n) {
        cd w = scale * delay_phase(p.tau, n, cfg);
        if (slot == kTau)
            w *= static_cast<double>(n);
        out.segment(static_cast<Eigen::Index>(n) * nt, nt) = w * base;
    }
    return out;
}

} // namespace

std::vector<CMat> mean_derivative(const SystemModel& model, const ChannelParams& params, int index) {
    const CVec d = response_derivative(model, params, index);
    const CVec a_b = bs_response(model.arrays, params.out);
    const int nt = model.schedule.num_slots();
    std::vector<CMat> out;
    for (int n = 0; n < model.cfg.subcarriers; ++n)
        out.push_back(a_b * d.segment(static_cast<Eigen::Index>(n) * nt, nt).transpose());
    return out;
}

MatX fim_channel(const SystemModel& model, const ChannelParams& params, double noise_variance) {
    const int dim = kPerPath * params.num_paths();
    CMat d(static_cast<Eigen::Index>(model.cfg.subcarriers) * model.schedule.num_slots(), dim);
    for (int u = 0; u < dim; ++u)
        d.col(u) = response_derivative(model, params, u);
    // ||a_B||^2 = N_b factors out of every trace.
    const MatX j = (2.0 * model.arrays.n_b / noise_variance) * (d.adjoint() * d).real();
    return 0.5 * (j + j.transpose());
}

namespace {

// Gradient of theta = asin(a^T v / |v|), a = [cos(alpha), -sin(alpha), 0], w.r.t. v and alpha.
void aod_gradient(const Vec3& v, double alpha, Vec3& d_v, double& d_alpha) {
    const Vec3 a(std::cos(alpha), -std::sin(alpha), 0.0);
    const double n2 = v.squaredNorm();
    const double av = a.dot(v);
    const double root = std::sqrt(n2 - av * av);
    if (!(root > 0.0))
        throw Error(ErrorCode::DegenerateGeometry, "AOD at endfire");
    d_v = (a * n2 - av * v) / (n2 * root);
    d_alpha = (-v.x() * std::sin(alpha) - v.y() * std::cos(alpha)) / root;
}

// Gradients of phi = acos(v_z/|v|) and psi = pi - asin(v_y/rho) with v = r - src, w.r.t. src.
void incidence_gradient(const Vec3& v, Vec3& d_phi, Vec3& d_psi) {
    const double n2 = v.squaredNorm();
    const double rho2 = v.x() * v.x() + v.y() * v.y();
    const double rho = std::sqrt(rho2);
    const double ax = std::abs(v.x());
    if (!(rho > 0.0) || !(ax > 0.0))
        throw Error(ErrorCode::DegenerateGeometry, "incidence gradient undefined");
    d_phi = Vec3(-v.x() * v.z() / (n2 * rho), -v.y() * v.z() / (n2 * rho), rho / n2);
    d_psi = Vec3(-v.y() * v.x() / (rho2 * ax), v.x() * v.x() / (rho2 * ax), 0.0);
}

} // namespace

MatX transformation_matrix(const PositionParams& p, const Vec3& bs, const Vec3& ris) {
    (void)bs;  // the RIS-BS leg is fixed and contributes no derivative
    const int np = p.num_paths();
    const int rows = 5 * np + 1;
    MatX t = MatX::Zero(rows, kPerPath * np);
    const int mo = p.ms_offset();
    const int ao = p.alpha_offset();
    const double c = kSpeedOfLight;

    for (int q = 0; q < np; ++q) {
        const int col = kPerPath * q;
        t(2 * q, col + kDeltaR) = 1.0;
        t(2 * q + 1, col + kDeltaI) = 1.0;
    }

    // VLoS path.
    {
        const Vec3 mr = p.ms - ris;
        t.block<3, 1>(mo, kTau) = mr / (c * mr.norm());
        Vec3 d_v;
        double d_alpha = 0.0;
        aod_gradient(ris - p.ms, p.alpha, d_v, d_alpha);
        t.block<3, 1>(mo, kTheta) = -d_v;
        t(ao, kTheta) = d_alpha;
        Vec3 d_phi, d_psi;
        incidence_gradient(ris - p.ms, d_phi, d_psi);
        t.block<3, 1>(mo, kPhi) = d_phi;
        t.block<3, 1>(mo, kPsi) = d_psi;
    }
    // Scatterer paths.
    for (int q = 1; q < np; ++q) {
        const int col = kPerPath * q;
        const int so = ao + 1 + 3 * (q - 1);
        const Vec3& s = p.scatterers[q - 1];
        const Vec3 ms = p.ms - s;
        const Vec3 sr = s - ris;
        t.block<3, 1>(mo, col + kTau) = ms / (c * ms.norm());
        t.block<3, 1>(so, col + kTau) = sr / (c * sr.norm()) - ms / (c * ms.norm());
        Vec3 d_v;
        double d_alpha = 0.0;
        aod_gradient(s - p.ms, p.alpha, d_v, d_alpha);
        t.block<3, 1>(mo, col + kTheta) = -d_v;
        t.block<3, 1>(so, col + kTheta) = d_v;
        t(ao, col + kTheta) = d_alpha;
        Vec3 d_phi, d_psi;
        incidence_gradient(ris - s, d_phi, d_psi);
        t.block<3, 1>(so, col + kPhi) = d_phi;
        t.block<3, 1>(so, col + kPsi) = d_psi;
    }
    return t;
}

SymmetricInverse symmetric_inverse(const MatX& j, double max_condition) {
    const MatX sym = 0.5 * (j + j.transpose());
    const Eigen::Index n = sym.rows();
    VecX scale(n);
    for (Eigen::Index i = 0; i < n; ++i)
        scale(i) = sym(i, i) > 0.0 ? 1.0 / std::sqrt(sym(i, i)) : 1.0;
    const MatX eq = scale.asDiagonal() * sym * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<MatX> eig(eq);
    const VecX lam = eig.eigenvalues();
    const double lmax = lam.cwiseAbs().maxCoeff();
    const double lmin = lam.minCoeff();

    SymmetricInverse out;
    out.condition = lmin > 0.0 ? lmax / lmin : INFINITY;
    out.singular = !(out.condition <= max_condition);
    VecX inv_lam(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool keep = out.singular ? lam(i) > lmax / max_condition : true;
        inv_lam(i) = keep ? 1.0 / lam(i) : 0.0;
    }
    const MatX eq_inv = eig.eigenvectors() * inv_lam.asDiagonal() * eig.eigenvectors().transpose();
    out.inverse = scale.asDiagonal() * eq_inv * scale.asDiagonal();
    return out;
}

BoundReport position_bounds(const MatX& j_eta, const MatX& t) {
    if (t.cols() != j_eta.rows())
        throw Error(ErrorCode::DimensionMismatch, "transformation matrix and FIM disagree");
    BoundReport r;
    const SymmetricInverse ch = symmetric_inverse(j_eta);
    r.crlb_channel = ch.inverse.diagonal();

    const MatX j_tilde = t * j_eta * t.transpose();
    const SymmetricInverse pos = symmetric_inverse(j_tilde);
    r.crlb_position = pos.inverse.diagonal();
    r.condition = pos.condition;
    r.singular = pos.singular || ch.singular;

    const int np = static_cast<int>(t.cols()) / kPerPath;
    const int mo = 2 * np;
    r.peb = std::sqrt(std::max(0.0, pos.inverse.block(mo, mo, 3, 3).trace()));
    r.oeb = std::sqrt(std::max(0.0, pos.inverse(mo + 3, mo + 3)));
    return r;
}

} // namespace rispos
