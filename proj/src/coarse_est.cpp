#include "rispos/coarse_est.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include <Eigen/Eigenvalues>

namespace rispos {

namespace {

/// Least-squares fit of every measurement set on a set of atoms.
struct SupportFit {
    CMat columns;
    CMat basis;  // orthonormal basis of the column span
    std::vector<CMat> coefficients;
    std::vector<CMat> residual;
    double energy = 0.0;
};

SupportFit fit_support(const std::vector<CMat>& measurements, const CMat& dictionary, const std::vector<int>& support) {
    SupportFit f;
    const Eigen::Index m = dictionary.rows();
    const auto k = static_cast<Eigen::Index>(support.size());
    f.columns.resize(m, k);
    for (Eigen::Index j = 0; j < k; ++j)
        f.columns.col(j) = dictionary.col(support[j]);
    if (k == 0) {
        f.basis.resize(m, 0);
        f.residual = measurements;
    } else {
        Eigen::ColPivHouseholderQR<CMat> qr(f.columns);
        if (qr.rank() < k)
            throw Error(ErrorCode::RankDeficient, "selected atoms are linearly dependent");
        f.basis = qr.householderQ() * CMat::Identity(m, k);
        for (const CMat& y : measurements) {
            f.coefficients.push_back(qr.solve(y));
            f.residual.push_back(y - f.columns * f.coefficients.back());
        }
    }
    for (const CMat& r : f.residual)
        f.energy += r.squaredNorm();
    return f;
}

/// Atom that removes the most residual energy once added to `fit`, skipping `taken`.
/// Returns the column and the energy it removes.
std::pair<int, double> best_atom(const SupportFit& fit, const CMat& dictionary, const VecX& energy,
                                 const std::vector<int>& taken) {
    // Energy of every atom outside the span of the fitted atoms.
    const VecX free_energy =
        fit.basis.cols() == 0 ? energy : VecX(energy - (fit.basis.adjoint() * dictionary).colwise().squaredNorm().transpose());
    VecX score = VecX::Zero(dictionary.cols());
    for (const CMat& r : fit.residual)
        score += (dictionary.adjoint() * r).rowwise().squaredNorm();
    int best = -1;
    double best_score = -1.0;
    for (Eigen::Index l = 0; l < dictionary.cols(); ++l) {
        if (std::find(taken.begin(), taken.end(), static_cast<int>(l)) != taken.end())
            continue;
        if (!(free_energy(l) > 1e-12 * energy(l)))
            continue;
        const double s = score(l) / free_energy(l);
        if (s > best_score) {
            best_score = s;
            best = static_cast<int>(l);
        }
    }
    if (best < 0)
        throw Error(ErrorCode::RankDeficient, "no admissible dictionary column left");
    return {best, best_score};
}

} // namespace

SompResult dcs_somp(const std::vector<CMat>& measurements, const CMat& dictionary, int sparsity, bool swap_pass) {
    if (measurements.empty() || sparsity < 1)
        throw Error(ErrorCode::SparsityInfeasible, "need measurements and a positive sparsity");
    const Eigen::Index m = dictionary.rows();
    if (sparsity > m || sparsity > dictionary.cols())
        throw Error(ErrorCode::SparsityInfeasible, "sparsity exceeds the number of measurement rows");
    for (const CMat& y : measurements)
        if (y.rows() != m)
            throw Error(ErrorCode::DimensionMismatch, "measurement rows differ from dictionary rows");

    const VecX energy = dictionary.colwise().squaredNorm().transpose();
    SompResult out;
    SupportFit fit = fit_support(measurements, dictionary, out.support);
    out.residual_norms.push_back(std::sqrt(fit.energy));

    for (int iter = 0; iter < sparsity; ++iter) {
        out.support.push_back(best_atom(fit, dictionary, energy, out.support).first);
        fit = fit_support(measurements, dictionary, out.support);
        out.residual_norms.push_back(std::sqrt(fit.energy));
    }

    // Swap pass: re-pick each atom with the others held fixed while the residual drops.
    for (int pass = 0; swap_pass && pass < 10 * sparsity; ++pass) {
        bool changed = false;
        for (int j = 0; j < sparsity; ++j) {
            std::vector<int> others = out.support;
            others.erase(others.begin() + j);
            const SupportFit reduced = fit_support(measurements, dictionary, others);
            const auto [atom, removed] = best_atom(reduced, dictionary, energy, others);
            if (atom == out.support[j] || !(reduced.energy - removed < fit.energy * (1.0 - 1e-10)))
                continue;
            out.support[j] = atom;
            fit = fit_support(measurements, dictionary, out.support);
            out.residual_norms.push_back(std::sqrt(fit.energy));
            changed = true;
        }
        if (!changed)
            break;
    }
    out.columns = fit.columns;
    out.coefficients = fit.coefficients;
    return out;
}

AodCoarse estimate_aod_coarse(const SystemModel& model, const RxSignal& rx, const Dictionary& ms_dict, int num_paths,
                              bool swap_pass) {
    const int t1 = model.cfg.block0_slots;
    if (t1 < 8 * num_paths - 2)
        throw Error(ErrorCode::ScheduleInfeasible, "T1 must be at least 8(Q+1) - 2");
    const CMat theta_m = rx.x.leftCols(t1).adjoint() * ms_dict.atoms;
    std::vector<CMat> meas;
    for (const CMat& y : rx.y)
        meas.push_back(y.leftCols(t1).adjoint());

    AodCoarse out;
    out.somp = dcs_somp(meas, theta_m, num_paths, swap_pass);
    for (int k : out.somp.support) {
        out.grid_index.push_back(k);
        out.theta.push_back(std::asin(std::clamp(ms_dict.normalized(k), -1.0, 1.0)));
    }
    return out;
}

AodMleCost::AodMleCost(const SystemModel& model, const RxSignal& rx) : arrays_(&model.arrays) {
    const int t1 = model.cfg.block0_slots;
    const CMat x1 = rx.x.leftCols(t1);
    const CVec a_b = bs_response(model.arrays, model.out());
    const double nb = static_cast<double>(model.arrays.n_b);
    c_ = x1 * x1.adjoint();
    s_ = CMat::Zero(x1.rows(), x1.rows());
    for (const CMat& y : rx.y) {
        const CMat b = y.leftCols(t1) * x1.adjoint();
        // B^H E B with E = a_B a_B^H / N_b
        const CMat eb = a_b * (a_b.adjoint() * b) / nb;
        s_.noalias() += b.adjoint() * eb;
    }
}

double AodMleCost::operator()(const std::vector<double>& theta) const {
    CMat a(arrays_->n_m, static_cast<Eigen::Index>(theta.size()));
    for (std::size_t q = 0; q < theta.size(); ++q)
        a.col(static_cast<Eigen::Index>(q)) = ms_response(*arrays_, theta[q]);
    const CMat gram = a.adjoint() * c_ * a;
    const VecX scale = gram.diagonal().real().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const VecX spectrum =
        Eigen::SelfAdjointEigenSolver<CMat>(scale.asDiagonal() * gram * scale.asDiagonal(), Eigen::EigenvaluesOnly)
            .eigenvalues();
    Eigen::LDLT<CMat> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(spectrum.minCoeff() > 1e-12 * spectrum.maxCoeff()))
        throw Error(ErrorCode::SingularConcentration, "AOD steering vectors are collinear");
    const CMat d = a * ldlt.solve(a.adjoint());
    return -2.0 * (d * s_).trace().real() + (s_ * d * c_ * d.adjoint()).trace().real();
}

std::vector<double> refine_aod_mle(const SystemModel& model, const RxSignal& rx, const std::vector<double>& theta0,
                                   double bracket_cells, const SearchSettings& search, bool global_pass) {
    const AodMleCost cost(model, rx);
    const double cell = 2.0 / model.cfg.grid_m;
    auto objective = [&](const std::vector<double>& theta, std::size_t q, double u) {
        std::vector<double> trial = theta;
        trial[q] = std::asin(std::clamp(u, -1.0, 1.0));
        try {
            return -cost(trial);
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };
    auto local = [&](const std::vector<double>& centre) {
        std::vector<double> theta = centre;
        for (int pass = 0; pass < 20; ++pass) {
            double moved = 0.0;
            for (std::size_t q = 0; q < theta.size(); ++q) {
                const double u0 = std::sin(centre[q]);
                const double lo = std::max(-1.0, u0 - bracket_cells * cell);
                const double hi = std::min(1.0, u0 + bracket_cells * cell);
                const auto f = [&](double u) { return objective(theta, q, u); };
                const double u_start = std::clamp(std::sin(theta[q]), lo, hi);
                const SearchResult r = maximize_1d(f, lo, hi, u_start, search);
                const double updated = std::asin(std::clamp(r.x, -1.0, 1.0));
                moved = std::max(moved, std::abs(updated - theta[q]));
                theta[q] = updated;
            }
            if (moved < 1e-12)
                break;
        }
        return theta;
    };

    std::vector<double> theta = local(theta0);
    if (!global_pass)
        return theta;
    // Full-range scan per path with the others held fixed; points within one
    // cell of another path are skipped since such pairs are not resolvable.
    const int points = 8 * model.cfg.grid_m;
    for (std::size_t q = 0; q < theta.size(); ++q) {
        const double current = objective(theta, q, std::sin(theta[q]));
        double best = current;
        double best_u = std::sin(theta[q]);
        for (int i = 0; i <= points; ++i) {
            const double u = -1.0 + 2.0 * i / points;
            bool near_other = false;
            for (std::size_t p = 0; p < theta.size(); ++p)
                if (p != q && std::abs(u - std::sin(theta[p])) < cell)
                    near_other = true;
            if (near_other)
                continue;
            const double v = objective(theta, q, u);
            if (v > best) {
                best = v;
                best_u = u;
            }
        }
        if (best > current + 1e-12 * std::abs(current)) {
            std::vector<double> moved = theta;
            moved[q] = std::asin(best_u);
            theta = local(moved);
        }
    }
    return theta;
}

std::vector<RisAoa> estimate_ris_aoa(const SystemModel& model, const RxSignal& rx, const RisDictionary& ris_dict,
                                     const std::vector<double>& theta) {
    const ScenarioGeometry& g = model.arrays;
    const RisBsAngles out = model.out();
    const int np = static_cast<int>(theta.size());
    const int nsub = static_cast<int>(rx.y.size());
    const int nblocks = model.schedule.num_blocks();

    // Beamformed samples, one row per slot and one column per subcarrier.
    const CVec a_b = bs_response(g, out);
    CMat ycheck(model.schedule.num_slots(), nsub);
    for (int n = 0; n < nsub; ++n)
        ycheck.col(n) = (a_b.adjoint() * rx.y[n]).transpose() / static_cast<double>(g.n_b);

    CMat a_m(g.n_m, np);
    for (int q = 0; q < np; ++q)
        a_m.col(q) = ms_response(g, theta[q]);

    // Separate the paths block by block with the right inverse of A_M^H X_i.
    std::vector<CMat> mixed(nsub, CMat::Zero(nblocks, np));
    for (int i = 0; i < nblocks; ++i) {
        std::vector<int> slots;
        for (int t = 0; t < model.schedule.num_slots(); ++t)
            if (model.schedule.slot_block[t] == i)
                slots.push_back(t);
        const int v = static_cast<int>(slots.size());
        CMat xb(g.n_m, v);
        CMat yb(v, nsub);
        for (int j = 0; j < v; ++j) {
            xb.col(j) = rx.x.col(slots[j]);
            yb.row(j) = ycheck.row(slots[j]);
        }
        const CMat bbar = a_m.adjoint() * xb;
        const CMat bbt = bbar * bbar.adjoint();
        Eigen::LDLT<CMat> ldlt(bbt);
        if (v < np || ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12))
            throw Error(ErrorCode::RankDeficient, "block pilot matrix has no right inverse");
        const CMat right_inv = bbar.adjoint() * ldlt.solve(CMat::Identity(np, np));
        const CMat rows = yb.transpose() * right_inv;  // nsub x np
        for (int n = 0; n < nsub; ++n)
            mixed[n].row(i) = rows.row(n);
    }

    const CMat dict = model.schedule.blocks * ris_dict.atoms;
    const double cos_out = std::cos(out.phi_out0);
    const double sin_prod_out = std::sin(out.psi_out0) * std::sin(out.phi_out0);

    std::vector<RisAoa> result;
    for (int q = 0; q < np; ++q) {
        std::vector<CMat> meas;
        for (int n = 0; n < nsub; ++n)
            meas.push_back(mixed[n].col(q));
        const SompResult somp = dcs_somp(meas, dict, 1);

        RisAoa a;
        a.k = somp.support.front();
        a.diff_el = ris_dict.el.normalized(ris_dict.el_index(a.k));
        a.diff_az = ris_dict.az.normalized(ris_dict.az_index(a.k));
        const double cos_in = a.diff_el + cos_out;
        a.clamped = std::abs(cos_in) > 1.0;
        a.phi_in = std::acos(std::clamp(cos_in, -1.0, 1.0));
        const double sin_phi = std::sin(a.phi_in);
        double s = sin_phi > 1e-12 ? (a.diff_az + sin_prod_out) / sin_phi : 0.0;
        if (std::abs(s) > 1.0)
            a.clamped = true;
        a.sin_psi = std::clamp(s, -1.0, 1.0);
        a.dtilde.resize(nsub);
        for (int n = 0; n < nsub; ++n)
            a.dtilde(n) = somp.coefficients[n](0, 0);
        result.push_back(std::move(a));
    }
    return result;
}

double select_azimuth_branch(double sin_psi, bool vlos) {
    const double lo = vlos ? kPi : kPi / 2.0;
    const double hi = vlos ? 1.5 * kPi : kPi;
    const double s = std::clamp(sin_psi, -1.0, 1.0);
    const double tol = 1e-12;
    for (double c : {kPi - std::asin(s), std::asin(s) + 2.0 * kPi})
        if (c >= lo - tol && c <= hi + tol)
            return std::clamp(c, lo, hi);
    throw Error(ErrorCode::BranchAmbiguity, "no arcsin branch inside the azimuth range");
}

ToaEstimate estimate_toa(const CVec& dtilde, const SystemConfig& cfg, const SearchSettings& search) {
    const int n_sub = static_cast<int>(dtilde.size());
    const double b = cfg.bandwidth_hz;

    auto bin_value = [&](int m, double x) {
        cd acc(0.0, 0.0);
        for (int n = 0; n < n_sub; ++n)
            acc += std::polar(1.0, 2.0 * kPi * n * (m - x) / n_sub) * dtilde(n);
        return std::abs(acc) / std::sqrt(static_cast<double>(n_sub));
    };

    ToaEstimate est;
    double peak = -1.0;
    for (int m = 0; m < n_sub; ++m) {
        const double v = bin_value(m, 0.0);
        if (v > peak) {
            peak = v;
            est.bin = m;
        }
    }
    const SearchResult r = maximize_1d([&](double x) { return bin_value(est.bin, x); }, -0.5, 0.5, 0.0, search);
    est.shift = r.x / b;
    est.tau = est.bin / b - est.shift;
    const double upsilon = est.tau * b / n_sub;
    if (!(upsilon > 0.0 && upsilon < 1.0))
        throw Error(ErrorCode::OutOfRange, "estimated delay leaves (0, N/B)");
    cd acc(0.0, 0.0);
    for (int n = 0; n < n_sub; ++n)
        acc += std::conj(std::polar(1.0, -2.0 * kPi * upsilon * n)) * dtilde(n);
    est.delta = acc / static_cast<double>(n_sub);
    return est;
}

CoarseEstimate coarse_estimate(const SystemModel& model, const RxSignal& rx, int num_paths,
                               const CoarseSettings& settings) {
    const Dictionary ms_dict = build_ms_dictionary(model.cfg, model.arrays);
    const RisDictionary ris_dict = build_ris_dictionary(model.cfg, model.arrays);

    const AodCoarse aod = estimate_aod_coarse(model, rx, ms_dict, num_paths, settings.somp_swap);
    std::vector<double> theta = aod.theta;
    if (settings.refine_aod)
        theta = refine_aod_mle(model, rx, theta, settings.aod_bracket_cells, settings.search, settings.aod_global_pass);
    const std::vector<RisAoa> aoa = estimate_ris_aoa(model, rx, ris_dict, theta);

    std::vector<ToaEstimate> toa;
    for (const RisAoa& a : aoa)
        toa.push_back(estimate_toa(a.dtilde, model.cfg, settings.search));

    // The VLoS path is the shortest one.
    std::vector<int> order(num_paths);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return toa[a].tau < toa[b].tau; });

    CoarseEstimate est;
    est.params.out = model.out();
    for (int rank = 0; rank < num_paths; ++rank) {
        const int q = order[rank];
        const bool vlos = rank == 0;
        double psi = 0.0;
        try {
            psi = select_azimuth_branch(aoa[q].sin_psi, vlos);
        } catch (const Error&) {
            // Grid quantization can push sin(psi) across zero; keep the nearest admissible azimuth.
            psi = vlos ? (aoa[q].sin_psi > 0.0 ? kPi : 1.5 * kPi) : (aoa[q].sin_psi < 0.0 ? kPi : kPi / 2.0);
            est.flags.push_back("azimuth_branch_clamped");
        }
        if (aoa[q].clamped)
            est.flags.push_back("ris_angle_clamped");
        est.params.paths.push_back({toa[q].tau, toa[q].delta, theta[q], aoa[q].phi_in, psi});
        est.dtilde.push_back(aoa[q].dtilde);
        est.aod_grid_index.push_back(aod.grid_index[q]);
    }
    return est;
}

} // namespace rispos
