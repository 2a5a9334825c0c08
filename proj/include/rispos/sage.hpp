#pragma once

#include <vector>

#include "rispos/channel.hpp"
#include "rispos/search.hpp"

namespace rispos {

/// a_M^H(theta) x_t for every slot.
CVec pilot_projection(const SystemModel& model, double theta_t);
/// g_t^T a_R(delta omega) for every slot.
CVec ris_gain_per_slot(const SystemModel& model, double phi_in, double psi_in);

/// Noiseless contribution of one path, N_b x T per subcarrier.
std::vector<CMat> path_signal(const SystemModel& model, const RisBsAngles& out, const PathParams& path);
/// Sum of all path contributions.
std::vector<CMat> mean_signal(const SystemModel& model, const ChannelParams& params);

/// Log-likelihood with the data energy dropped:
/// 2 Re sum_q a_M^H (sum_n delta_q e_q[n] X Sigma_q Y^H) a_B
///   - N_b sum_{q1,q2} delta_q1^* delta_q2 a_M^H(q2) (sum_n e_q1^* e_q2 X Sigma_q2 Sigma_q1^H X^H) a_M(q1).
double global_log_likelihood(const SystemModel& model, const ChannelParams& params, const RxSignal& rx);

/// Y minus every other path; paths before q use `fresh`, paths after q use `previous`.
std::vector<CMat> reconstruct_complete_data(const SystemModel& model, const RxSignal& rx, const ChannelParams& fresh,
                                            const ChannelParams& previous, int q);

/// Closed-form gain of one path given its complete data, delay, AOD and per-slot RIS gains.
cd gain_closed_form(const SystemModel& model, const std::vector<CMat>& yq, double tau, double theta_t,
                    const CVec& sigma);

/// Concentrated single-path likelihood F = |num|^2 / den for fixed complete data.
class SinglePathObjective {
public:
    SinglePathObjective(const SystemModel& model, const std::vector<CMat>& yq);

    double value(double tau, double theta_t, double phi_in, double psi_in) const;
    cd gain(double tau, double theta_t, double phi_in, double psi_in) const;

private:
    cd numerator(double tau, const CVec& p, const CVec& sigma) const;
    double denominator(const CVec& p, const CVec& sigma) const;

    const SystemModel* model_;
    CMat z_;  // a_B^H y_t[n], slot x subcarrier
};

struct SageSettings {
    double eps_angle = 1e-6;      // radians
    double eps_tau_b = 1e-6;      // delay in units of 1/B
    double eps_gain_rel = 1e-6;   // relative to |delta|
    double eps_lik_rel = 1e-8;    // relative to |Lambda|
    int max_cycles = 50;
    double angle_bracket_cells = 2.0;
    SearchSettings search;
};

/// One SAGE visit of path q: 1-D maximizations of F over tau, theta_t, phi_in,
/// psi_in (in that order), then the closed-form gain.
void coordinate_update_cycle(const SystemModel& model, const std::vector<CMat>& yq, PathParams& path, bool vlos,
                             const SageSettings& settings);

struct SageResult {
    ChannelParams params;
    std::vector<double> likelihood;  // Lambda before the first cycle and after every full cycle
    int cycles = 0;
    bool converged = false;
};

SageResult run_sage(const SystemModel& model, const RxSignal& rx, const ChannelParams& init,
                    const SageSettings& settings = {});

} // namespace rispos
