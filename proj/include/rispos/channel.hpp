#pragma once

#include <cstdint>
#include <vector>

#include "rispos/geometry.hpp"

namespace rispos {

/// OFDM, slot schedule, power and dictionary settings.
struct SystemConfig {
    double carrier_hz = 4.9e9;
    double bandwidth_hz = 20e6;
    int subcarriers = 20;
    int slots = 37;
    int block0_slots = 16;
    int blocks = 7;
    int block_slots = 3;
    double power_dbm = 20.0;
    double noise_dbm_hz = -174.0;
    int grid_m = 128;
    int grid_a = 10;
    int grid_e = 10;
    double shadowing_db = 4.0;
    double pathloss_exponent = 2.2;
    double nlos_excess_db = 3.0;

    double power_watts() const;
    /// Per-subcarrier noise power N0 * B / N in watts.
    double noise_variance() const;
    /// Checks the slot schedule against the number of paths.
    void validate(int num_paths) const;
};

/// RIS reflection vectors per block and the slot-to-block map.
struct PhaseSchedule {
    CMat blocks;                  // row i holds g_i^T
    std::vector<int> slot_block;  // block index of every slot

    int num_slots() const { return static_cast<int>(slot_block.size()); }
    int num_blocks() const { return static_cast<int>(blocks.rows()); }
    CVec slot_phases(int t) const { return blocks.row(slot_block[t]).transpose(); }
};

/// Pilot matrix N_m x T; the same pilots are sent on every subcarrier.
using Pilots = CMat;

/// Received signal Y[n] (N_b x T) per subcarrier, with the pilots that produced it.
struct RxSignal {
    std::vector<CMat> y;
    Pilots x;
};

/// Steering vectors over the uniform grid (-1 + 2g/G) * d / lambda, g = 0..G-1.
struct Dictionary {
    CMat atoms;
    int grid = 0;
    double ratio = 0.0;

    double frequency(int g) const { return (-1.0 + 2.0 * g / grid) * ratio; }
    /// Grid value (-1 + 2g/G) before scaling by d / lambda.
    double normalized(int g) const { return -1.0 + 2.0 * g / grid; }
};

/// Everything the receiver knows apart from the observations. Estimators read
/// only the BS/RIS placement and the array constants from `arrays`.
struct SystemModel {
    SystemConfig cfg;
    ScenarioGeometry arrays;
    PhaseSchedule schedule;
    Pilots pilots;

    RisBsAngles out() const { return ris_bs_angles(arrays.bs, arrays.ris); }
};

/// RIS dictionary A_R = A_R^e (x) A_R^a with column k = k_e * G_a + k_a (0-based).
struct RisDictionary {
    Dictionary az;
    Dictionary el;
    CMat atoms;

    int index(int k_e, int k_a) const { return k_e * az.grid + k_a; }
    int el_index(int k) const { return k / az.grid; }
    int az_index(int k) const { return k % az.grid; }
};

Dictionary build_ms_dictionary(const SystemConfig& cfg, const ScenarioGeometry& g);
RisDictionary build_ris_dictionary(const SystemConfig& cfg, const ScenarioGeometry& g);

CVec bs_response(const ScenarioGeometry& g, const RisBsAngles& out);
CVec ms_response(const ScenarioGeometry& g, double theta_t);
/// a_R(in) o conj(a_R(out)) for one incident direction.
CVec ris_difference_response(const ScenarioGeometry& g, double phi_in, double psi_in, const RisBsAngles& out);

/// Subcarrier phase ramp exp(-j 2 pi tau n B / N), n 0-based.
cd delay_phase(double tau, int n, const SystemConfig& cfg);

/// Channel H_t[n] (N_b x N_m) for RIS phases g_t and 0-based subcarrier n.
CMat build_channel(const SystemConfig& cfg, const ScenarioGeometry& g, const ChannelParams& params, const CVec& g_t,
                   int n);

/// Y[n] = H_t[n] x_t + z for every slot and subcarrier.
RxSignal synthesize_rx(const SystemConfig& cfg, const ScenarioGeometry& g, const ChannelParams& params,
                       const PhaseSchedule& schedule, const Pilots& pilots, std::uint64_t noise_seed,
                       bool add_noise = true);

PhaseSchedule make_phase_schedule(const SystemConfig& cfg, int n_r, std::uint64_t seed);

/// Unit-modulus sign pattern; scale by sqrt(P_m / N_m) with scale_pilots.
CMat make_pilot_signs(const SystemConfig& cfg, int n_m, std::uint64_t seed);
Pilots scale_pilots(const CMat& signs, double power_watts);
Pilots make_pilots(const SystemConfig& cfg, int n_m, std::uint64_t seed);

/// VLoS path loss in dB for a given shadowing draw.
double vlos_path_loss_db(const SystemConfig& cfg, const ScenarioGeometry& g, double shadowing_db);

/// One complex gain per path; shadowing shared by all paths of a draw.
std::vector<cd> draw_gains(const SystemConfig& cfg, const ScenarioGeometry& g, std::uint64_t seed);

} // namespace rispos
