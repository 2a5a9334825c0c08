#pragma once

#include <string>
#include <vector>

#include "rispos/channel.hpp"
#include "rispos/search.hpp"

namespace rispos {

/// Output of joint-sparse greedy recovery.
struct SompResult {
    std::vector<int> support;          // selected dictionary columns, in selection order
    CMat columns;                      // the selected atoms
    std::vector<CMat> coefficients;    // LS coefficients per measurement set
    std::vector<double> residual_norms; // Frobenius norm of the residual, before and after each pick or swap
};

/// Simultaneous OMP over measurement sets sharing one support. Atoms are scored
/// by their correlation with the residual summed over all sets, normalized by
/// the energy of the atom left outside the span of the atoms already picked.
/// With `swap_pass`, each picked atom is then re-chosen with the others held
/// fixed, and a swap is kept only when it lowers the residual.
SompResult dcs_somp(const std::vector<CMat>& measurements, const CMat& dictionary, int sparsity,
                    bool swap_pass = true);

/// AOD grid estimates from the first block of slots.
struct AodCoarse {
    SompResult somp;
    std::vector<int> grid_index;
    std::vector<double> theta;
};

AodCoarse estimate_aod_coarse(const SystemModel& model, const RxSignal& rx, const Dictionary& ms_dict, int num_paths,
                              bool swap_pass = true);

/// Concentrated cost of the AOD likelihood over the first block of slots,
/// -2 Re tr(D S) + tr(S D C D^H) with S = sum_n B[n]^H E B[n].
class AodMleCost {
public:
    AodMleCost(const SystemModel& model, const RxSignal& rx);
    double operator()(const std::vector<double>& theta) const;

private:
    const ScenarioGeometry* arrays_;
    CMat c_;
    CMat s_;
};

/// Cyclic per-coordinate minimization of AodMleCost, each coordinate searched in
/// sin-space within `bracket_cells` grid cells of its initial value. With
/// `global_pass`, every path is then rescanned over the full sin range with the
/// others fixed, and moved only when the cost drops.
std::vector<double> refine_aod_mle(const SystemModel& model, const RxSignal& rx, const std::vector<double>& theta0,
                                   double bracket_cells = 1.0, const SearchSettings& search = {},
                                   bool global_pass = false);

/// Per-path result of the RIS angle stage.
struct RisAoa {
    int k = 0;              // column of the RIS dictionary
    double diff_az = 0.0;   // sin(psi_in) sin(phi_in) - sin(psi_out) sin(phi_out)
    double diff_el = 0.0;   // cos(phi_in) - cos(phi_out)
    double phi_in = 0.0;
    double sin_psi = 0.0;   // sin(psi_in); the branch is chosen once the path class is known
    bool clamped = false;   // an arccos/arcsin argument was clamped into [-1, 1]
    CVec dtilde;            // hybrid gain per subcarrier
};

std::vector<RisAoa> estimate_ris_aoa(const SystemModel& model, const RxSignal& rx, const RisDictionary& ris_dict,
                                     const std::vector<double>& theta);

/// Azimuth of incidence from sin(psi_in); VLoS paths live in [pi, 3pi/2], scatterer paths in [pi/2, pi].
double select_azimuth_branch(double sin_psi, bool vlos);

struct ToaEstimate {
    int bin = 0;         // DFT peak, 0-based
    double shift = 0.0;  // rotation delta_tau in seconds
    double tau = 0.0;
    cd delta{0.0, 0.0};
};

ToaEstimate estimate_toa(const CVec& dtilde, const SystemConfig& cfg, const SearchSettings& search = {});

struct CoarseSettings {
    bool refine_aod = true;
    double aod_bracket_cells = 1.0;
    bool aod_global_pass = true;
    bool somp_swap = true;
    SearchSettings search;
};

/// Stage-one estimate; paths are ordered by TOA so that path 0 is the VLoS path.
struct CoarseEstimate {
    ChannelParams params;
    std::vector<CVec> dtilde;
    std::vector<int> aod_grid_index;
    std::vector<std::string> flags;
};

CoarseEstimate coarse_estimate(const SystemModel& model, const RxSignal& rx, int num_paths,
                               const CoarseSettings& settings = {});

} // namespace rispos
