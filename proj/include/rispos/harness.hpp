#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rispos/bounds.hpp"
#include "rispos/channel.hpp"
#include "rispos/coarse_est.hpp"
#include "rispos/positioning.hpp"
#include "rispos/sage.hpp"

namespace rispos {

/// Which estimator stages run after the always-on coarse stage.
struct StageToggles {
    bool aod_mle = true;
    bool sage = true;
    bool lm = true;
};

struct ExperimentConfig {
    ScenarioGeometry geometry = default_geometry();
    SystemConfig system;
    std::vector<double> powers_dbm{-10.0, 0.0, 10.0, 20.0};
    int trials = 200;
    std::uint64_t seed = 20240601;
    StageToggles stages;
    bool noiseless = false;
    std::string output_dir = "out";
    int threads = 0;  // 0 picks the hardware concurrency
    CoarseSettings coarse;
    SageSettings sage;
    LmSettings lm;

    void validate() const;
};

/// Reads a flat JSON object whose keys mirror the config field names.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

/// Receiver-side model for one transmit power; pilots and RIS phases come from the master seed.
SystemModel make_model(const ExperimentConfig& cfg, double power_dbm);

/// Gains at the mean path loss with zero phase, used for deterministic bound reports.
std::vector<cd> nominal_gains(const SystemConfig& cfg, const ScenarioGeometry& g);

/// Per-trial RNG seeds. They do not depend on the power, so every power point
/// sees the same gains and the same normalized noise.
std::uint64_t trial_gain_seed(std::uint64_t master, int trial);
std::uint64_t trial_noise_seed(std::uint64_t master, int trial);

struct TrialRecord {
    int trial = 0;
    double power_dbm = 0.0;
    std::uint64_t gain_seed = 0;
    std::uint64_t noise_seed = 0;
    std::vector<cd> gains;
    ChannelParams truth;
    PositionParams truth_position;

    std::optional<ChannelParams> coarse;
    std::optional<ChannelParams> sage;
    std::optional<PositionParams> closed_form;
    std::optional<PositionParams> lm;
    std::vector<double> sage_likelihood;
    int sage_cycles = 0;

    // Squared errors per flattened channel parameter after association, in
    // reporting units: gains linear, delay ns, angles deg.
    VecX sq_err_coarse;
    VecX sq_err_sage;
    double pos_err_closed = NAN;  // m
    double pos_err_lm = NAN;      // m
    double orient_err_closed = NAN;  // deg, modulo 180
    double orient_err_lm = NAN;      // deg, modulo 180

    // Bounds at the true parameters with the drawn gains, in the same units (variances).
    VecX crlb_channel;
    double peb_sq = NAN;  // m^2
    double oeb_sq = NAN;  // deg^2
    bool bound_singular = false;

    bool catastrophic = false;
    std::string error;
    std::vector<std::string> flags;

    bool failed() const { return !error.empty(); }
};

TrialRecord run_trial(const ExperimentConfig& cfg, const SystemModel& model, int trial);
TrialRecord run_trial(const ExperimentConfig& cfg, double power_dbm, int trial);

/// Index permutation est_of_truth[q] minimizing sum_q |sin theta_true,q - sin theta_est|.
std::vector<int> associate_paths(const ChannelParams& truth, const ChannelParams& estimate);

/// Squared errors in reporting units after association and angle wrapping.
VecX channel_squared_errors(const ChannelParams& truth, const ChannelParams& estimate);

struct PowerSummary {
    double power_dbm = 0.0;
    int trials = 0;
    int failures = 0;
    int catastrophic = 0;
    VecX rmse_coarse;
    VecX rmse_sage;
    VecX rmse_sage_filtered;
    VecX crlb_root;
    double pos_rmse_closed = NAN;
    double pos_rmse_lm = NAN;
    double pos_rmse_lm_filtered = NAN;
    double peb = NAN;
    double orient_rmse_closed = NAN;
    double orient_rmse_lm = NAN;
    double orient_rmse_lm_filtered = NAN;
    double oeb = NAN;
};

struct SweepReport {
    int num_paths = 0;
    std::vector<PowerSummary> powers;
    std::vector<std::vector<TrialRecord>> records;  // [power][trial]
};

PowerSummary summarize(double power_dbm, const std::vector<TrialRecord>& records, int num_paths);
SweepReport run_sweep(const ExperimentConfig& cfg);

/// Aggregate CSV with one row per power.
std::string aggregate_csv(const SweepReport& report);
void write_aggregate_csv(const SweepReport& report, const std::string& path);

/// One file per parameter family plus position and orientation. Returns the written paths.
std::vector<std::string> emit_plot_data(const SweepReport& report, const std::string& dir);

} // namespace rispos
