#include "rispos/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rispos/rng.hpp"

namespace rispos {

namespace {

constexpr double kDeg = 180.0 / kPi;

// Stream tags for derive_seed.
constexpr std::uint64_t kPilotStream = 0x50494c4fULL;
constexpr std::uint64_t kPhaseStream = 0x50484153ULL;
constexpr std::uint64_t kGainStream = 0x4741494eULL;
constexpr std::uint64_t kNoiseStream = 0x4e4f4953ULL;

Vec3 read_vec3(const nlohmann::json& j, const char* key) {
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorCode::ConfigError, std::string(key) + " must be an array of three numbers");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

std::string fmt(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double mean_or_nan(double sum, int count) { return count > 0 ? sum / count : NAN; }

} // namespace

void ExperimentConfig::validate() const {
    if (trials < 1)
        throw Error(ErrorCode::ConfigError, "trials must be at least 1");
    if (powers_dbm.empty())
        throw Error(ErrorCode::ConfigError, "power sweep must not be empty");
    if (threads < 0)
        throw Error(ErrorCode::ConfigError, "threads must be non-negative");
    geometry.validate();
    system.validate(geometry.num_paths());
}

ExperimentConfig parse_config(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("malformed config: ") + e.what());
    }
    if (!j.is_object())
        throw Error(ErrorCode::ConfigError, "config must be a JSON object");

    ExperimentConfig cfg;
    try {
        SystemConfig& s = cfg.system;
        if (j.contains("carrier_hz"))
            s.carrier_hz = j["carrier_hz"].get<double>();
        cfg.geometry = default_geometry(s.carrier_hz);
        ScenarioGeometry& g = cfg.geometry;

        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            const nlohmann::json& v = it.value();
            if (k == "carrier_hz") continue;
            else if (k == "bandwidth_hz") s.bandwidth_hz = v.get<double>();
            else if (k == "subcarriers") s.subcarriers = v.get<int>();
            else if (k == "slots") s.slots = v.get<int>();
            else if (k == "block0_slots") s.block0_slots = v.get<int>();
            else if (k == "blocks") s.blocks = v.get<int>();
            else if (k == "block_slots") s.block_slots = v.get<int>();
            else if (k == "noise_dbm_hz") s.noise_dbm_hz = v.get<double>();
            else if (k == "grid_m") s.grid_m = v.get<int>();
            else if (k == "grid_a") s.grid_a = v.get<int>();
            else if (k == "grid_e") s.grid_e = v.get<int>();
            else if (k == "shadowing_db") s.shadowing_db = v.get<double>();
            else if (k == "pathloss_exponent") s.pathloss_exponent = v.get<double>();
            else if (k == "nlos_excess_db") s.nlos_excess_db = v.get<double>();
            else if (k == "powers_dbm") cfg.powers_dbm = v.get<std::vector<double>>();
            else if (k == "trials") cfg.trials = v.get<int>();
            else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
            else if (k == "aod_mle") cfg.stages.aod_mle = v.get<bool>();
            else if (k == "sage") cfg.stages.sage = v.get<bool>();
            else if (k == "lm") cfg.stages.lm = v.get<bool>();
            else if (k == "noiseless") cfg.noiseless = v.get<bool>();
            else if (k == "output_dir") cfg.output_dir = v.get<std::string>();
            else if (k == "threads") cfg.threads = v.get<int>();
            else if (k == "bs") g.bs = read_vec3(v, "bs");
            else if (k == "ris") g.ris = read_vec3(v, "ris");
            else if (k == "ms") g.ms = read_vec3(v, "ms");
            else if (k == "alpha_deg") g.alpha = v.get<double>() / kDeg;
            else if (k == "scatterers") {
                g.scatterers.clear();
                for (const auto& e : v)
                    g.scatterers.push_back(read_vec3(e, "scatterers[]"));
            }
            else if (k == "n_b") g.n_b = v.get<int>();
            else if (k == "n_m") g.n_m = v.get<int>();
            else if (k == "n_a") g.n_a = v.get<int>();
            else if (k == "n_e") g.n_e = v.get<int>();
            else if (k == "sage_max_cycles") cfg.sage.max_cycles = v.get<int>();
            else if (k == "lm_max_iterations") cfg.lm.max_iterations = v.get<int>();
            else
                throw Error(ErrorCode::ConfigError, "unknown config key: " + k);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string("bad config value: ") + e.what());
    }
    cfg.coarse.refine_aod = cfg.stages.aod_mle;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

SystemModel make_model(const ExperimentConfig& cfg, double power_dbm) {
    SystemModel m;
    m.cfg = cfg.system;
    m.cfg.power_dbm = power_dbm;
    m.arrays = cfg.geometry;
    m.schedule = make_phase_schedule(m.cfg, cfg.geometry.n_r(), derive_seed(cfg.seed, kPhaseStream));
    m.pilots = scale_pilots(make_pilot_signs(m.cfg, cfg.geometry.n_m, derive_seed(cfg.seed, kPilotStream)),
                            m.cfg.power_watts());
    return m;
}

std::vector<cd> nominal_gains(const SystemConfig& cfg, const ScenarioGeometry& g) {
    const double pl0 = vlos_path_loss_db(cfg, g, 0.0);
    std::vector<cd> gains;
    for (int q = 0; q < g.num_paths(); ++q) {
        const double pl = q == 0 ? pl0 : pl0 + cfg.nlos_excess_db;
        gains.emplace_back(std::sqrt(std::pow(10.0, -pl / 10.0)), 0.0);
    }
    return gains;
}

std::uint64_t trial_gain_seed(std::uint64_t master, int trial) {
    return derive_seed(master, kGainStream, static_cast<std::uint64_t>(trial));
}

std::uint64_t trial_noise_seed(std::uint64_t master, int trial) {
    return derive_seed(master, kNoiseStream, static_cast<std::uint64_t>(trial));
}

std::vector<int> associate_paths(const ChannelParams& truth, const ChannelParams& estimate) {
    const int np = truth.num_paths();
    if (estimate.num_paths() != np)
        throw Error(ErrorCode::DimensionMismatch, "path counts differ");
    std::vector<int> perm(np);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_cost = INFINITY;
    do {
        double c = 0.0;
        for (int q = 0; q < np; ++q)
            c += std::abs(std::sin(truth.paths[q].theta_t) - std::sin(estimate.paths[perm[q]].theta_t));
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

VecX channel_squared_errors(const ChannelParams& truth, const ChannelParams& estimate) {
    const std::vector<int> map = associate_paths(truth, estimate);
    const int np = truth.num_paths();
    VecX e(kPerPath * np);
    for (int q = 0; q < np; ++q) {
        const PathParams& t = truth.paths[q];
        const PathParams& h = estimate.paths[map[q]];
        const int o = kPerPath * q;
        e(o + kTau) = std::pow((h.tau - t.tau) * 1e9, 2);
        e(o + kDeltaR) = std::pow(h.delta.real() - t.delta.real(), 2);
        e(o + kDeltaI) = std::pow(h.delta.imag() - t.delta.imag(), 2);
        e(o + kTheta) = std::pow((h.theta_t - t.theta_t) * kDeg, 2);
        e(o + kPhi) = std::pow((h.phi_in - t.phi_in) * kDeg, 2);
        e(o + kPsi) = std::pow(wrap_difference(h.psi_in - t.psi_in, 2.0 * kPi) * kDeg, 2);
    }
    return e;
}

namespace {

VecX channel_unit_scale(int np) {
    VecX s(kPerPath * np);
    for (int q = 0; q < np; ++q) {
        const int o = kPerPath * q;
        s(o + kTau) = 1e9;
        s(o + kDeltaR) = 1.0;
        s(o + kDeltaI) = 1.0;
        s(o + kTheta) = kDeg;
        s(o + kPhi) = kDeg;
        s(o + kPsi) = kDeg;
    }
    return s;
}

void score_position(const PositionParams& truth, const PositionParams& est, double& pos, double& orient) {
    pos = (est.ms - truth.ms).norm();
    orient = std::abs(wrap_difference(est.alpha - truth.alpha, kPi)) * kDeg;
}

} // namespace

TrialRecord run_trial(const ExperimentConfig& cfg, const SystemModel& model, int trial) {
    TrialRecord rec;
    rec.trial = trial;
    rec.power_dbm = model.cfg.power_dbm;
    rec.gain_seed = trial_gain_seed(cfg.seed, trial);
    rec.noise_seed = trial_noise_seed(cfg.seed, trial);
    const ScenarioGeometry& g = cfg.geometry;
    const int np = g.num_paths();

    rec.gains = draw_gains(model.cfg, g, rec.gain_seed);
    rec.truth = channel_params(g, rec.gains);
    rec.truth_position = position_params(g, rec.gains);

    const double sigma2 = model.cfg.noise_variance();
    try {
        const MatX j = fim_channel(model, rec.truth, sigma2);
        const MatX t = transformation_matrix(rec.truth_position, g.bs, g.ris);
        const BoundReport b = position_bounds(j, t);
        const VecX s = channel_unit_scale(np);
        rec.crlb_channel = b.crlb_channel.cwiseProduct(s.cwiseAbs2());
        rec.peb_sq = b.peb * b.peb;
        rec.oeb_sq = std::pow(b.oeb * kDeg, 2);
        rec.bound_singular = b.singular;
    } catch (const Error& e) {
        rec.flags.push_back(std::string("bound_failed:") + to_string(e.code()));
    }

    const RxSignal rx = synthesize_rx(model.cfg, g, rec.truth, model.schedule, model.pilots, rec.noise_seed,
                                      !cfg.noiseless);
    try {
        CoarseSettings cs = cfg.coarse;
        cs.refine_aod = cfg.stages.aod_mle;
        const CoarseEstimate coarse = coarse_estimate(model, rx, np, cs);
        rec.flags.insert(rec.flags.end(), coarse.flags.begin(), coarse.flags.end());
        rec.coarse = coarse.params;
        rec.sq_err_coarse = channel_squared_errors(rec.truth, coarse.params);

        // A wrong support that the AOD refinement could not repair leaves an AOD
        // error of more than two dictionary cells.
        const std::vector<int> map = associate_paths(rec.truth, coarse.params);
        for (int q = 0; q < np; ++q) {
            const double err = std::sin(coarse.params.paths[map[q]].theta_t) - std::sin(rec.truth.paths[q].theta_t);
            if (std::abs(err) > 2.0 * 2.0 / model.cfg.grid_m)
                rec.catastrophic = true;
        }

        ChannelParams refined = coarse.params;
        if (cfg.stages.sage) {
            const SageResult sage = run_sage(model, rx, coarse.params, cfg.sage);
            rec.sage = sage.params;
            rec.sage_likelihood = sage.likelihood;
            rec.sage_cycles = sage.cycles;
            rec.sq_err_sage = channel_squared_errors(rec.truth, sage.params);
            refined = sage.params;
        }

        std::vector<std::string> pos_flags;
        const PositionParams closed = closed_form_position(refined, g.ris, g.bs, &pos_flags);
        rec.flags.insert(rec.flags.end(), pos_flags.begin(), pos_flags.end());
        rec.closed_form = closed;
        score_position(rec.truth_position, closed, rec.pos_err_closed, rec.orient_err_closed);

        if (cfg.stages.lm) {
            const MatX w = fim_channel(model, refined, sigma2);
            const LmResult lm = refine_position_lm(refined.flatten(), w, closed, g.bs, g.ris, cfg.lm);
            if (lm.stalled)
                rec.flags.push_back("lm_stalled");
            rec.lm = lm.params;
            score_position(rec.truth_position, lm.params, rec.pos_err_lm, rec.orient_err_lm);
        }
    } catch (const Error& e) {
        rec.error = e.what();
    }
    return rec;
}

TrialRecord run_trial(const ExperimentConfig& cfg, double power_dbm, int trial) {
    return run_trial(cfg, make_model(cfg, power_dbm), trial);
}

PowerSummary summarize(double power_dbm, const std::vector<TrialRecord>& records, int num_paths) {
    const int dim = kPerPath * num_paths;
    PowerSummary s;
    s.power_dbm = power_dbm;
    s.trials = static_cast<int>(records.size());
    VecX sum_c = VecX::Zero(dim), sum_s = VecX::Zero(dim), sum_sf = VecX::Zero(dim), sum_b = VecX::Zero(dim);
    int n_c = 0, n_s = 0, n_sf = 0, n_b = 0;
    double pc = 0.0, pl = 0.0, plf = 0.0, oc = 0.0, ol = 0.0, olf = 0.0, peb = 0.0, oeb = 0.0;
    int n_pc = 0, n_pl = 0, n_plf = 0, n_peb = 0;

    for (const TrialRecord& r : records) {
        if (r.crlb_channel.size() == dim && std::isfinite(r.peb_sq)) {
            sum_b += r.crlb_channel;
            peb += r.peb_sq;
            oeb += r.oeb_sq;
            ++n_b;
            ++n_peb;
        }
        if (r.failed()) {
            ++s.failures;
            continue;
        }
        if (r.catastrophic)
            ++s.catastrophic;
        if (r.sq_err_coarse.size() == dim) {
            sum_c += r.sq_err_coarse;
            ++n_c;
        }
        if (r.sq_err_sage.size() == dim) {
            sum_s += r.sq_err_sage;
            ++n_s;
            if (!r.catastrophic) {
                sum_sf += r.sq_err_sage;
                ++n_sf;
            }
        }
        if (std::isfinite(r.pos_err_closed)) {
            pc += r.pos_err_closed * r.pos_err_closed;
            oc += r.orient_err_closed * r.orient_err_closed;
            ++n_pc;
        }
        if (std::isfinite(r.pos_err_lm)) {
            pl += r.pos_err_lm * r.pos_err_lm;
            ol += r.orient_err_lm * r.orient_err_lm;
            ++n_pl;
            if (!r.catastrophic) {
                plf += r.pos_err_lm * r.pos_err_lm;
                olf += r.orient_err_lm * r.orient_err_lm;
                ++n_plf;
            }
        }
    }
    auto root_mean = [dim](const VecX& sum, int n) {
        return n > 0 ? VecX((sum / n).cwiseSqrt()) : VecX::Constant(dim, NAN);
    };
    s.rmse_coarse = root_mean(sum_c, n_c);
    s.rmse_sage = root_mean(sum_s, n_s);
    s.rmse_sage_filtered = root_mean(sum_sf, n_sf);
    s.crlb_root = root_mean(sum_b, n_b);
    s.pos_rmse_closed = std::sqrt(mean_or_nan(pc, n_pc));
    s.orient_rmse_closed = std::sqrt(mean_or_nan(oc, n_pc));
    s.pos_rmse_lm = std::sqrt(mean_or_nan(pl, n_pl));
    s.orient_rmse_lm = std::sqrt(mean_or_nan(ol, n_pl));
    s.pos_rmse_lm_filtered = std::sqrt(mean_or_nan(plf, n_plf));
    s.orient_rmse_lm_filtered = std::sqrt(mean_or_nan(olf, n_plf));
    s.peb = std::sqrt(mean_or_nan(peb, n_peb));
    s.oeb = std::sqrt(mean_or_nan(oeb, n_peb));
    return s;
}

SweepReport run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    SweepReport report;
    report.num_paths = cfg.geometry.num_paths();
    int workers = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::thread::hardware_concurrency());
    workers = std::clamp(workers, 1, cfg.trials);

    for (double power : cfg.powers_dbm) {
        const SystemModel model = make_model(cfg, power);
        std::vector<TrialRecord> records(cfg.trials);
        std::atomic<int> next{0};
        auto work = [&]() {
            for (int i = next++; i < cfg.trials; i = next++)
                records[i] = run_trial(cfg, model, i);
        };
        std::vector<std::thread> pool;
        for (int w = 1; w < workers; ++w)
            pool.emplace_back(work);
        work();
        for (std::thread& t : pool)
            t.join();
        report.powers.push_back(summarize(power, records, report.num_paths));
        report.records.push_back(std::move(records));
    }
    return report;
}

namespace {

const char* const kParamNames[kPerPath] = {"tau_ns", "delta_r", "delta_i", "theta_t_deg", "phi_in_deg", "psi_in_deg"};

} // namespace

std::string aggregate_csv(const SweepReport& report) {
    std::ostringstream os;
    os << "power_dbm,trials,failures,catastrophic";
    for (int q = 0; q < report.num_paths; ++q)
        for (const char* name : kParamNames)
            for (const char* col : {"rmse_coarse", "rmse_sage", "rmse_sage_filtered", "crlb_root"})
                os << ',' << name << '_' << q << '_' << col;
    os << ",position_rmse_closed_m,position_rmse_lm_m,position_rmse_lm_filtered_m,peb_m";
    os << ",orientation_rmse_closed_deg,orientation_rmse_lm_deg,orientation_rmse_lm_filtered_deg,oeb_deg\n";
    for (const PowerSummary& s : report.powers) {
        os << fmt(s.power_dbm) << ',' << s.trials << ',' << s.failures << ',' << s.catastrophic;
        for (int i = 0; i < kPerPath * report.num_paths; ++i)
            os << ',' << fmt(s.rmse_coarse(i)) << ',' << fmt(s.rmse_sage(i)) << ',' << fmt(s.rmse_sage_filtered(i))
               << ',' << fmt(s.crlb_root(i));
        os << ',' << fmt(s.pos_rmse_closed) << ',' << fmt(s.pos_rmse_lm) << ',' << fmt(s.pos_rmse_lm_filtered) << ','
           << fmt(s.peb);
        os << ',' << fmt(s.orient_rmse_closed) << ',' << fmt(s.orient_rmse_lm) << ','
           << fmt(s.orient_rmse_lm_filtered) << ',' << fmt(s.oeb) << '\n';
    }
    return os.str();
}

void write_aggregate_csv(const SweepReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorCode::IoError, "cannot write " + path);
    out << aggregate_csv(report);
    if (!out)
        throw Error(ErrorCode::IoError, "write failed: " + path);
}

std::vector<std::string> emit_plot_data(const SweepReport& report, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorCode::IoError, "cannot create " + dir);
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        const std::string path = (std::filesystem::path(dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw Error(ErrorCode::IoError, "cannot write " + path);
        written.push_back(path);
        return out;
    };

    const char* const files[kPerPath] = {"fig_tau.csv", "fig_delta_r.csv", "fig_delta_i.csv",
                                         "fig_theta_t.csv", "fig_phi_in.csv", "fig_psi_in.csv"};
    const int order[kPerPath] = {kDeltaR, kDeltaI, kTau, kTheta, kPhi, kPsi};
    for (int slot : order) {
        std::ofstream out = open(files[slot]);
        out << "power_dBm,path,rmse_coarse,rmse_refined,bound\n";
        for (const PowerSummary& s : report.powers)
            for (int q = 0; q < report.num_paths; ++q) {
                const int i = kPerPath * q + slot;
                out << fmt(s.power_dbm) << ',' << q << ',' << fmt(s.rmse_coarse(i)) << ',' << fmt(s.rmse_sage(i))
                    << ',' << fmt(s.crlb_root(i)) << '\n';
            }
        if (!out)
            throw Error(ErrorCode::IoError, "write failed: " + written.back());
    }
    {
        std::ofstream out = open("fig_position.csv");
        out << "power_dBm,rmse_coarse,rmse_refined,bound\n";
        for (const PowerSummary& s : report.powers)
            out << fmt(s.power_dbm) << ',' << fmt(s.pos_rmse_closed) << ',' << fmt(s.pos_rmse_lm) << ','
                << fmt(s.peb) << '\n';
    }
    {
        std::ofstream out = open("fig_orientation.csv");
        out << "power_dBm,rmse_coarse,rmse_refined,bound\n";
        for (const PowerSummary& s : report.powers)
            out << fmt(s.power_dbm) << ',' << fmt(s.orient_rmse_closed) << ',' << fmt(s.orient_rmse_lm) << ','
                << fmt(s.oeb) << '\n';
    }
    return written;
}

} // namespace rispos
