// Command-line front end: simulate, sweep, bounds and single-trial debugging.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rispos/harness.hpp"

using namespace rispos;

namespace {

ExperimentConfig config_from(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_config(path);
}

void print_bounds(const ExperimentConfig& cfg) {
    const std::vector<cd> gains = nominal_gains(cfg.system, cfg.geometry);
    const ChannelParams eta = channel_params(cfg.geometry, gains);
    const PositionParams pos = position_params(cfg.geometry, gains);
    const MatX t = transformation_matrix(pos, cfg.geometry.bs, cfg.geometry.ris);
    std::printf("power_dbm,peb_m,oeb_deg,condition,singular");
    const char* names[kPerPath] = {"tau_ns", "delta_r", "delta_i", "theta_t_deg", "phi_in_deg", "psi_in_deg"};
    for (int q = 0; q < eta.num_paths(); ++q)
        for (const char* n : names)
            std::printf(",crlb_root_%s_%d", n, q);
    std::printf("\n");
    const double scale[kPerPath] = {1e9, 1.0, 1.0, 180.0 / kPi, 180.0 / kPi, 180.0 / kPi};
    for (double p : cfg.powers_dbm) {
        const SystemModel model = make_model(cfg, p);
        const MatX j = fim_channel(model, eta, model.cfg.noise_variance());
        const BoundReport b = position_bounds(j, t);
        std::printf("%.10g,%.10g,%.10g,%.6g,%d", p, b.peb, b.oeb * 180.0 / kPi, b.condition, b.singular ? 1 : 0);
        for (int i = 0; i < b.crlb_channel.size(); ++i)
            std::printf(",%.10g", std::sqrt(b.crlb_channel(i)) * scale[i % kPerPath]);
        std::printf("\n");
    }
}

void print_trial(const TrialRecord& r) {
    std::printf("trial %d power %.3g dBm gain_seed %llu noise_seed %llu\n", r.trial, r.power_dbm,
                static_cast<unsigned long long>(r.gain_seed), static_cast<unsigned long long>(r.noise_seed));
    auto dump = [](const char* label, const ChannelParams& c) {
        for (int q = 0; q < c.num_paths(); ++q) {
            const PathParams& p = c.paths[q];
            std::printf("  %-6s path %d: tau %.6f ns  delta (%.4e, %.4e)  theta %.6f  phi %.6f  psi %.6f deg\n",
                        label, q, p.tau * 1e9, p.delta.real(), p.delta.imag(), p.theta_t * 180.0 / kPi,
                        p.phi_in * 180.0 / kPi, p.psi_in * 180.0 / kPi);
        }
    };
    dump("truth", r.truth);
    if (r.coarse)
        dump("coarse", *r.coarse);
    if (r.sage) {
        dump("sage", *r.sage);
        std::printf("  sage cycles %d\n", r.sage_cycles);
    }
    auto pose = [](const char* label, const PositionParams& p) {
        std::printf("  %-6s m = [%.6f, %.6f, %.6f] m  alpha %.6f deg\n", label, p.ms.x(), p.ms.y(), p.ms.z(),
                    p.alpha * 180.0 / kPi);
    };
    pose("truth", r.truth_position);
    if (r.closed_form)
        pose("closed", *r.closed_form);
    if (r.lm)
        pose("lm", *r.lm);
    std::printf("  position error: closed %.6g m, lm %.6g m; orientation error: closed %.6g deg, lm %.6g deg\n",
                r.pos_err_closed, r.pos_err_lm, r.orient_err_closed, r.orient_err_lm);
    std::printf("  peb %.6g m, oeb %.6g deg\n", std::sqrt(r.peb_sq), std::sqrt(r.oeb_sq));
    for (const std::string& f : r.flags)
        std::printf("  flag: %s\n", f.c_str());
    if (r.failed())
        std::printf("  error: %s\n", r.error.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RIS-aided MS localization simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int trials = 0;
    std::vector<double> powers;
    std::uint64_t seed = 0;
    double power = 20.0;
    int index = 0;
    bool noiseless = false;

    CLI::App* simulate = app.add_subcommand("simulate", "run the power sweep and write CSV plus plot files");
    simulate->add_option("--config", config_path, "JSON config file");
    simulate->add_option("--out", out_dir, "output directory")->required();
    simulate->add_option("--trials", trials, "Monte Carlo trials per power");

    CLI::App* sweep = app.add_subcommand("sweep", "run the power sweep and print the aggregate CSV");
    sweep->add_option("--config", config_path, "JSON config file");
    sweep->add_option("--trials", trials, "Monte Carlo trials per power");
    sweep->add_option("--powers", powers, "transmit powers in dBm");

    CLI::App* bounds = app.add_subcommand("bounds", "print CRLB, PEB and OEB at nominal gains");
    bounds->add_option("--config", config_path, "JSON config file");
    bounds->add_option("--powers", powers, "transmit powers in dBm");

    CLI::App* trial = app.add_subcommand("trial", "run and print one trial");
    trial->add_option("--config", config_path, "JSON config file");
    trial->add_option("--seed", seed, "master seed");
    trial->add_option("--power", power, "transmit power in dBm");
    trial->add_option("--index", index, "trial index");
    trial->add_flag("--noiseless", noiseless, "disable receiver noise");

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg = config_from(config_path);
        if (trials > 0)
            cfg.trials = trials;
        if (!powers.empty())
            cfg.powers_dbm = powers;
        cfg.validate();

        if (*simulate) {
            const SweepReport report = run_sweep(cfg);
            std::filesystem::create_directories(out_dir);
            write_aggregate_csv(report, (std::filesystem::path(out_dir) / "aggregate.csv").string());
            for (const std::string& f : emit_plot_data(report, out_dir))
                std::printf("wrote %s\n", f.c_str());
        } else if (*sweep) {
            std::cout << aggregate_csv(run_sweep(cfg));
        } else if (*bounds) {
            print_bounds(cfg);
        } else if (*trial) {
            if (trial->count("--seed"))
                cfg.seed = seed;
            cfg.noiseless = cfg.noiseless || noiseless;
            print_trial(run_trial(cfg, power, index));
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
