#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "leosinr/experiment.hpp"

namespace {

using leosinr::exp::ExperimentConfig;
using leosinr::exp::Profile;

struct GlobalOptions {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string profile = "desk";
    std::string variant;
    std::string out_dir = "out";
    std::optional<int> workers;
};

ExperimentConfig resolve_config(const GlobalOptions& opt) {
    Profile profile;
    if (opt.profile == "desk")
        profile = Profile::kDesk;
    else if (opt.profile == "paper")
        profile = Profile::kPaper;
    else
        throw leosinr::ConfigError("--profile must be desk or paper");
    ExperimentConfig cfg = ExperimentConfig::from_profile(profile);
    if (!opt.config_path.empty()) cfg.apply_file(opt.config_path);
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.workers) cfg.workers = *opt.workers;
    if (!opt.variant.empty()) cfg.apply_key("variant", opt.variant);
    cfg.validate();
    return cfg;
}

std::string default_model_path(const GlobalOptions& opt, const ExperimentConfig& cfg) {
    return opt.out_dir + "/" +
           (cfg.variant == leosinr::dmhsa::Variant::kCsi ? "model_csi.bin" : "model_geo.bin");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LEO user-centric beamforming SINR lab: MMSE oracle, channel simulator, "
                 "and dual-attention SINR estimators"};
    app.require_subcommand(1);

    GlobalOptions opt;
    app.add_option("--config", opt.config_path, "experiment configuration file");
    app.add_option("--seed", opt.seed, "base RNG seed");
    app.add_option("--profile", opt.profile, "scale profile: desk|paper")->capture_default_str();
    app.add_option("--variant", opt.variant, "estimator variant: csi|geo");
    app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
    app.add_option("--workers", opt.workers, "worker threads (1 = fully serial)");

    std::string model_path;

    CLI::App* cmd_gen_calib =
        app.add_subcommand("gen-calibration", "estimate standardization constants");
    CLI::App* cmd_train = app.add_subcommand("train", "train one estimator variant");
    CLI::App* cmd_eval_random =
        app.add_subcommand("eval-random", "evaluate under random scheduling");
    cmd_eval_random->add_option("--model", model_path, "model file (default from --out)");
    CLI::App* cmd_eval_pqs =
        app.add_subcommand("eval-pqs", "evaluate under priority-queue scheduling");
    cmd_eval_pqs->add_option("--model", model_path, "model file (default from --out)");
    CLI::App* cmd_calib_bias =
        app.add_subcommand("calibrate-bias", "estimate and store the deployment bias");
    cmd_calib_bias->add_option("--model", model_path, "model file (default from --out)");
    CLI::App* cmd_complexity =
        app.add_subcommand("complexity", "emit the operation-count sweep");
    CLI::App* cmd_selftest =
        app.add_subcommand("selftest", "run the oracle/gradient property suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_selftest->parsed()) {
            const int failures = leosinr::exp::selftest(std::cout);
            if (failures > 0) {
                std::cerr << failures << " selftest check(s) failed\n";
                return 4;
            }
            return 0;
        }
        if (cmd_complexity->parsed()) {
            leosinr::exp::write_complexity_report(opt.out_dir);
            std::cout << "wrote " << opt.out_dir << "/complexity.csv\n";
            return 0;
        }

        const ExperimentConfig cfg = resolve_config(opt);
        if (cmd_gen_calib->parsed()) {
            const auto stats = leosinr::exp::gen_calibration(cfg, opt.out_dir);
            std::cout << "mu_h=" << stats.mu_h << " sigma_h=" << stats.sigma_h
                      << " mu_sinr_db=" << stats.mu_sinr_db
                      << " sigma_sinr_db=" << stats.sigma_sinr_db << "\n";
            return 0;
        }
        if (cmd_train->parsed()) {
            const auto summary = leosinr::exp::train(cfg, opt.out_dir);
            std::cout << "trained " << summary.epochs_run << " epochs"
                      << (summary.early_stopped ? " (early stop)" : "") << ", best loss "
                      << summary.best_loss << " at epoch " << summary.best_epoch << "\n"
                      << "model: " << summary.model_path << "\n";
            return 0;
        }
        if (model_path.empty()) model_path = default_model_path(opt, cfg);
        if (cmd_eval_random->parsed()) {
            const auto s = leosinr::exp::eval_random(cfg, model_path, opt.out_dir);
            std::cout << "estimates=" << s.n_estimates << " rmse_db=" << s.rmse_db
                      << " baseline_rmse_db=" << s.baseline_rmse_db
                      << " spearman=" << s.spearman_rmse_vs_nsched << "\n";
            return 0;
        }
        if (cmd_eval_pqs->parsed()) {
            const auto s = leosinr::exp::eval_pqs(cfg, model_path, opt.out_dir);
            for (const auto& c : s.cells)
                std::cout << "c_min=" << c.c_min_mbps << " c_max=" << c.c_max_mbps
                          << " rmse_db=" << c.rmse_db
                          << " median_abs_db=" << c.median_abs_err_db
                          << " violations=" << c.constraint_violations << "\n";
            return 0;
        }
        if (cmd_calib_bias->parsed()) {
            const double bias = leosinr::exp::calibrate_model_bias(cfg, model_path);
            std::cout << "bias_db=" << bias << " stored in " << model_path << "\n";
            return 0;
        }
    } catch (const leosinr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const leosinr::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
