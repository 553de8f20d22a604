// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. The slow criteria train real desk-profile models, so the
// whole run takes minutes, not seconds.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "leosinr/experiment.hpp"

using namespace leosinr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("acceptance: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Criterion {
    int id;
    std::string label;
    bool passed;
    double seconds;
    std::string detail;
};

exp::ExperimentConfig desk_config(dmhsa::Variant variant, uint64_t seed) {
    exp::ExperimentConfig cfg = exp::ExperimentConfig::from_profile(exp::Profile::kDesk);
    cfg.variant = variant;
    cfg.seed = seed;
    cfg.workers = 1;
    return cfg;
}

}  // namespace

int main() {
    std::vector<Criterion> results;
    std::ostringstream detail_log;
    const fs::path work = fs::path("acceptance_out");
    fs::remove_all(work);
    fs::create_directories(work);

    const auto selftest_results = exp::run_selftest_checks(detail_log);
    auto check_of = [&](const std::string& needle) {
        for (const auto& r : selftest_results)
            if (r.name.find(needle) != std::string::npos) return r.passed;
        return false;
    };

    // 1. oracle correctness
    {
        const auto t0 = Clock::now();
        const bool ok = check_of("mmse solve") && check_of("per-antenna") &&
                        check_of("single-user");
        results.push_back({1, "oracle correctness (solve vs inverse, norms, single user)", ok,
                           seconds_since(t0), ""});
    }

    // 2. gradient integrity
    {
        const bool ok = check_of("primitives") && check_of("composite");
        results.push_back({2, "gradient integrity (finite differences)", ok, 0.0, ""});
    }

    // 3. complexity reproduction
    {
        const auto t0 = Clock::now();
        exp::write_complexity_report((work / "complexity").string());
        std::ifstream in(work / "complexity" / "complexity.csv");
        std::string line;
        std::getline(in, line);
        bool ok = false;
        while (std::getline(in, line)) {
            if (line.rfind("8,", 0) == 0) {
                ok = line == "8,294912,98304,4608";
                break;
            }
        }
        results.push_back({3, "complexity row at N_C=8 equals 294912/98304/4608", ok,
                           seconds_since(t0), line});
    }

    // 4. parameter-count bands
    {
        const auto t0 = Clock::now();
        dmhsa::DmhsaConfig geo_cfg{dmhsa::Variant::kGeo, 24, 8, 4, 512, 0.01};
        dmhsa::DmhsaConfig csi_cfg{dmhsa::Variant::kCsi, 24, 8, 4, 512, 0.01};
        const size_t geo_count = dmhsa::DmhsaParams(geo_cfg, 1).count();
        const size_t csi_count = dmhsa::DmhsaParams(csi_cfg, 1).count();
        const bool ok = geo_count >= 530 && geo_count <= 1000 && csi_count >= 4400 &&
                        csi_count <= 5400;
        std::ostringstream d;
        d << "geo=" << geo_count << " (claimed 762; biases and the learned position table "
          << "are unstated, two FC blocks + PE + two 4-head modules with biases give this "
          << "count), csi=" << csi_count << " (claimed 4.8k)";
        results.push_back({4, "parameter counts inside the declared bands", ok,
                           seconds_since(t0), d.str()});
    }

    // 5. desk-scale training efficacy, both variants
    exp::TrainSummary geo_train, csi_train;
    {
        const auto t0 = Clock::now();
        bool ok = true;
        std::ostringstream d;
        try {
            const exp::ExperimentConfig geo_cfg = desk_config(dmhsa::Variant::kGeo, 20250808);
            geo_train = exp::train(geo_cfg, (work / "train_geo").string());
            const exp::EvalRandomSummary geo_eval =
                exp::eval_random(geo_cfg, geo_train.model_path, (work / "eval_geo").string());

            const exp::ExperimentConfig csi_cfg = desk_config(dmhsa::Variant::kCsi, 20250808);
            csi_train = exp::train(csi_cfg, (work / "train_csi").string());
            const exp::EvalRandomSummary csi_eval =
                exp::eval_random(csi_cfg, csi_train.model_path, (work / "eval_csi").string());

            const double elapsed = seconds_since(t0);
            const bool geo_ok = geo_eval.rmse_db <= 0.7 * geo_eval.baseline_rmse_db &&
                                geo_eval.n_estimates >= 100000;
            const bool csi_ok = csi_eval.rmse_db <= 0.7 * csi_eval.baseline_rmse_db &&
                                csi_eval.n_estimates >= 100000;
            // the trainer itself must have made real progress
            const bool loss_ok =
                geo_train.final_cycle_mean_loss < 0.5 * geo_train.first_epoch_loss &&
                csi_train.final_cycle_mean_loss < 0.5 * csi_train.first_epoch_loss;
            ok = geo_ok && csi_ok && loss_ok && elapsed < 1800.0;
            d << "geo rmse " << geo_eval.rmse_db << " vs 0.7*baseline "
              << 0.7 * geo_eval.baseline_rmse_db << " on " << geo_eval.n_estimates
              << " estimates; csi rmse " << csi_eval.rmse_db << " vs "
              << 0.7 * csi_eval.baseline_rmse_db << " on " << csi_eval.n_estimates
              << " estimates; cycle-mean loss geo " << geo_train.final_cycle_mean_loss
              << " / csi " << csi_train.final_cycle_mean_loss << " vs half of first-epoch "
              << 0.5 * geo_train.first_epoch_loss << " / " << 0.5 * csi_train.first_epoch_loss
              << "; " << elapsed << " s";
        } catch (const std::exception& e) {
            ok = false;
            d << "exception: " << e.what();
        }
        results.push_back({5, "desk training beats 0.7x the constant-mean RMSE", ok,
                           seconds_since(t0), d.str()});
    }

    // 6. PQS-protocol behavior
    {
        const auto t0 = Clock::now();
        bool ok = true;
        std::ostringstream d;
        try {
            for (dmhsa::Variant variant : {dmhsa::Variant::kGeo, dmhsa::Variant::kCsi}) {
                const bool is_geo = variant == dmhsa::Variant::kGeo;
                const exp::ExperimentConfig cfg = desk_config(variant, 20250808);
                // calibration mutates the model file, so deploy a copy and
                // leave the training artifact untouched for criterion 8
                const std::string model =
                    (work / (is_geo ? "deployed_geo.bin" : "deployed_csi.bin")).string();
                fs::copy_file(is_geo ? geo_train.model_path : csi_train.model_path, model,
                              fs::copy_options::overwrite_existing);
                const double bias = exp::calibrate_model_bias(cfg, model);
                // (a) fresh sample from the calibration distribution
                const double holdout_err =
                    exp::pqs_mean_signed_error(cfg, model, "pqs-holdout", 32);
                const exp::EvalPqsSummary pqs = exp::eval_pqs(
                    cfg, model, (work / (is_geo ? "pqs_geo" : "pqs_csi")).string());

                size_t violations = 0;
                double rmse_low_cmin = 0.0, rmse_high_cmin = 0.0;
                size_t n_low = 0, n_high = 0;
                for (const exp::PqsCellStats& c : pqs.cells) {
                    violations += c.constraint_violations;
                    if (c.c_min_mbps <= 5.0) {
                        rmse_low_cmin += c.rmse_db * c.rmse_db *
                                         static_cast<double>(c.n_estimates);
                        n_low += c.n_estimates;
                    } else {
                        rmse_high_cmin += c.rmse_db * c.rmse_db *
                                          static_cast<double>(c.n_estimates);
                        n_high += c.n_estimates;
                    }
                }
                rmse_low_cmin = std::sqrt(rmse_low_cmin / static_cast<double>(n_low));
                rmse_high_cmin = std::sqrt(rmse_high_cmin / static_cast<double>(n_high));

                const bool bias_ok = std::abs(holdout_err) <= 0.05;
                const bool order_ok = rmse_high_cmin <= rmse_low_cmin;
                const bool audit_ok = violations == 0;
                ok = ok && bias_ok && order_ok && audit_ok;
                d << (is_geo ? "geo" : "csi") << ": bias " << bias
                  << " dB, holdout mean err " << holdout_err << " dB, rmse(c_min=20) "
                  << rmse_high_cmin << " <= rmse(c_min=5) " << rmse_low_cmin
                  << ", violations " << violations << "; ";
            }
        } catch (const std::exception& e) {
            ok = false;
            d << "exception: " << e.what();
        }
        results.push_back({6, "PQS bias calibration, RMSE ordering, constraint audit", ok,
                           seconds_since(t0), d.str()});
    }

    // 7. masking invariants
    results.push_back({7, "masking invariants", check_of("masking"), 0.0, ""});

    // 8. determinism of two single-worker desk training runs
    {
        const auto t0 = Clock::now();
        bool ok = true;
        std::ostringstream d;
        try {
            const exp::ExperimentConfig cfg = desk_config(dmhsa::Variant::kGeo, 20250808);
            const exp::TrainSummary rerun = exp::train(cfg, (work / "train_geo_rerun").string());
            const bool model_same =
                read_bytes(geo_train.model_path) == read_bytes(rerun.model_path);
            const bool curve_same =
                read_bytes(geo_train.curve_path) == read_bytes(rerun.curve_path);
            ok = model_same && curve_same;
            d << "model bytes " << (model_same ? "identical" : "DIFFER") << ", curve bytes "
              << (curve_same ? "identical" : "DIFFER");
        } catch (const std::exception& e) {
            ok = false;
            d << "exception: " << e.what();
        }
        results.push_back({8, "byte-identical model and CSV across reruns", ok,
                           seconds_since(t0), d.str()});
    }

    int failures = 0;
    std::cout << "---- acceptance criteria ----\n";
    for (const Criterion& c : results) {
        std::cout << (c.passed ? "[PASS]" : "[FAIL]") << " criterion " << c.id << ": "
                  << c.label;
        if (c.seconds > 0.05) std::cout << " (" << c.seconds << " s)";
        if (!c.detail.empty()) std::cout << "\n        " << c.detail;
        std::cout << "\n";
        if (!c.passed) ++failures;
    }
    std::cout << "---- selftest detail ----\n" << detail_log.str();
    if (failures > 0) std::cout << failures << " criterion(s) failed\n";
    return failures;
}
