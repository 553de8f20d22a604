#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "leosinr/config.hpp"
#include "leosinr/dmhsa.hpp"

namespace leosinr::exp {

/// One scheduling instance: padded features plus oracle labels in dB.
struct Instance {
    dmhsa::FeatureMatrix features;
    std::vector<double> labels_db;  // n_beams entries, zeros on padded slots
};

struct CalibrationStats {
    double mu_h = 0.0;
    double sigma_h = 1.0;
    double mu_sinr_db = 0.0;
    double sigma_sinr_db = 1.0;
};

Instance generate_instance(const ExperimentConfig& cfg, const geo::Pass& pass,
                           const dmhsa::LabelStandardizer& s, uint64_t instance_seed);

/// Feature/label standardization constants from a dedicated calibration
/// batch (disjoint seed stream).
CalibrationStats estimate_calibration(const ExperimentConfig& cfg, const geo::Pass& pass);

/// Resolves the standardizer: config-pinned constants when present,
/// otherwise a fresh calibration estimate.
dmhsa::LabelStandardizer resolve_standardizer(const ExperimentConfig& cfg, const geo::Pass& pass);

struct TrainSummary {
    long epochs_run = 0;
    double first_epoch_loss = 0.0;
    double best_loss = 0.0;
    long best_epoch = -1;
    double final_cycle_mean_loss = 0.0;
    bool early_stopped = false;
    std::string model_path;
    std::string curve_path;
};

TrainSummary train(const ExperimentConfig& cfg, const std::string& out_dir);

struct EvalRandomSummary {
    size_t n_estimates = 0;
    double rmse_db = 0.0;
    double baseline_rmse_db = 0.0;  // constant-mean predictor on the same set
    double spearman_rmse_vs_nsched = 0.0;
    std::vector<size_t> bucket_n_sched;
    std::vector<double> bucket_rmse_db;
};

EvalRandomSummary eval_random(const ExperimentConfig& cfg, const std::string& model_path,
                              const std::string& out_dir);

struct PqsCellStats {
    double c_min_mbps = 0.0;
    double c_max_mbps = 0.0;
    size_t n_estimates = 0;
    double rmse_db = 0.0;
    double median_abs_err_db = 0.0;
    double mean_signed_err_db = 0.0;
    double mean_group_size = 0.0;
    size_t constraint_violations = 0;
};

struct EvalPqsSummary {
    std::vector<PqsCellStats> cells;
};

EvalPqsSummary eval_pqs(const ExperimentConfig& cfg, const std::string& model_path,
                        const std::string& out_dir);

/// Estimates the deployment bias on a held-out PQS sample and stores it in
/// the model file. Returns the bias in dB.
double calibrate_model_bias(const ExperimentConfig& cfg, const std::string& model_path);

/// Mean signed estimation error (dB) over a fresh PQS sample drawn from the
/// same traffic-grid distribution, using the bias stored in the model file.
double pqs_mean_signed_error(const ExperimentConfig& cfg, const std::string& model_path,
                             const char* seed_tag, long periods_per_cell);

/// Operation-count sweep over N_C at the published operating point.
void write_complexity_report(const std::string& out_dir);

/// Writes calibration.json and a config fragment with the estimated
/// standardization constants.
CalibrationStats gen_calibration(const ExperimentConfig& cfg, const std::string& out_dir);

struct SelftestResult {
    std::string name;
    bool passed = false;
};

/// Oracle, gradient, and masking property suites, one result per check.
std::vector<SelftestResult> run_selftest_checks(std::ostream& out);

/// Runs every check and prints one line each; returns the failure count.
int selftest(std::ostream& out);

}  // namespace leosinr::exp
