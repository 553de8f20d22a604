#pragma once

#include <string>
#include <vector>

#include "leosinr/autodiff.hpp"
#include "leosinr/beamforming.hpp"
#include "leosinr/channel.hpp"
#include "leosinr/dmhsa.hpp"
#include "leosinr/geometry.hpp"
#include "leosinr/scheduling.hpp"

namespace leosinr::exp {

enum class Profile { kDesk, kPaper };

/// One cluster of the synthetic user drop, anchored to the sub-satellite
/// point so the mixture stays inside the footprint at every pass instant.
struct RelativeCluster {
    double along_km = 0.0;
    double cross_km = 0.0;
    double sigma_km = 60.0;
    double weight = 1.0;
};

/// Every constant of an experiment run. Field groups reuse the module
/// types; experiment-only knobs live at this level.
struct ExperimentConfig {
    Profile profile = Profile::kDesk;
    dmhsa::Variant variant = dmhsa::Variant::kGeo;
    uint64_t seed = 1;
    int workers = 1;

    geo::OrbitConfig orbit;
    double pass_start_lat_deg = 0.0;
    double pass_start_lon_deg = 0.0;
    double pass_heading_deg = 0.0;
    double pass_duration_s = 400.0;

    channel::ArrayConfig array;
    channel::LinkBudget link;
    double shadow_sigma_db = 0.0;  // per-user log-normal loss spread; 0 = clear sky
    double per_element_power_w = 0.065;

    size_t n_beams = 8;
    size_t n_channels = 8;
    size_t n_heads = 4;
    double leaky_slope = 0.01;

    size_t batch_size = 256;
    long max_epochs = 2000;
    double l2 = 1e-6;
    ad::LrSchedule lr;
    long patience_cycles = 4;

    size_t min_group_size = 3;
    size_t population_count = 32;
    std::vector<RelativeCluster> clusters;

    sched::PqsConfig pqs;
    long pqs_periods_per_cell = 16;
    long pqs_calibration_periods = 32;
    std::vector<double> pqs_c_min_grid = {5.0, 20.0};
    std::vector<double> pqs_c_max_grid = {100.0, 500.0};

    size_t eval_test_samples = 20000;
    size_t histogram_bins = 60;

    size_t calibration_samples = 8192;
    // standardization constants; NaN = estimate from a calibration batch
    double calib_mu_h = std::numeric_limits<double>::quiet_NaN();
    double calib_sigma_h = std::numeric_limits<double>::quiet_NaN();
    double calib_mu_sinr = std::numeric_limits<double>::quiet_NaN();
    double calib_sigma_sinr = std::numeric_limits<double>::quiet_NaN();

    static ExperimentConfig from_profile(Profile p);
    /// Strict dotted-key parser; unknown keys and malformed values throw.
    void apply_file(const std::string& path);
    void apply_key(const std::string& key, const std::string& value);
    void validate() const;

    bf::BeamformerConfig beamformer() const {
        return {array.n_elements, per_element_power_w};
    }
    dmhsa::DmhsaConfig model() const {
        return {variant, n_beams, n_channels, n_heads, array.n_elements, leaky_slope};
    }
    geo::Pass make_pass() const {
        return geo::Pass(orbit, {pass_start_lat_deg, pass_start_lon_deg}, pass_heading_deg);
    }
    bool has_calibration() const {
        return std::isfinite(calib_mu_h) && std::isfinite(calib_sigma_h) &&
               std::isfinite(calib_mu_sinr) && std::isfinite(calib_sigma_sinr);
    }
};

}  // namespace leosinr::exp
