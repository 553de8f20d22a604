#include "leosinr/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace leosinr::exp {

ExperimentConfig ExperimentConfig::from_profile(Profile p) {
    ExperimentConfig c;
    c.profile = p;
    c.clusters = {{-150.0, 120.0, 60.0, 0.5}, {100.0, -180.0, 90.0, 0.3},
                  {350.0, 60.0, 50.0, 0.2}};
    c.link.rx_gain = from_db(40.0);  // VSAT-class terminal
    if (p == Profile::kDesk) {
        c.array.n_elements = 64;
        c.array.grid_rows = 8;
        c.array.grid_cols = 8;
        c.n_beams = 8;
        c.min_group_size = 3;
        c.batch_size = 256;
        c.max_epochs = 2000;
        c.lr.warmup_epochs = 20;
        c.lr.cycle_epochs = 50;
        c.population_count = 32;
        c.eval_test_samples = 20000;
        c.pqs_periods_per_cell = 16;
        // the 8x8 aperture widens the beams ~2x per axis vs the 16x32 grid,
        // so the equivalent co-scheduling selectivity sits at a higher
        // correlation level
        c.pqs.correlation_threshold = 0.8;
    } else {
        c.array.n_elements = 512;
        c.array.grid_rows = 16;
        c.array.grid_cols = 32;
        c.n_beams = 24;
        c.min_group_size = 8;
        c.batch_size = 8192;
        c.max_epochs = 15000;
        c.lr.warmup_epochs = 40;
        c.lr.cycle_epochs = 100;
        c.population_count = 120;
        c.eval_test_samples = 50000;
        c.pqs_periods_per_cell = 50;
    }
    return c;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
    size_t pos = 0;
    double d = 0.0;
    try {
        d = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has non-numeric value '" + value + "'");
    }
    if (pos != value.size())
        throw ConfigError("config: key '" + key + "' has trailing junk in '" + value + "'");
    return d;
}

long parse_long(const std::string& key, const std::string& value) {
    const double d = parse_double(key, value);
    const long l = static_cast<long>(d);
    if (static_cast<double>(l) != d)
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
    return l;
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        if (a == std::string::npos) throw ConfigError("config: empty list entry in " + key);
        out.push_back(parse_double(key, item.substr(a, b - a + 1)));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

void resize_clusters(std::vector<RelativeCluster>& clusters, size_t n) {
    if (clusters.size() < n) clusters.resize(n);
}

}  // namespace

void ExperimentConfig::apply_key(const std::string& key, const std::string& value) {
    using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> table = {
        {"seed", [](auto& c, auto& k, auto& v) { c.seed = static_cast<uint64_t>(parse_long(k, v)); }},
        {"workers", [](auto& c, auto& k, auto& v) { c.workers = static_cast<int>(parse_long(k, v)); }},
        {"variant",
         [](auto& c, auto& k, auto& v) {
             if (v == "csi") c.variant = dmhsa::Variant::kCsi;
             else if (v == "geo") c.variant = dmhsa::Variant::kGeo;
             else throw ConfigError("config: key '" + k + "' expects csi|geo, got '" + v + "'");
         }},
        {"orbit.altitude_km", [](auto& c, auto& k, auto& v) { c.orbit.altitude_km = parse_double(k, v); }},
        {"orbit.earth_radius_km",
         [](auto& c, auto& k, auto& v) { c.orbit.earth_radius_km = parse_double(k, v); }},
        {"orbit.min_elevation_deg",
         [](auto& c, auto& k, auto& v) { c.orbit.min_elevation_deg = parse_double(k, v); }},
        {"pass.start_lat_deg", [](auto& c, auto& k, auto& v) { c.pass_start_lat_deg = parse_double(k, v); }},
        {"pass.start_lon_deg", [](auto& c, auto& k, auto& v) { c.pass_start_lon_deg = parse_double(k, v); }},
        {"pass.heading_deg", [](auto& c, auto& k, auto& v) { c.pass_heading_deg = parse_double(k, v); }},
        {"pass.duration_s", [](auto& c, auto& k, auto& v) { c.pass_duration_s = parse_double(k, v); }},
        {"array.n_elements",
         [](auto& c, auto& k, auto& v) { c.array.n_elements = static_cast<size_t>(parse_long(k, v)); }},
        {"array.grid_rows",
         [](auto& c, auto& k, auto& v) { c.array.grid_rows = static_cast<size_t>(parse_long(k, v)); }},
        {"array.grid_cols",
         [](auto& c, auto& k, auto& v) { c.array.grid_cols = static_cast<size_t>(parse_long(k, v)); }},
        {"array.element_spacing_m",
         [](auto& c, auto& k, auto& v) { c.array.element_spacing_m = parse_double(k, v); }},
        {"array.element_boresight_gain",
         [](auto& c, auto& k, auto& v) { c.array.element_boresight_gain = parse_double(k, v); }},
        {"array.pattern_exponent",
         [](auto& c, auto& k, auto& v) { c.array.element_pattern_exponent = parse_double(k, v); }},
        {"link.carrier_hz",
         [](auto& c, auto& k, auto& v) { c.link.carrier_frequency_hz = parse_double(k, v); }},
        {"link.bandwidth_hz",
         [](auto& c, auto& k, auto& v) { c.link.user_bandwidth_hz = parse_double(k, v); }},
        {"link.noise_temperature_k",
         [](auto& c, auto& k, auto& v) { c.link.noise_temperature_k = parse_double(k, v); }},
        {"link.rx_gain_db", [](auto& c, auto& k, auto& v) { c.link.rx_gain = from_db(parse_double(k, v)); }},
        {"link.stochastic_loss_db",
         [](auto& c, auto& k, auto& v) { c.link.stochastic_loss_db = parse_double(k, v); }},
        {"link.shadow_sigma_db",
         [](auto& c, auto& k, auto& v) { c.shadow_sigma_db = parse_double(k, v); }},
        {"beamformer.per_element_power_w",
         [](auto& c, auto& k, auto& v) { c.per_element_power_w = parse_double(k, v); }},
        {"model.n_beams",
         [](auto& c, auto& k, auto& v) { c.n_beams = static_cast<size_t>(parse_long(k, v)); }},
        {"model.n_channels",
         [](auto& c, auto& k, auto& v) { c.n_channels = static_cast<size_t>(parse_long(k, v)); }},
        {"model.n_heads",
         [](auto& c, auto& k, auto& v) { c.n_heads = static_cast<size_t>(parse_long(k, v)); }},
        {"model.leaky_slope", [](auto& c, auto& k, auto& v) { c.leaky_slope = parse_double(k, v); }},
        {"train.batch_size",
         [](auto& c, auto& k, auto& v) { c.batch_size = static_cast<size_t>(parse_long(k, v)); }},
        {"train.max_epochs", [](auto& c, auto& k, auto& v) { c.max_epochs = parse_long(k, v); }},
        {"train.l2", [](auto& c, auto& k, auto& v) { c.l2 = parse_double(k, v); }},
        {"train.lr_min", [](auto& c, auto& k, auto& v) { c.lr.lr_min = parse_double(k, v); }},
        {"train.lr_max", [](auto& c, auto& k, auto& v) { c.lr.lr_max = parse_double(k, v); }},
        {"train.warmup_epochs", [](auto& c, auto& k, auto& v) { c.lr.warmup_epochs = parse_long(k, v); }},
        {"train.cycle_epochs", [](auto& c, auto& k, auto& v) { c.lr.cycle_epochs = parse_long(k, v); }},
        {"train.patience_cycles", [](auto& c, auto& k, auto& v) { c.patience_cycles = parse_long(k, v); }},
        {"sched.min_group_size",
         [](auto& c, auto& k, auto& v) { c.min_group_size = static_cast<size_t>(parse_long(k, v)); }},
        {"population.count",
         [](auto& c, auto& k, auto& v) { c.population_count = static_cast<size_t>(parse_long(k, v)); }},
        {"population.cluster_along_km",
         [](auto& c, auto& k, auto& v) {
             const auto xs = parse_list(k, v);
             resize_clusters(c.clusters, xs.size());
             for (size_t i = 0; i < xs.size(); ++i) c.clusters[i].along_km = xs[i];
         }},
        {"population.cluster_cross_km",
         [](auto& c, auto& k, auto& v) {
             const auto xs = parse_list(k, v);
             resize_clusters(c.clusters, xs.size());
             for (size_t i = 0; i < xs.size(); ++i) c.clusters[i].cross_km = xs[i];
         }},
        {"population.cluster_sigma_km",
         [](auto& c, auto& k, auto& v) {
             const auto xs = parse_list(k, v);
             resize_clusters(c.clusters, xs.size());
             for (size_t i = 0; i < xs.size(); ++i) c.clusters[i].sigma_km = xs[i];
         }},
        {"population.cluster_weight",
         [](auto& c, auto& k, auto& v) {
             const auto xs = parse_list(k, v);
             resize_clusters(c.clusters, xs.size());
             for (size_t i = 0; i < xs.size(); ++i) c.clusters[i].weight = xs[i];
         }},
        {"pqs.slot_duration_s",
         [](auto& c, auto& k, auto& v) { c.pqs.slot_duration_s = parse_double(k, v); }},
        {"pqs.scheduling_period_s",
         [](auto& c, auto& k, auto& v) { c.pqs.scheduling_period_s = parse_double(k, v); }},
        {"pqs.max_residual_visibility_slots",
         [](auto& c, auto& k, auto& v) { c.pqs.max_residual_visibility_slots = parse_long(k, v); }},
        {"pqs.unmet_capacity_factor",
         [](auto& c, auto& k, auto& v) { c.pqs.unmet_capacity_factor = parse_double(k, v); }},
        {"pqs.n_priority_classes",
         [](auto& c, auto& k, auto& v) { c.pqs.n_priority_classes = static_cast<int>(parse_long(k, v)); }},
        {"pqs.correlation_threshold",
         [](auto& c, auto& k, auto& v) { c.pqs.correlation_threshold = parse_double(k, v); }},
        {"pqs.distance_threshold_km",
         [](auto& c, auto& k, auto& v) { c.pqs.distance_threshold_km = parse_double(k, v); }},
        {"pqs.packet_mbit",
         [](auto& c, auto& k, auto& v) { c.pqs.packet_mbit = parse_double(k, v); }},
        {"pqs.periods_per_cell",
         [](auto& c, auto& k, auto& v) { c.pqs_periods_per_cell = parse_long(k, v); }},
        {"pqs.calibration_periods",
         [](auto& c, auto& k, auto& v) { c.pqs_calibration_periods = parse_long(k, v); }},
        {"pqs.c_min_grid_mbps",
         [](auto& c, auto& k, auto& v) { c.pqs_c_min_grid = parse_list(k, v); }},
        {"pqs.c_max_grid_mbps",
         [](auto& c, auto& k, auto& v) { c.pqs_c_max_grid = parse_list(k, v); }},
        {"eval.test_samples",
         [](auto& c, auto& k, auto& v) { c.eval_test_samples = static_cast<size_t>(parse_long(k, v)); }},
        {"eval.histogram_bins",
         [](auto& c, auto& k, auto& v) { c.histogram_bins = static_cast<size_t>(parse_long(k, v)); }},
        {"calib.samples",
         [](auto& c, auto& k, auto& v) { c.calibration_samples = static_cast<size_t>(parse_long(k, v)); }},
        {"calib.mu_h", [](auto& c, auto& k, auto& v) { c.calib_mu_h = parse_double(k, v); }},
        {"calib.sigma_h", [](auto& c, auto& k, auto& v) { c.calib_sigma_h = parse_double(k, v); }},
        {"calib.mu_sinr", [](auto& c, auto& k, auto& v) { c.calib_mu_sinr = parse_double(k, v); }},
        {"calib.sigma_sinr", [](auto& c, auto& k, auto& v) { c.calib_sigma_sinr = parse_double(k, v); }},
    };
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(*this, key, value);
}

void ExperimentConfig::apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + " of " + path +
                              " is not 'key = value'");
        apply_key(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    validate();
}

void ExperimentConfig::validate() const {
    orbit.validate();
    array.validate();
    link.validate();
    model().validate();
    pqs.validate();
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (min_group_size < 1 || min_group_size > n_beams)
        throw ConfigError("config: sched.min_group_size must lie in [1, n_beams]");
    if (population_count < min_group_size)
        throw ConfigError("config: population.count must be >= sched.min_group_size");
    if (clusters.empty()) throw ConfigError("config: population needs at least one cluster");
    if (!(pass_duration_s > 0.0)) throw ConfigError("config: pass.duration_s must be positive");
    if (batch_size < 1 || max_epochs < 1) throw ConfigError("config: degenerate training setup");
    if (!(lr.lr_min > 0.0 && lr.lr_min < lr.lr_max))
        throw ConfigError("config: need 0 < lr_min < lr_max");
    if (lr.warmup_epochs < 1 || lr.cycle_epochs < 1)
        throw ConfigError("config: warmup/cycle epochs must be positive");
    if (pqs_c_min_grid.empty() || pqs_c_max_grid.empty())
        throw ConfigError("config: PQS traffic grid must be non-empty");
    if (shadow_sigma_db < 0.0) throw ConfigError("config: shadow sigma must be >= 0");
}

}  // namespace leosinr::exp
