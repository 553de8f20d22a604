#include "leosinr/channel.hpp"

#include <algorithm>

namespace leosinr::channel {

void ArrayConfig::validate() const {
    if (grid_rows * grid_cols != n_elements)
        throw ConfigError("array: grid_rows * grid_cols must equal n_elements");
    if (!(element_spacing_m > 0.0)) throw ConfigError("array: element spacing must be positive");
    if (!(element_boresight_gain > 0.0)) throw ConfigError("array: boresight gain must be positive");
}

void LinkBudget::validate() const {
    if (!(carrier_frequency_hz > 0.0) || !(user_bandwidth_hz > 0.0) ||
        !(noise_temperature_k > 0.0) || !(boltzmann > 0.0) || !(rx_gain > 0.0))
        throw ConfigError("link budget: all physical constants must be strictly positive");
    if (stochastic_loss_db < 0.0) throw ConfigError("link budget: stochastic loss must be >= 0 dB");
}

UserGeometry user_geometry(const geo::SatState& sat, const geo::GroundPosition& user,
                           const geo::OrbitConfig& orbit) {
    if (geo::elevation_angle_deg(sat, user, orbit) < 0.0)
        throw NotVisibleError("user_geometry: user below the horizon");
    const Vec3 u = user.unit_vector() * orbit.earth_radius_m();
    const Vec3 d = u - sat.position;
    UserGeometry g;
    g.slant_range_m = d.norm();
    const Vec3 dir = d * (1.0 / g.slant_range_m);
    g.dir_x = dir.dot(sat.along_track);
    g.dir_y = dir.dot(sat.cross_track);
    g.dir_z = dir.dot(sat.nadir);
    g.off_boresight_rad = std::acos(std::clamp(g.dir_z, -1.0, 1.0));
    return g;
}

std::vector<Vec3> element_positions(const ArrayConfig& cfg) {
    cfg.validate();
    std::vector<Vec3> pos;
    pos.reserve(cfg.n_elements);
    const double s = cfg.element_spacing_m;
    const double x0 = -0.5 * s * static_cast<double>(cfg.grid_cols - 1);
    const double y0 = -0.5 * s * static_cast<double>(cfg.grid_rows - 1);
    for (size_t r = 0; r < cfg.grid_rows; ++r)
        for (size_t c = 0; c < cfg.grid_cols; ++c)
            pos.push_back({x0 + s * static_cast<double>(c), y0 + s * static_cast<double>(r), 0.0});
    return pos;
}

double element_tx_gain(const ArrayConfig& cfg, double off_boresight_rad) {
    if (off_boresight_rad >= kPi / 2.0) return 0.0;
    const double c = std::cos(off_boresight_rad);
    return std::sqrt(cfg.element_boresight_gain) *
           std::pow(c, cfg.element_pattern_exponent / 2.0);
}

cxd channel_coefficient(const UserGeometry& user, const Vec3& element_pos, const LinkBudget& lb,
                        const ArrayConfig& cfg, double loss_db) {
    const double lambda = lb.wavelength_m();
    const double g_tx = element_tx_gain(cfg, user.off_boresight_rad);
    const double g_rx = std::sqrt(lb.rx_gain);
    const double loss_lin = from_db(loss_db);
    const double denom = (4.0 * kPi * user.slant_range_m / lambda) *
                         std::sqrt(loss_lin * lb.boltzmann * lb.user_bandwidth_hz *
                                   lb.noise_temperature_k);
    const double magnitude = g_tx * g_rx / denom;
    // far field: range to element n is d - p_n . r_hat
    const double proj =
        element_pos.x * user.dir_x + element_pos.y * user.dir_y + element_pos.z * user.dir_z;
    const double range_n = user.slant_range_m - proj;
    const double phase = -2.0 * kPi / lambda * range_n;
    return std::polar(magnitude, phase);
}

ChannelMatrix build_channel_matrix(const std::vector<UserGeometry>& users, const LinkBudget& lb,
                                   const ArrayConfig& cfg, bool clear_sky,
                                   const std::vector<double>* per_user_loss_db, long slot_index) {
    if (users.empty()) throw ShapeError("build_channel_matrix: empty user group");
    if (per_user_loss_db && per_user_loss_db->size() != users.size())
        throw ShapeError("build_channel_matrix: loss vector size mismatch");
    const std::vector<Vec3> elements = element_positions(cfg);

    ChannelMatrix h;
    h.slot_index = slot_index;
    h.coefficients = CxMatrix(users.size(), cfg.n_elements);
    for (size_t k = 0; k < users.size(); ++k) {
        double loss_db = lb.stochastic_loss_db;
        if (per_user_loss_db) loss_db = (*per_user_loss_db)[k];
        if (clear_sky) loss_db = 0.0;
        const UserGeometry& g = users[k];

        // shared amplitude and the common phase term exp(-j 2 pi d / lambda)
        const double lambda = lb.wavelength_m();
        const double denom = (4.0 * kPi * g.slant_range_m / lambda) *
                             std::sqrt(from_db(loss_db) * lb.boltzmann * lb.user_bandwidth_hz *
                                       lb.noise_temperature_k);
        const double magnitude = element_tx_gain(cfg, g.off_boresight_rad) *
                                 std::sqrt(lb.rx_gain) / denom;
        const double common_phase = -2.0 * kPi / lambda * g.slant_range_m;
        for (size_t n = 0; n < cfg.n_elements; ++n) {
            const Vec3& p = elements[n];
            const double proj = p.x * g.dir_x + p.y * g.dir_y + p.z * g.dir_z;
            h.coefficients(k, n) =
                std::polar(magnitude, common_phase + 2.0 * kPi / lambda * proj);
        }
    }
    return h;
}

}  // namespace leosinr::channel
