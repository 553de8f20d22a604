#pragma once

#include <optional>
#include <vector>

#include "leosinr/geometry.hpp"
#include "leosinr/linalg.hpp"

namespace leosinr::channel {

struct ArrayConfig {
    size_t n_elements = 512;
    size_t grid_rows = 16;
    size_t grid_cols = 32;
    double element_spacing_m = 0.0075;     // lambda/2 at 20 GHz
    double element_boresight_gain = 6.0;   // power gain; 2(q+1), the cos^q directivity
    double element_pattern_exponent = 2.0; // q in the cos^q power pattern

    void validate() const;
};

struct LinkBudget {
    double carrier_frequency_hz = 20e9;
    double user_bandwidth_hz = 190.08e6;
    double noise_temperature_k = 290.0;
    double boltzmann = kBoltzmann;
    double rx_gain = 1.0;              // VSAT power gain
    double stochastic_loss_db = 0.0;   // L_k, applied to every user unless overridden

    void validate() const;
    double wavelength_m() const { return kSpeedOfLight / carrier_frequency_hz; }
};

struct ChannelMatrix {
    CxMatrix coefficients;  // N_sched x N_R
    long slot_index = 0;
};

/// Per-user geometry digest consumed by the coefficient model: centroid slant
/// range plus the user direction expressed in the array-face frame.
struct UserGeometry {
    double slant_range_m = 0.0;
    double dir_x = 0.0;  // direction cosines of the sat->user ray in the array frame
    double dir_y = 0.0;
    double dir_z = 0.0;  // component along boresight (nadir)
    double off_boresight_rad = 0.0;
};

UserGeometry user_geometry(const geo::SatState& sat, const geo::GroundPosition& user,
                           const geo::OrbitConfig& orbit);

/// Element centers on the array face, grid centroid at the origin.
/// Rows run along the frame's y axis, columns along x.
std::vector<Vec3> element_positions(const ArrayConfig& cfg);

/// Amplitude gain of one radiating element at the given off-boresight angle.
double element_tx_gain(const ArrayConfig& cfg, double off_boresight_rad);

/// Complex channel coefficient toward one element. Amplitude uses the
/// centroid slant range; the phase uses the far-field per-element range
/// d_n = d - p_n . r_hat so that the row keeps its spatial signature.
cxd channel_coefficient(const UserGeometry& user, const Vec3& element_pos, const LinkBudget& lb,
                        const ArrayConfig& cfg, double loss_db);

/// Channel rows for a scheduled user group. `clear_sky` forces L_k = 0 dB
/// (the theoretical location-based channel). `per_user_loss_db`, when given,
/// overrides the budget's constant loss user by user.
ChannelMatrix build_channel_matrix(const std::vector<UserGeometry>& users, const LinkBudget& lb,
                                   const ArrayConfig& cfg, bool clear_sky,
                                   const std::vector<double>* per_user_loss_db = nullptr,
                                   long slot_index = 0);

}  // namespace leosinr::channel
