#pragma once

#include <cstdint>
#include <vector>

#include "leosinr/linalg.hpp"
#include "leosinr/rng.hpp"

namespace leosinr::geo {

struct OrbitConfig {
    double altitude_km = 1000.0;
    double earth_radius_km = 6371.0;
    double min_elevation_deg = 30.0;

    void validate() const;
    double orbit_radius_m() const { return (earth_radius_km + altitude_km) * 1e3; }
    double earth_radius_m() const { return earth_radius_km * 1e3; }
    /// Angular rate of a circular orbit at this altitude (rad/s). Earth
    /// rotation is ignored, so this is also the ground-track rate.
    double angular_rate() const;
};

struct GroundPosition {
    double latitude_deg = 0.0;
    double longitude_deg = 0.0;

    void validate() const;
    /// Unit vector from the Earth's center (spherical Earth).
    Vec3 unit_vector() const;
    static GroundPosition from_unit_vector(const Vec3& v);
};

struct UvCoordinate {
    double u = 0.0;
    double v = 0.0;
};

struct PassInstant {
    double time_s = 0.0;
    GroundPosition sub_satellite_point;
};

/// Satellite position plus the array-face frame at one pass instant.
/// Boresight is nadir; x is along-track, y completes the right-handed triad.
struct SatState {
    double time_s = 0.0;
    Vec3 position;     // ECEF, meters
    Vec3 along_track;  // unit
    Vec3 cross_track;  // unit
    Vec3 nadir;        // unit, toward the Earth's center
};

/// Great-circle ground track at constant altitude and constant angular rate.
/// The track is fixed by its ground point and heading at t = 0.
class Pass {
public:
    Pass(const OrbitConfig& orbit, const GroundPosition& start, double heading_deg);

    const OrbitConfig& orbit() const { return orbit_; }
    SatState state_at(double time_s) const;
    PassInstant instant_at(double time_s) const;

private:
    OrbitConfig orbit_;
    Vec3 track_e1_;  // unit vector of the t=0 sub-satellite point
    Vec3 track_e2_;  // unit vector 90 deg ahead along the track
};

double slant_range_m(const SatState& sat, const GroundPosition& user, const OrbitConfig& orbit);
double elevation_angle_deg(const SatState& sat, const GroundPosition& user, const OrbitConfig& orbit);

/// Direction cosines of the user in the array-face frame.
/// Throws NotVisibleError when the user is below the horizon.
UvCoordinate uv_of_user(const SatState& sat, const GroundPosition& user, const OrbitConfig& orbit);

double great_circle_distance_km(const GroundPosition& a, const GroundPosition& b,
                                const OrbitConfig& orbit);

/// Moves a ground point by `distance_km` along a unit tangent direction
/// (great-circle step on the sphere).
GroundPosition displace_ground(const Vec3& point_unit, const Vec3& tangent_unit,
                               double distance_km, double earth_radius_km);

struct ClusterComponent {
    GroundPosition center;
    double sigma_km = 50.0;
    double weight = 1.0;
};

struct ClusterSpec {
    std::vector<ClusterComponent> components;
};

struct UserPopulation {
    std::vector<GroundPosition> positions;
    std::vector<double> density_weight;  // normalized mixture density, in [0, 1]
};

/// Seeded Gaussian-mixture drop on the sphere. Samples falling below the
/// orbit's minimum elevation (as seen at `sat`) are rejected and redrawn.
UserPopulation drop_users(uint64_t seed, size_t count, const ClusterSpec& spec,
                          const SatState& sat, const OrbitConfig& orbit);

}  // namespace leosinr::geo
