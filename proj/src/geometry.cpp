#include "leosinr/geometry.hpp"

#include <algorithm>

namespace leosinr::geo {

void OrbitConfig::validate() const {
    if (!(altitude_km > 0.0)) throw ConfigError("orbit: altitude must be positive");
    if (!(earth_radius_km > 0.0)) throw ConfigError("orbit: earth radius must be positive");
    if (!(min_elevation_deg > 0.0 && min_elevation_deg < 90.0))
        throw ConfigError("orbit: min elevation must lie in (0, 90) deg");
}

double OrbitConfig::angular_rate() const {
    const double a = orbit_radius_m();
    return std::sqrt(kEarthMu / (a * a * a));
}

void GroundPosition::validate() const {
    if (std::abs(latitude_deg) > 90.0) throw ConfigError("ground position: |latitude| > 90");
    if (longitude_deg < -180.0 || longitude_deg >= 180.0)
        throw ConfigError("ground position: longitude outside [-180, 180)");
}

Vec3 GroundPosition::unit_vector() const {
    const double lat = deg2rad(latitude_deg);
    const double lon = deg2rad(longitude_deg);
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

GroundPosition GroundPosition::from_unit_vector(const Vec3& v) {
    GroundPosition p;
    p.latitude_deg = rad2deg(std::asin(std::clamp(v.z, -1.0, 1.0)));
    p.longitude_deg = rad2deg(std::atan2(v.y, v.x));
    if (p.longitude_deg >= 180.0) p.longitude_deg -= 360.0;
    return p;
}

Pass::Pass(const OrbitConfig& orbit, const GroundPosition& start, double heading_deg)
    : orbit_(orbit) {
    orbit_.validate();
    start.validate();
    track_e1_ = start.unit_vector();
    // local east/north at the start point
    const double lat = deg2rad(start.latitude_deg);
    const double lon = deg2rad(start.longitude_deg);
    const Vec3 east{-std::sin(lon), std::cos(lon), 0.0};
    const Vec3 north{-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
                     std::cos(lat)};
    const double h = deg2rad(heading_deg);
    track_e2_ = (north * std::cos(h) + east * std::sin(h)).normalized();
}

SatState Pass::state_at(double time_s) const {
    const double s = orbit_.angular_rate() * time_s;
    const Vec3 ground = track_e1_ * std::cos(s) + track_e2_ * std::sin(s);
    const Vec3 tangent = track_e1_ * -std::sin(s) + track_e2_ * std::cos(s);
    SatState st;
    st.time_s = time_s;
    st.position = ground * orbit_.orbit_radius_m();
    st.nadir = ground * -1.0;
    st.along_track = tangent;
    st.cross_track = st.nadir.cross(st.along_track).normalized();
    return st;
}

PassInstant Pass::instant_at(double time_s) const {
    const SatState st = state_at(time_s);
    return {time_s, GroundPosition::from_unit_vector(st.nadir * -1.0)};
}

double slant_range_m(const SatState& sat, const GroundPosition& user, const OrbitConfig& orbit) {
    const Vec3 u = user.unit_vector() * orbit.earth_radius_m();
    return (sat.position - u).norm();
}

double elevation_angle_deg(const SatState& sat, const GroundPosition& user,
                           const OrbitConfig& orbit) {
    const Vec3 up = user.unit_vector();
    const Vec3 u = up * orbit.earth_radius_m();
    const Vec3 to_sat = (sat.position - u).normalized();
    return rad2deg(std::asin(std::clamp(to_sat.dot(up), -1.0, 1.0)));
}

UvCoordinate uv_of_user(const SatState& sat, const GroundPosition& user,
                        const OrbitConfig& orbit) {
    if (elevation_angle_deg(sat, user, orbit) < 0.0)
        throw NotVisibleError("uv_of_user: user below the horizon");
    const Vec3 u = user.unit_vector() * orbit.earth_radius_m();
    const Vec3 dir = (u - sat.position).normalized();
    return {dir.dot(sat.along_track), dir.dot(sat.cross_track)};
}

double great_circle_distance_km(const GroundPosition& a, const GroundPosition& b,
                                const OrbitConfig& orbit) {
    const double c = std::clamp(a.unit_vector().dot(b.unit_vector()), -1.0, 1.0);
    return orbit.earth_radius_km * std::acos(c);
}

GroundPosition displace_ground(const Vec3& point_unit, const Vec3& tangent_unit,
                               double distance_km, double earth_radius_km) {
    const double delta = distance_km / earth_radius_km;
    return GroundPosition::from_unit_vector(point_unit * std::cos(delta) +
                                            tangent_unit * std::sin(delta));
}

namespace {

GroundPosition displace_on_sphere(const GroundPosition& center, double east_km, double north_km,
                                  double earth_radius_km) {
    const double dist = std::hypot(east_km, north_km);
    if (dist == 0.0) return center;
    const double lat = deg2rad(center.latitude_deg);
    const double lon = deg2rad(center.longitude_deg);
    const Vec3 east{-std::sin(lon), std::cos(lon), 0.0};
    const Vec3 north{-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon),
                     std::cos(lat)};
    const Vec3 dir = east * (east_km / dist) + north * (north_km / dist);
    return displace_ground(center.unit_vector(), dir, dist, earth_radius_km);
}

double mixture_density(const ClusterSpec& spec, const GroundPosition& p, double total_weight,
                       double earth_radius_km) {
    double d = 0.0;
    for (const auto& comp : spec.components) {
        if (comp.weight <= 0.0) continue;
        const double r = earth_radius_km *
                         std::acos(std::clamp(p.unit_vector().dot(comp.center.unit_vector()),
                                              -1.0, 1.0));
        const double s2 = comp.sigma_km * comp.sigma_km;
        d += (comp.weight / total_weight) / (2.0 * kPi * s2) * std::exp(-0.5 * r * r / s2);
    }
    return d;
}

}  // namespace

UserPopulation drop_users(uint64_t seed, size_t count, const ClusterSpec& spec,
                          const SatState& sat, const OrbitConfig& orbit) {
    if (count < 1) throw ConfigError("drop_users: count must be >= 1");
    double total_weight = 0.0;
    for (const auto& comp : spec.components) total_weight += std::max(comp.weight, 0.0);
    if (!(total_weight > 0.0)) throw ConfigError("drop_users: degenerate mixture, all weights zero");

    Rng rng(seed);
    UserPopulation pop;
    pop.positions.reserve(count);

    const size_t max_attempts = 10000 * count;
    size_t attempts = 0;
    while (pop.positions.size() < count) {
        if (++attempts > max_attempts)
            throw NumericalError("drop_users: rejection sampling failed to find visible users; "
                                 "cluster spec is outside the footprint");
        // component pick by weight
        double pick = rng.uniform() * total_weight;
        const ClusterComponent* comp = &spec.components.back();
        for (const auto& c : spec.components) {
            if (c.weight <= 0.0) continue;
            pick -= c.weight;
            if (pick <= 0.0) {
                comp = &c;
                break;
            }
        }
        const double east = rng.normal(0.0, comp->sigma_km);
        const double north = rng.normal(0.0, comp->sigma_km);
        const GroundPosition p =
            displace_on_sphere(comp->center, east, north, orbit.earth_radius_km);
        if (elevation_angle_deg(sat, p, orbit) < orbit.min_elevation_deg) continue;
        pop.positions.push_back(p);
    }

    pop.density_weight.resize(count);
    double max_density = 0.0;
    for (size_t i = 0; i < count; ++i) {
        pop.density_weight[i] =
            mixture_density(spec, pop.positions[i], total_weight, orbit.earth_radius_km);
        max_density = std::max(max_density, pop.density_weight[i]);
    }
    if (max_density > 0.0)
        for (double& w : pop.density_weight) w /= max_density;
    return pop;
}

}  // namespace leosinr::geo
