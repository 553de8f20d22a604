#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace leosinr {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 299792458.0;       // m/s
inline constexpr double kBoltzmann = 1.380649e-23;         // J/K
inline constexpr double kEarthMu = 3.986004418e14;         // m^3/s^2

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// Power ratio to dB. Zero maps to -inf, matching the single-user INR case.
inline double to_db(double linear) {
    if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(linear);
}

inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotVisibleError : std::runtime_error {
    explicit NotVisibleError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace leosinr
