#pragma once

// Internal units: time in microseconds, length in millimetres,
// angular frequencies in rad/us. Linear frequencies (MHz) only appear at
// the user-facing boundary and are converted with two_pi.

#include <numbers>

namespace tripod {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Speed of light in mm/us.
inline constexpr double speed_of_light = 2.99792458e5;

/// Linear Zeeman shift per gauss for the F=1 manifold, MHz/G.
inline constexpr double zeeman_mhz_per_gauss = 0.70;

/// Linear frequency (MHz) to angular frequency (rad/us).
constexpr double angular(double mhz) noexcept { return two_pi * mhz; }

/// Angular frequency (rad/us) to linear frequency (MHz).
constexpr double linear(double rad_per_us) noexcept { return rad_per_us / two_pi; }

} // namespace tripod
