#pragma once

#include <numbers>

/// Physical constants in SI units (CODATA 2018; h, k_B exact by SI definition).
namespace talbot::constants
{
inline constexpr double pi = std::numbers::pi;

/// Planck constant in J s (exact)
inline constexpr double planck = 6.62607015e-34;
/// reduced Planck constant in J s
inline constexpr double hbar = planck / (2.0 * pi);
/// atomic mass unit in kg
inline constexpr double amu = 1.66053906660e-27;
/// Boltzmann constant in J / K (exact)
inline constexpr double boltzmann = 1.380649e-23;
/// local gravitational acceleration in m / s^2 used for the beamline default
inline constexpr double gravity = 9.81;
} // namespace talbot::constants
