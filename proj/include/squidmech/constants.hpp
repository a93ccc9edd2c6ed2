#pragma once

#include <numbers>

namespace squidmech::constants {

/// SI defining constants (exact since the 2019 redefinition).
inline constexpr double h = 6.62607015e-34;
inline constexpr double e = 1.602176634e-19;
inline constexpr double kB = 1.380649e-23;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double hbar = h / two_pi;

/// Superconducting flux quantum h/2e.
inline constexpr double Phi0 = h / (2.0 * e);
/// Reduced flux quantum hbar/2e.
inline constexpr double phi0 = hbar / (2.0 * e);

} // namespace squidmech::constants
