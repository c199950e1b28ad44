#pragma once

#include <numbers>

// Lengths are in units of 1/k (k = 1), rates and detunings in units of the
// single-atom decay rate gamma0 (gamma0 = 1).
namespace lambshift {

inline constexpr double kPi = std::numbers::pi;
/// Resonant wavelength in units of 1/k.
inline constexpr double kLambda0 = 2.0 * std::numbers::pi;
inline constexpr double kWaveNumber = 1.0;
inline constexpr double kGamma0 = 1.0;

}  // namespace lambshift
