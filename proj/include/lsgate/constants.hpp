#pragma once

// CODATA 2018 values; SI units throughout, frequencies angular (rad/s) unless noted.
namespace lsgate::constants {

inline constexpr double pi = 3.141592653589793238462643383279502884;
inline constexpr double two_pi = 2.0 * pi;

inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double epsilon0 = 8.8541878128e-12;  // F/m
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

// 171Yb singly ionized: atomic mass minus one electron mass (binding negligible).
inline constexpr double yb171_ion_mass_u = 170.935782;

}  // namespace lsgate::constants
