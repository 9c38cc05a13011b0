#pragma once

#include <numbers>

// CODATA 2018 exact/recommended values. Everything downstream works in SI;
// the natural-unit helpers below are the only place eV-based quantities are
// converted.
namespace haloscope::constants {

inline constexpr double pi = std::numbers::pi;

inline constexpr double planck = 6.62607015e-34;            // J s
inline constexpr double hbar = planck / (2.0 * pi);         // J s
inline constexpr double boltzmann = 1.380649e-23;           // J/K
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double speed_of_light = 299792458.0;       // m/s
inline constexpr double fine_structure = 7.2973525693e-3;
inline constexpr double vacuum_permeability = 1.25663706212e-6;  // N/A^2

/// hbar*c in eV m.
inline constexpr double hbar_c_ev_m = hbar * speed_of_light / elementary_charge;

inline constexpr double yoctowatt = 1e-24;
inline constexpr double seconds_per_hour = 3600.0;
inline constexpr double seconds_per_day = 86400.0;

/// Reference axion mass for f_a = 1e12 GeV, in eV.
inline constexpr double axion_mass_at_fa_1e12_ev = 5.691e-6;

// Benchmark model couplings.
inline constexpr double g_gamma_ksvz = -0.97;
inline constexpr double g_gamma_dfsz = 0.36;

}  // namespace haloscope::constants
