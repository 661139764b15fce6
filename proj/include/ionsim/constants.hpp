#pragma once

#include <cmath>

#include "ionsim/error.hpp"

namespace ionsim {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPlanck = 6.62607015e-34;     // J s

/// CODATA values plus the 40Ca+ single-ion mass. All SI.
struct PhysicalConstants {
  double electron_charge = 1.602176634e-19;      // C
  double vacuum_permittivity = 8.8541878128e-12; // F/m
  double hbar = 1.054571817e-34;                 // J s
  double boltzmann = 1.380649e-23;               // J/K
  double ion_mass = 39.9625909 * 1.66053906660e-27; // kg
  double bohr_magneton = 9.2740100783e-24;       // J/T

  // e^2/(4 pi eps0), the Coulomb energy scale numerator
  double coulomb() const {
    return electron_charge * electron_charge /
           (2.0 * kTwoPi * vacuum_permittivity);
  }

  void validate() const {
    if (electron_charge <= 0 || vacuum_permittivity <= 0 || hbar <= 0 ||
        boltzmann <= 0 || ion_mass <= 0 || bohr_magneton <= 0) {
      throw Error(ErrorCode::InvalidInput,
                  "physical constants must all be strictly positive");
    }
  }
};

inline double deg_to_rad(double deg) { return deg * kTwoPi / 360.0; }

}  // namespace ionsim
