"""Unit conventions and physical constants.

Interface units are nm (length), Gauss (field), kHz (cycles) and
microseconds (time).  Internally all angular frequencies are rad/ms, so
``omega = TWO_PI * f_khz`` and a phase is ``omega * t_us / US_PER_MS``.
Every conversion factor lives here; no other module hardcodes units.
"""

import math

TWO_PI = 2.0 * math.pi

# Diamond lattice: conventional cubic cell, 8 carbon atoms per cell.
LATTICE_CONSTANT_NM = 0.3567
ATOMS_PER_CELL = 8

# Natural 13C isotopic abundance.
NATURAL_ABUNDANCE_13C = 0.011

# Gyromagnetic ratios, cycles per ms per Gauss (== kHz/G).
GAMMA_13C_KHZ_PER_G = 1.0715
GAMMA_E_KHZ_PER_G = 2.8e3

# SI building blocks for the dipolar prefactors.
MU0_OVER_4PI_T_M_PER_A = 1.0e-7
HBAR_J_S = 1.054571817e-34

US_PER_MS = 1.0e3


def gamma_rad_per_s_per_t(gamma_khz_per_g: float) -> float:
    """Convert a gyromagnetic ratio from kHz/G to rad s^-1 T^-1."""
    # 1 kHz/G = 2*pi * 1e3 Hz/G * 1e4 G/T
    return TWO_PI * 1.0e7 * gamma_khz_per_g


def dipolar_prefactor_rad_ms_nm3(gamma_a_khz_per_g: float,
                                 gamma_b_khz_per_g: float) -> float:
    """(mu0/4pi) * hbar * gamma_a * gamma_b in rad/ms * nm^3.

    Dividing by r^3 (nm^3) gives the dipole-dipole angular-frequency
    scale at separation r.
    """
    w_rad_s_m3 = (MU0_OVER_4PI_T_M_PER_A * HBAR_J_S
                  * gamma_rad_per_s_per_t(gamma_a_khz_per_g)
                  * gamma_rad_per_s_per_t(gamma_b_khz_per_g))
    # m^3 -> nm^3 and 1/s -> 1/ms
    return w_rad_s_m3 * 1.0e27 / US_PER_MS


# Electron-nuclear point-dipole scale: ~124.9 rad/ms nm^3 (19.9 kHz at 1 nm).
HYPERFINE_PREFACTOR_RAD_MS_NM3 = dipolar_prefactor_rad_ms_nm3(
    GAMMA_E_KHZ_PER_G, GAMMA_13C_KHZ_PER_G)

# Homonuclear 13C-13C scale: ~0.0478 rad/ms nm^3 (7.6 Hz at 1 nm).
HOMONUCLEAR_PREFACTOR_RAD_MS_NM3 = dipolar_prefactor_rad_ms_nm3(
    GAMMA_13C_KHZ_PER_G, GAMMA_13C_KHZ_PER_G)
