"""Embedded reference data for 87Rb and the experimental defaults.

Rb-87 numbers follow D. A. Steck, "Rubidium 87 D Line Data" (rev. 2.2.1):
hyperfine splittings, atomic mass and the s-wave scattering length.  All
frequencies are ordinary frequencies in MHz (omega / 2 pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import scipy.constants as sc


@dataclass(frozen=True)
class PhysicalConstants:
    mass: float = 1.443160648e-25  # kg
    h: float = sc.h
    hbar: float = sc.hbar
    c: float = sc.c
    scattering_length: float = 5.31e-9  # m
    epsilon0: float = sc.epsilon_0
    ground_splitting_MHz: float = 6834.682610904
    # F'=0->1, 1->2, 2->3
    excited_splittings_MHz: tuple[float, float, float] = field(
        default=(72.2180, 156.9470, 266.6500)
    )

    def __post_init__(self) -> None:
        scalars = (self.mass, self.h, self.hbar, self.c, self.scattering_length,
                   self.epsilon0, self.ground_splitting_MHz)
        if any(v <= 0 for v in scalars) or any(v <= 0 for v in self.excited_splittings_MHz):
            raise ValueError("physical constants must be strictly positive")
        s = self.excited_splittings_MHz
        if not (s[0] < s[1] < s[2]):
            raise ValueError("excited splittings must increase with F'")


RB87 = PhysicalConstants()

# Experimental values used as defaults throughout the package.
CAVITY_LENGTH = 176e-6  # m
MIRROR_RADIUS = 75e-3  # m
PROBE_WAVELENGTH = 780e-9  # m, D2 line
LOCK_WAVELENGTH = 830e-9  # m, length stabilization / intracavity lattice
TRANSPORT_WAVELENGTH = 852e-9  # m
BIREFRINGENCE_MHz = 1.7
G0_MHz = 10.6
KAPPA_MHz = 1.3
GAMMA_MHz = 3.0
TRANSVERSE_OFFSET_MHz = 18500.0
TRANSVERSE_RATIO = 1.2
G_SIGMA_PLUS_MHz = 14.4
G_SIGMA_MINUS_MHz = 11.3
N_MAIN = 154_000
N_F2 = 2_700
TRAP_FREQUENCIES_HZ = (290.0, 43.0, 277.0)
LATTICE_DEPTH_EREC = 2.4
N_BEC = 220_000
TRANSPORT_DURATION = 0.1  # s
TRANSPORT_DELTA_MAX_HZ = 1670e3
DETECTION_EFFICIENCY = 0.05
DARK_RATE = 60.0  # counts / s
SCAN_SPEED_MHz_PER_MS = 25.0
BIN_TIME = 0.4e-6  # s
AVERAGE_WINDOW = 2e-3  # s
