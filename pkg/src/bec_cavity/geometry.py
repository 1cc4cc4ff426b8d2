"""Cavity mode geometry, cavity-QED figures of merit and conveyor transport."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import constants as k
from .constants import RB87


@dataclass(frozen=True)
class CavityGeometry:
    length: float = k.CAVITY_LENGTH
    mirror_radius: float = k.MIRROR_RADIUS
    probe_wavelength: float = k.PROBE_WAVELENGTH
    lock_wavelength: float = k.LOCK_WAVELENGTH
    birefringence_MHz: float = k.BIREFRINGENCE_MHz
    kappa_MHz: float = k.KAPPA_MHz
    gamma_MHz: float = k.GAMMA_MHz
    transverse_offset_MHz: float = k.TRANSVERSE_OFFSET_MHz
    transverse_ratio: float = k.TRANSVERSE_RATIO

    def __post_init__(self) -> None:
        if not 0 < self.length < 2 * self.mirror_radius:
            raise ValueError("unstable resonator: need 0 < L < 2R")
        if self.kappa_MHz <= 0 or self.gamma_MHz <= 0:
            raise ValueError("kappa and gamma must be positive")
        if self.transverse_offset_MHz <= 0:
            raise ValueError("transverse mode offset must be positive")
        if self.transverse_ratio < 0:
            raise ValueError("transverse coupling ratio must be non-negative")
        if self.birefringence_MHz < 0:
            raise ValueError("birefringent splitting must be non-negative")


@dataclass(frozen=True)
class CavityDerived:
    waist: float  # m
    fsr_MHz: float
    transverse_spacing_MHz: float


def cavity_derived(geom: CavityGeometry) -> CavityDerived:
    """Waist, free spectral range and transverse-mode spacing of a symmetric resonator."""
    L, R, lam = geom.length, geom.mirror_radius, geom.probe_wavelength
    if not 0 < L < 2 * R:
        raise ValueError("unstable resonator: need 0 < L < 2R")
    w0 = math.sqrt(lam / (2 * math.pi) * math.sqrt(L * (2 * R - L)))
    fsr = RB87.c / (2 * L) / 1e6
    spacing = fsr * math.acos(1 - L / R) / math.pi
    return CavityDerived(w0, fsr, spacing)


@dataclass(frozen=True)
class FiguresOfMerit:
    critical_photon_number: float
    cooperativity: float
    recoil_Hz: float


def recoil_frequency(wavelength: float, mass: float = RB87.mass) -> float:
    """E_rec / h = h / (2 m lambda^2), in Hz."""
    return RB87.h / (2 * mass * wavelength ** 2)


def figures_of_merit(g0: float, g_eff: float, N: float, kappa: float, gamma: float,
                     wavelength: float = k.LOCK_WAVELENGTH) -> FiguresOfMerit:
    """n0 = gamma^2/(2 g0^2), C = N g_eff^2/(2 gamma kappa) and the recoil frequency.

    The rates may be given in any common unit; the recoil scale is in Hz.
    """
    if min(g0, g_eff, N, kappa, gamma, wavelength) <= 0:
        raise ValueError("all inputs must be positive")
    return FiguresOfMerit(
        critical_photon_number=gamma ** 2 / (2 * g0 ** 2),
        cooperativity=N * g_eff ** 2 / (2 * gamma * kappa),
        recoil_Hz=recoil_frequency(wavelength),
    )


@dataclass(frozen=True)
class TransportProfile:
    duration: float = k.TRANSPORT_DURATION
    delta_max_Hz: float = k.TRANSPORT_DELTA_MAX_HZ
    wavelength: float = k.TRANSPORT_WAVELENGTH
    samples: int = 1001

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("transport duration must be positive")
        if self.delta_max_Hz < 0:
            raise ValueError("delta_max must be non-negative")
        if self.samples < 2:
            raise ValueError("need at least two samples")


@dataclass(frozen=True)
class TransportKinematics:
    v_max: float
    a_max: float
    distance: float
    t: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    a: np.ndarray
    x: np.ndarray


def transport_kinematics(profile: TransportProfile) -> TransportKinematics:
    """Moving-lattice kinematics for delta(t) = [1 - cos(2 pi t/T)] delta_max / 2."""
    T, dmax, lam = profile.duration, profile.delta_max_Hz, profile.wavelength
    t = np.linspace(0.0, T, profile.samples)
    phase = 2 * np.pi * t / T
    delta = (1 - np.cos(phase)) * dmax / 2
    v = lam * delta / 2
    a = np.pi * lam * dmax / (2 * T) * np.sin(phase)
    x = lam * dmax / 4 * (t - T * np.sin(phase) / (2 * np.pi))
    return TransportKinematics(
        v_max=lam * dmax / 2,
        a_max=np.pi * lam * dmax / (2 * T),
        distance=lam * dmax * T / 4,
        t=t, delta=delta, v=v, a=a, x=x,
    )
