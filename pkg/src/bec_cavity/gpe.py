"""Condensate ground state and its overlap with the TEM00 cavity mode.

Coordinates: x is the cavity axis (also the axis of the 830 nm locking
lattice and the 780 nm probe standing wave), y the weak horizontal trap axis,
z the remaining tight axis.  Lengths are in micrometres and energies are
given as frequencies (E/h, Hz) inside the solver.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import constants as k
from .constants import RB87
from .errors import NumericError
from .geometry import CavityGeometry, cavity_derived, recoil_frequency

log = logging.getLogger(__name__)

UM = 1e-6


def u0_empirical(N: float) -> float:
    """Closed-form overlap U0(N) = sqrt(0.5) (1 - 0.0017 N^0.34)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    u = math.sqrt(0.5) * (1 - 0.0017 * N ** 0.34)
    if u <= 0:
        raise ValueError(f"U0(N) formula is not valid at N={N:g}")
    return u


def _default_waist() -> float:
    return cavity_derived(CavityGeometry()).waist


@dataclass(frozen=True)
class TrapConfig:
    frequencies_Hz: tuple[float, float, float] = k.TRAP_FREQUENCIES_HZ
    lattice_depth_Erec: float = k.LATTICE_DEPTH_EREC
    lattice_wavelength: float = k.LOCK_WAVELENGTH
    probe_waist: float = field(default_factory=_default_waist)
    probe_wavelength: float = k.PROBE_WAVELENGTH
    N: float = k.N_BEC
    scattering_length: float = RB87.scattering_length
    mass: float = RB87.mass

    def __post_init__(self) -> None:
        if len(self.frequencies_Hz) != 3 or min(self.frequencies_Hz) <= 0:
            raise ValueError("trap frequencies must be three positive numbers")
        if self.lattice_depth_Erec < 0:
            raise ValueError("lattice depth must be non-negative")
        if self.N <= 0:
            raise ValueError("atom number must be positive")
        if self.scattering_length < 0:
            raise ValueError("only repulsive or vanishing interactions are supported")
        if self.probe_waist <= 0 or self.lattice_wavelength <= 0:
            raise ValueError("waist and wavelengths must be positive")

    @property
    def erec_Hz(self) -> float:
        return recoil_frequency(self.lattice_wavelength, self.mass)

    @property
    def coupling_Hz_um3(self) -> float:
        """N g / h in Hz um^3 with g = 4 pi hbar^2 a / m."""
        return 2 * RB87.hbar * self.scattering_length / self.mass * 1e18 * self.N

    def thomas_fermi_mu_Hz(self) -> float:
        """(15 N a / a_ho)^(2/5) hbar omega_bar / 2, as a frequency."""
        fbar = float(np.prod(self.frequencies_Hz)) ** (1 / 3)
        a_ho = math.sqrt(RB87.hbar / (self.mass * 2 * math.pi * fbar))
        return (15 * self.N * self.scattering_length / a_ho) ** 0.4 * fbar / 2


@dataclass(frozen=True)
class GridSpec:
    """Points per axis and the rule for the box size.

    Unless ``half_widths`` (um, None entries meaning automatic) are given, each half-width is
    ``tf_radii`` Thomas-Fermi radii of the lattice-free estimate, but at
    least ``min_oscillator_lengths`` harmonic-oscillator lengths.  Along the
    lattice axis the spacing is rounded so that an integer number of points
    falls on one lattice wavelength, and at least
    ``min_points_per_wavelength`` are required.
    """

    points: tuple[int, int, int] = (64, 128, 64)
    tf_radii: float = 2.0
    min_oscillator_lengths: float = 6.0
    min_points_per_wavelength: int = 4
    half_widths: tuple[float | None, float | None, float | None] | None = None


@dataclass
class CondensateSolution:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]  # um
    density: np.ndarray  # |psi|^2 in um^-3, integrates to 1
    mu_Hz: float
    energy_Hz: float
    kinetic_Hz: float
    potential_Hz: float
    interaction_Hz: float
    iterations: int
    converged: bool
    mu_history: list[float]
    energy_history: list[float]
    trap: TrapConfig | None = None
    stage_starts: list[int] = field(default_factory=list)  # history index where each dt stage begins

    @property
    def cell_volume(self) -> float:
        return float(np.prod([a[1] - a[0] for a in self.axes]))

    @property
    def grid_points(self) -> tuple[int, ...]:
        return self.density.shape

    def mu_over_erec(self) -> float:
        if self.trap is None:
            raise ValueError("solution carries no trap configuration")
        return self.mu_Hz / self.trap.erec_Hz


def _axes(trap: TrapConfig, grid: GridSpec) -> tuple[np.ndarray, ...]:
    mu_tf = trap.thomas_fermi_mu_Hz() if trap.scattering_length > 0 else 0.0
    if len(grid.points) != 3:
        raise ValueError("grid needs three point counts")
    axes = []
    for i, (f, n) in enumerate(zip(trap.frequencies_Hz, grid.points)):
        if n < 8 or n % 2:
            raise ValueError("grid points per axis must be even and >= 8")
        w = 2 * math.pi * f
        if grid.half_widths is not None and grid.half_widths[i] is not None:
            half = float(grid.half_widths[i])
        else:
            r_tf = math.sqrt(2 * RB87.h * mu_tf / (trap.mass * w ** 2)) / UM
            a_ho = math.sqrt(RB87.hbar / (trap.mass * w)) / UM
            half = max(grid.tf_radii * r_tf, grid.min_oscillator_lengths * a_ho)
        dx = 2 * half / n
        if i == 0 and trap.lattice_depth_Erec > 0:
            lam = trap.lattice_wavelength / UM
            per = lam / dx
            if per < grid.min_points_per_wavelength * (1 - 1e-9):
                raise ValueError(
                    f"grid too coarse along the lattice axis: {per:.2f} points per "
                    f"lattice wavelength (< {grid.min_points_per_wavelength}); increase points[0]")
            # commensurate spacing: an integer (even) number of points per wavelength
            m = max(2 * math.floor(per / 2 + 1e-9), grid.min_points_per_wavelength)
            dx = lam / m
        axes.append((np.arange(n) - n // 2) * dx)
    return tuple(axes)


def _potential(trap: TrapConfig, axes) -> np.ndarray:
    x, y, z = np.meshgrid(*axes, indexing="ij", sparse=True)
    v = np.zeros(tuple(a.size for a in axes))
    for c, f in zip((x, y, z), trap.frequencies_Hz):
        v = v + trap.mass * (2 * math.pi * f) ** 2 * (c * UM) ** 2 / (2 * RB87.h)
    if trap.lattice_depth_Erec > 0:
        ks = 2 * math.pi / (trap.lattice_wavelength / UM)
        v = v + trap.lattice_depth_Erec * trap.erec_Hz * np.sin(ks * x) ** 2
    return v


def _kinetic_symbol(trap: TrapConfig, axes) -> np.ndarray:
    """hbar k^2 / (4 pi m) in Hz on the rfftn frequency grid (k in 1/um)."""
    ks = [2 * math.pi * sfft.fftfreq(a.size, d=a[1] - a[0]) for a in axes[:-1]]
    ks.append(2 * math.pi * sfft.rfftfreq(axes[-1].size, d=axes[-1][1] - axes[-1][0]))
    kx, ky, kz = np.meshgrid(*ks, indexing="ij", sparse=True)
    return RB87.hbar * 1e12 / (4 * math.pi * trap.mass) * (kx ** 2 + ky ** 2 + kz ** 2)


def _energies(psi, v, tk, g, dv):
    """(kinetic, potential, interaction) energies per particle in Hz."""
    shape = psi.shape
    phik = sfft.rfftn(psi)
    # Parseval for the half spectrum: double every column except k=0 (and Nyquist)
    wts = np.full(phik.shape[-1], 2.0)
    wts[0] = 1.0
    if shape[-1] % 2 == 0:
        wts[-1] = 1.0
    kin = float(np.sum(wts * tk * np.abs(phik) ** 2)) / psi.size * dv
    dens = psi * psi
    pot = float(np.sum(v * dens)) * dv
    inter = 0.5 * g * float(np.sum(dens * dens)) * dv
    return kin, pot, inter


def solve_ground_state(trap: TrapConfig, grid: GridSpec = GridSpec(), dt: float = 2e-5,
                       refinements: int = 1, tol: float = 1e-9, check_every: int = 50,
                       max_steps: int = 100_000, stage_tol: float = 1e-7) -> CondensateSolution:
    """Imaginary-time split-step ground state of the 3D Gross-Pitaevskii equation.

    Strang splitting with the kinetic step applied in Fourier space and the
    potential plus mean-field term applied pointwise, renormalising after
    every step.  The time step is quartered ``refinements`` times; each stage
    runs until mu changes by less than ``stage_tol`` (relative) over
    ``check_every`` steps, the last one until it changes by less than ``tol``.
    Strang splitting carries an O(dt^2) bias in mu (about 1% at dt = 5e-6 s
    for the default trap); the refinement ladder trades runtime against it.
    Stable imaginary-time propagation needs 2*pi*mu*dt well below one.
    """
    axes = _axes(trap, grid)
    v = _potential(trap, axes)
    tk = _kinetic_symbol(trap, axes)
    g = trap.coupling_Hz_um3
    dv = float(np.prod([a[1] - a[0] for a in axes]))
    shape = v.shape

    # Thomas-Fermi start (Gaussian when non-interacting)
    if g > 0:
        mu0 = trap.thomas_fermi_mu_Hz()
        psi = np.sqrt(np.clip(mu0 - v, 0, None) / g)
    else:
        psi = np.zeros(shape)
    x, y, z = np.meshgrid(*axes, indexing="ij", sparse=True)
    gauss = np.exp(-sum(
        trap.mass * 2 * math.pi * f * (c * UM) ** 2 / (2 * RB87.hbar)
        for c, f in zip((x, y, z), trap.frequencies_Hz)))
    psi = psi + 1e-3 * gauss * (psi.max() if psi.max() > 0 else 1.0)
    psi /= math.sqrt(np.sum(psi * psi) * dv)

    mu_hist: list[float] = []
    e_hist: list[float] = []
    steps = 0
    converged = False
    stage_dt = dt
    stage_starts: list[int] = []
    for stage in range(refinements + 1):
        goal = tol if stage == refinements else max(tol, stage_tol)
        stage_starts.append(len(mu_hist))
        kin_prop = np.exp(-2 * math.pi * tk * stage_dt)
        half = -math.pi * stage_dt  # exp(-2 pi V dt / 2)
        last_mu = None
        stage_done = False
        while steps < max_steps:
            for _ in range(check_every):
                psi *= np.exp(half * (v + g * psi * psi))
                psi = sfft.irfftn(kin_prop * sfft.rfftn(psi), s=shape)
                # the mean-field term must see the normalised density, otherwise the
                # norm decay within the step biases mu at first order in dt
                psi /= math.sqrt(np.sum(psi * psi) * dv)
                psi *= np.exp(half * (v + g * psi * psi))
                psi /= math.sqrt(np.sum(psi * psi) * dv)
            steps += check_every
            kin, pot, inter = _energies(psi, v, tk, g, dv)
            mu = kin + pot + 2 * inter
            mu_hist.append(mu)
            e_hist.append(kin + pot + inter)
            if last_mu is not None and abs(mu - last_mu) < goal * abs(mu):
                stage_done = True
                break
            last_mu = mu
        if not stage_done:
            raise NumericError(
                f"imaginary-time evolution did not converge in {max_steps} steps "
                f"(dt={stage_dt:.3g} s, last mu={mu_hist[-1]:.6g} Hz, "
                f"last relative change={abs(mu_hist[-1] - mu_hist[-2]) / abs(mu_hist[-1]):.3g})")
        log.debug("stage dt=%.3g converged after %d steps, mu=%.6f Hz", stage_dt, steps, mu_hist[-1])
        stage_dt /= 4
    converged = True

    kin, pot, inter = _energies(psi, v, tk, g, dv)
    return CondensateSolution(
        axes=axes, density=psi * psi, mu_Hz=kin + pot + 2 * inter,
        energy_Hz=kin + pot + inter, kinetic_Hz=kin, potential_Hz=pot,
        interaction_Hz=inter, iterations=steps, converged=converged,
        mu_history=mu_hist, energy_history=e_hist, trap=trap,
        stage_starts=stage_starts,
    )


def overlap_factor(sol: CondensateSolution, waist: float, axis: str = "x",
                   offset: tuple[float, float] = (0.0, 0.0)) -> float:
    """U0 = sqrt( 1/2 * integral |psi|^2 exp(-2 rho^2 / w^2) dV ).

    ``rho`` is the distance from the mode axis, which runs along ``axis`` and
    is displaced transversally by ``offset`` (metres, in the order of the two
    remaining axes).  The 1/2 is the axial average of the probe standing wave.
    """
    names = ("x", "y", "z")
    if axis not in names:
        raise ValueError(f"mode axis must be one of {names}, got {axis!r}")
    a = names.index(axis)
    others = [i for i in range(3) if i != a]
    w = waist / UM
    grids = np.meshgrid(*sol.axes, indexing="ij", sparse=True)
    rho2 = sum((grids[i] - off / UM) ** 2 for i, off in zip(others, offset))
    envelope = np.exp(-2 * rho2 / w ** 2)
    transverse = float(np.sum(sol.density * envelope)) * sol.cell_volume
    return math.sqrt(0.5 * transverse)


def overlap_sweep(Ns, trap: TrapConfig = TrapConfig(), grid: GridSpec = GridSpec(),
                  **solver_kw) -> list[tuple[float, float, float]]:
    """(N, U0 from the solver, U0 from the empirical law) for each atom number."""
    from dataclasses import replace

    rows = []
    for N in Ns:
        sol = solve_ground_state(replace(trap, N=float(N)), grid, **solver_kw)
        rows.append((float(N), overlap_factor(sol, trap.probe_waist), u0_empirical(N)))
    return rows
