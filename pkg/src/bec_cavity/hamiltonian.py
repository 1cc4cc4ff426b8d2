"""Single-excitation Hamiltonian of the condensate coupled to the cavity.

Basis states are one photon in mode (k, p) with all atoms in their ground
states, or no photon and one atom promoted from ground state i to excited
state j.  Energies are probe detunings in MHz measured from the bare
F=1 -> F'=2 transition.

The interaction carries a global factor -i; multiplying every atomic basis
vector by i removes it without changing the spectrum, so all couplings
below are real in the circular basis.

Coupling normalisation: for each circular channel the dimensionless dipole
coefficients are divided by the effective (quadrature-summed) coefficient of
the reference state |1,-1>.  ``g_plus``/``g_minus`` are therefore the maximum
single-atom couplings of a |1,-1> condensate to the sigma+/sigma- mode, and
atoms in other Zeeman states couple with their relative line strengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import atomic
from . import constants as k
from .atomic import HyperfineState, ground
from .geometry import CavityGeometry
from .gpe import u0_empirical
from .jacobi import eigensolve

CIRCULAR = "circular"
LINEAR = "linear"
PLUS, MINUS = "+", "-"
CHANNEL_Q = {PLUS: +1, MINUS: -1}
REFERENCE_STATE = ground(1, -1)
GROUND_STATES = tuple(atomic.ground_states())
EXCITED_STATES = tuple(atomic.excited_states())
FROM_N = "from-N"


def population_vector(populations: dict[tuple[int, int], float] | Sequence[float]) -> tuple[float, ...]:
    """Populations in ``GROUND_STATES`` order from a {(F, mF): N} map or a sequence."""
    if isinstance(populations, dict):
        out = [0.0] * len(GROUND_STATES)
        for (F, m), n in populations.items():
            out[GROUND_STATES.index(ground(F, m))] = float(n)
        return tuple(out)
    vals = tuple(float(n) for n in populations)
    if len(vals) != len(GROUND_STATES):
        raise ValueError("need one population per ground state (8)")
    return vals


def default_populations() -> tuple[float, ...]:
    return population_vector({(1, -1): k.N_MAIN, (2, -1): k.N_F2})


@dataclass(frozen=True)
class SystemConfig:
    populations: tuple[float, ...] = field(default_factory=default_populations)
    g_plus: float = k.G_SIGMA_PLUS_MHz
    g_minus: float = k.G_SIGMA_MINUS_MHz
    overlap: float | str = field(default_factory=lambda: u0_empirical(k.N_MAIN))
    geometry: CavityGeometry = field(default_factory=CavityGeometry)
    delta_c: float = 0.0
    basis: str = CIRCULAR
    transverse: bool = True
    convention: str = atomic.LINE_STRENGTH

    def __post_init__(self) -> None:
        object.__setattr__(self, "populations", population_vector(self.populations))
        if any(n < 0 for n in self.populations):
            raise ValueError("populations must be non-negative")
        if self.g_plus <= 0 or self.g_minus <= 0:
            raise ValueError("g_plus and g_minus must be positive")
        if self.overlap != FROM_N and not 0 < float(self.overlap) <= 1:
            raise ValueError("overlap U0 must lie in (0, 1]")
        if self.basis not in (CIRCULAR, LINEAR):
            raise ValueError(f"unknown polarization basis {self.basis!r}")
        if self.convention not in atomic.CONVENTIONS:
            raise ValueError(f"unknown dipole convention {self.convention!r}")

    @property
    def total_atoms(self) -> float:
        return float(sum(self.populations))

    @property
    def u0(self) -> float:
        if self.overlap == FROM_N:
            return u0_empirical(max(self.total_atoms, 1.0))
        return float(self.overlap)

    def g(self, channel: str) -> float:
        return self.g_plus if channel == PLUS else self.g_minus

    def population(self, F: int, mF: int) -> float:
        return self.populations[GROUND_STATES.index(ground(F, mF))]

    def with_populations(self, populations) -> "SystemConfig":
        return replace(self, populations=population_vector(populations))


@dataclass(frozen=True)
class PhotonState:
    mode: int  # 0 = TEM00, 1 = effective transverse mode
    pol: str  # "+"/"-" circular, "H"/"V" linear


@dataclass(frozen=True)
class AtomicState:
    ground: HyperfineState
    excited: HyperfineState
    q: int
    population: float


@dataclass(frozen=True)
class ExcitationBasis:
    photons: tuple[PhotonState, ...]
    atoms: tuple[AtomicState, ...]
    basis: str

    @property
    def dimension(self) -> int:
        return len(self.photons) + len(self.atoms)

    def photon_index(self, mode: int, pol: str) -> int:
        return self.photons.index(PhotonState(mode, pol))

    def atom_index(self, g: HyperfineState, e: HyperfineState) -> int:
        for n, a in enumerate(self.atoms):
            if a.ground == g and a.excited == e:
                return len(self.photons) + n
        raise KeyError((g, e))


def normalised_coefficient(g: HyperfineState, e: HyperfineState, q: int,
                           convention: str = atomic.LINE_STRENGTH) -> float:
    """Dipole coefficient relative to the |1,-1> effective coupling in channel q."""
    ref = atomic.effective_cg(REFERENCE_STATE, q, convention)
    return atomic.dipole_coefficient(g, e, q, convention) / ref


def enumerate_basis(config: SystemConfig) -> ExcitationBasis:
    """Photon states first (mode-major), then atomic excitations sorted by (i, j)."""
    pols = (PLUS, MINUS) if config.basis == CIRCULAR else ("H", "V")
    modes = (0, 1) if config.transverse else (0,)
    photons = tuple(PhotonState(m, p) for m in modes for p in pols)
    atoms = []
    for g, n in zip(GROUND_STATES, config.populations):
        if n <= 0:
            continue
        for e in EXCITED_STATES:
            q = e.mF - g.mF
            if q in (-1, 1) and atomic.dipole_coefficient(g, e, q, config.convention) != 0.0:
                atoms.append(AtomicState(g, e, q, n))
    return ExcitationBasis(photons, tuple(atoms), config.basis)


def _coupling_rows(config: SystemConfig, basis: ExcitationBasis) -> np.ndarray:
    """Atom-photon block of H (atoms x photons), before adding diagonal terms."""
    u0 = config.u0
    r = config.geometry.transverse_ratio
    block = np.zeros((len(basis.atoms), len(basis.photons)), dtype=complex)
    for a_i, a in enumerate(basis.atoms):
        channel = PLUS if a.q == +1 else MINUS
        gc = (u0 * config.g(channel) * math.sqrt(a.population)
              * normalised_coefficient(a.ground, a.excited, a.q, config.convention))
        for p_i, ph in enumerate(basis.photons):
            scale = r if ph.mode == 1 else 1.0
            if basis.basis == CIRCULAR:
                if ph.pol == channel:
                    block[a_i, p_i] = gc * scale
            else:
                # a_+ = (a_H - i a_V)/sqrt2, a_- = (a_H + i a_V)/sqrt2
                if ph.pol == "H":
                    amp = 1 / math.sqrt(2)
                else:
                    amp = (-1j if channel == PLUS else 1j) / math.sqrt(2)
                block[a_i, p_i] = gc * scale * amp
    return block


def _static_parts(config: SystemConfig, basis: ExcitationBasis) -> tuple[np.ndarray, np.ndarray]:
    """H at delta_c = 0 and the photon-number projector (coefficient of delta_c)."""
    n_ph = len(basis.photons)
    dim = basis.dimension
    h = np.zeros((dim, dim), dtype=complex)
    proj = np.zeros(dim)
    geom = config.geometry
    for i, ph in enumerate(basis.photons):
        e = geom.transverse_offset_MHz if ph.mode == 1 else 0.0
        if basis.basis == LINEAR:
            e += geom.birefringence_MHz / 2 * (1 if ph.pol == "H" else -1)
        h[i, i] = e
        proj[i] = 1.0
    for n, a in enumerate(basis.atoms):
        h[n_ph + n, n_ph + n] = atomic.transition_detuning(a.ground, a.excited)
    block = _coupling_rows(config, basis)
    h[n_ph:, :n_ph] = block
    h[:n_ph, n_ph:] = block.conj().T
    return h, proj


def build_hamiltonian(config: SystemConfig, basis: ExcitationBasis, delta_c: float | None = None) -> np.ndarray:
    """Hermitian single-excitation Hamiltonian in MHz at cavity detuning ``delta_c``."""
    if basis.basis != config.basis or basis.dimension != enumerate_basis(config).dimension:
        raise ValueError("basis does not belong to this configuration")
    dc = config.delta_c if delta_c is None else delta_c
    h, proj = _static_parts(config, basis)
    return h + np.diag(dc * proj)


def photonic_weights(basis: ExcitationBasis, vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """TEM00 sigma+ and sigma- weights and total transverse-mode weight per eigenvector."""
    amps = {}
    for i, ph in enumerate(basis.photons):
        amps[(ph.mode, ph.pol)] = vecs[i]
    zero = np.zeros(vecs.shape[1:], dtype=complex)

    def circ(mode):
        if basis.basis == CIRCULAR:
            return amps.get((mode, PLUS), zero), amps.get((mode, MINUS), zero)
        hh, vv = amps.get((mode, "H"), zero), amps.get((mode, "V"), zero)
        return (hh - 1j * vv) / math.sqrt(2), (hh + 1j * vv) / math.sqrt(2)

    p0, m0 = circ(0)
    p1, m1 = circ(1)
    return np.abs(p0) ** 2, np.abs(m0) ** 2, np.abs(p1) ** 2 + np.abs(m1) ** 2


def channel_weights(basis: ExcitationBasis, vecs: np.ndarray) -> dict[str, np.ndarray]:
    """Per-channel photonic weight summed over TEM00 and transverse modes."""
    amps = {(ph.mode, ph.pol): vecs[i] for i, ph in enumerate(basis.photons)}
    zero = np.zeros(vecs.shape[1:], dtype=complex)
    out = {PLUS: np.zeros(vecs.shape[1:]), MINUS: np.zeros(vecs.shape[1:])}
    for mode in (0, 1):
        if basis.basis == CIRCULAR:
            p, m = amps.get((mode, PLUS), zero), amps.get((mode, MINUS), zero)
        else:
            hh, vv = amps.get((mode, "H"), zero), amps.get((mode, "V"), zero)
            p, m = (hh - 1j * vv) / math.sqrt(2), (hh + 1j * vv) / math.sqrt(2)
        out[PLUS] = out[PLUS] + np.abs(p) ** 2
        out[MINUS] = out[MINUS] + np.abs(m) ** 2
    return out


@dataclass
class SpectrumBranch:
    branch_id: int
    delta_c: np.ndarray
    delta_p: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    w_transverse: np.ndarray

    @property
    def channel(self) -> str:
        return PLUS if self.w_plus.sum() >= self.w_minus.sum() else MINUS

    @property
    def photonic(self) -> np.ndarray:
        return self.w_plus + self.w_minus + self.w_transverse


@dataclass(frozen=True)
class AvoidedCrossing:
    channel: str
    center_delta_c: float
    center_delta_p: float
    gap: float
    bare_line: float  # probe detuning of the bright F=2 transition in this channel
    shift: float  # center_delta_c - bare_line


@dataclass
class SpectrumResult:
    delta_c: np.ndarray
    eigenvalues: np.ndarray  # (grid, dim), ascending per point
    w_plus: np.ndarray
    w_minus: np.ndarray
    w_transverse: np.ndarray
    branches: list[SpectrumBranch]
    crossings: dict[str, AvoidedCrossing]
    basis: ExcitationBasis


def _solve_point(h0, proj, dc, solver):
    return eigensolve(h0 + np.diag(dc * proj), solver)


def spectrum_sweep(config: SystemConfig, grid: Sequence[float], solver: str = "jacobi",
                   window: tuple[float, float] = (-7500.0, -6000.0)) -> SpectrumResult:
    """Eigenvalues and photonic weights over a sorted grid of cavity detunings.

    Branches are connected point to point by maximal eigenvector overlap
    (assignment problem on |<v_prev|v_next>|^2), so they follow the states
    through avoided crossings rather than the eigenvalue ordering.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty detuning grid")
    if np.any(np.diff(grid) < 0):
        raise ValueError("detuning grid must be sorted")
    basis = enumerate_basis(config)
    h0, proj = _static_parts(config, basis)
    dim = basis.dimension
    evals = np.empty((grid.size, dim))
    wp = np.empty((grid.size, dim))
    wm = np.empty((grid.size, dim))
    wt = np.empty((grid.size, dim))
    track = np.empty((grid.size, dim), dtype=int)  # track[n, b] = eigen-index of branch b
    prev = None
    for n, dc in enumerate(grid):
        w, v = _solve_point(h0, proj, dc, solver)
        evals[n] = w
        wp[n], wm[n], wt[n] = photonic_weights(basis, v)
        if prev is None:
            track[n] = np.arange(dim)
        else:
            overlap = np.abs(prev.conj().T @ v) ** 2
            rows, cols = linear_sum_assignment(-overlap)
            # rows are previous eigen-indices; map branch -> new eigen-index
            mapping = np.empty(dim, dtype=int)
            mapping[rows] = cols
            track[n] = mapping[track[n - 1]]
        prev = v

    branches = []
    idx = np.arange(grid.size)
    for b in range(dim):
        sel = track[:, b]
        branches.append(SpectrumBranch(b, grid.copy(), evals[idx, sel], wp[idx, sel],
                                       wm[idx, sel], wt[idx, sel]))
    result = SpectrumResult(grid, evals, wp, wm, wt, branches, {}, basis)
    result.crossings = find_f2_crossings(config, result, window)
    return result


def bright_f2_line(config: SystemConfig, channel: str) -> float | None:
    """Coupling-weighted mean probe detuning of the F=2 transitions in ``channel``."""
    q = CHANNEL_Q[channel]
    num = den = 0.0
    for g, n in zip(GROUND_STATES, config.populations):
        if g.F != 2 or n <= 0:
            continue
        for e in EXCITED_STATES:
            if e.mF - g.mF != q:
                continue
            c = normalised_coefficient(g, e, q, config.convention)
            num += n * c * c * atomic.transition_detuning(g, e)
            den += n * c * c
    return num / den if den > 0 else None


def branch_crossing_detunings(config: SystemConfig, energy: float) -> tuple[np.ndarray, np.ndarray]:
    """Cavity detunings at which an eigenvalue of ``config`` equals ``energy``.

    Eliminating the atomic block at fixed energy E leaves a photon-space
    condition (E - Delta_c) v = H_eff(E) v with
    H_eff = H_pp + H_pa (E - H_aa)^-1 H_ap, so the admissible Delta_c are the
    eigenvalues of E - H_eff(E).  Returns those detunings and the photon-space
    eigenvectors (columns).
    """
    basis = enumerate_basis(config)
    h, _ = _static_parts(config, basis)
    n_ph = len(basis.photons)
    hpp, hpa, haa = h[:n_ph, :n_ph], h[:n_ph, n_ph:], h[n_ph:, n_ph:]
    heff = hpp + hpa @ np.linalg.solve(energy * np.eye(haa.shape[0]) - haa, hpa.conj().T)
    return np.linalg.eigh(energy * np.eye(n_ph) - heff)


def find_f2_crossings(config: SystemConfig, result: SpectrumResult,
                      window: tuple[float, float]) -> dict[str, AvoidedCrossing]:
    """Locate the F=2 avoided crossing per circular channel.

    The centre is the cavity detuning at which the channel's TEM00 branch of
    the same system without F=2 atoms meets the bright F=2 line.  The gap is
    the smallest separation, near that centre, between the two eigenstates in
    the probe window with the most photonic weight in the channel.
    """
    lo, hi = window
    out = {}
    f1_only = config.with_populations(
        [n if g.F == 1 else 0.0 for g, n in zip(GROUND_STATES, config.populations)])
    basis0 = enumerate_basis(f1_only)
    weights = {PLUS: result.w_plus, MINUS: result.w_minus}
    for channel in (PLUS, MINUS):
        line = bright_f2_line(config, channel)
        if line is None or f1_only.total_atoms <= 0:
            continue
        dcs, vecs = branch_crossing_detunings(f1_only, line)
        cw = channel_weights(basis0, np.vstack([vecs, np.zeros((len(basis0.atoms), vecs.shape[1]))]))
        tem00 = [i for i, ph in enumerate(basis0.photons) if ph.mode == 0]
        w00 = np.sum(np.abs(vecs[tem00]) ** 2, axis=0) * (cw[channel] / np.maximum(cw[PLUS] + cw[MINUS], 1e-300))
        centre = float(dcs[np.argmax(w00)])

        gap, centre_p = np.inf, line
        near = np.flatnonzero(np.abs(result.delta_c - centre) <= 1000.0)
        for n in near:
            lam = result.eigenvalues[n]
            inside = np.flatnonzero((lam >= lo) & (lam <= hi))
            if inside.size < 2:
                continue
            top = inside[np.argsort(weights[channel][n, inside])[::-1][:2]]
            sep = abs(lam[top[0]] - lam[top[1]])
            if sep < gap:
                gap, centre_p = sep, 0.5 * (lam[top[0]] + lam[top[1]])
        out[channel] = AvoidedCrossing(channel, centre, float(centre_p), float(gap),
                                       float(line), centre - float(line))
    return out


def lower_branch_detuning(config: SystemConfig, channel: str = PLUS,
                          solver: str = "jacobi") -> tuple[float, float]:
    """|Delta_p| of the lower polariton at Delta_c = 0: (full diagonalization, closed form).

    The closed form is U0 g sqrt(N) + (U0 r g)^2 N / (2 Delta_t) with N the
    population of the most populated ground state.
    """
    n_dom = max(config.populations)
    if n_dom <= 0:
        raise ValueError("lower branch is undefined without atoms")
    u0 = config.u0
    g = config.g(channel)
    r = config.geometry.transverse_ratio if config.transverse else 0.0
    closed = u0 * g * math.sqrt(n_dom) + (u0 * r * g) ** 2 * n_dom / (2 * config.geometry.transverse_offset_MHz)

    basis = enumerate_basis(config)
    h = build_hamiltonian(config, basis, 0.0)
    w, v = eigensolve(h, solver)
    cw = channel_weights(basis, v)[channel]
    lowest_f1 = min(
        (atomic.transition_detuning(a.ground, a.excited) for a in basis.atoms if a.ground.F == 1),
        default=0.0,
    )
    below = np.flatnonzero(w < lowest_f1)
    if below.size == 0:
        raise ValueError("no resonance below the bare F=1 lines")
    pick = below[np.argmax(cw[below])]
    return float(abs(w[pick])), float(closed)


def closed_form_lower_branch(N, g: float, r: float, delta_t: float, u0=None) -> np.ndarray:
    """Closed-form |Delta_p|(N) with U0(N) from the empirical law unless ``u0`` is given."""
    N = np.asarray(N, dtype=float)
    if u0 is None:
        u = np.vectorize(u0_empirical)(N)
    else:
        u = np.broadcast_to(np.asarray(u0, dtype=float), N.shape)
    return u * g * np.sqrt(N) + (u * r * g) ** 2 * N / (2 * delta_t)


def tavis_cummings_matrix(couplings: Sequence[float], populations: Sequence[float],
                          delta_c: float = 0.0, delta_a: float = 0.0) -> np.ndarray:
    """One cavity mode coupled to M degenerate two-level transitions.

    Basis: the photon, then one collective excitation per transition i with
    coupling g_i sqrt(N_i).  The nonzero eigenvalues at delta_c = delta_a = 0
    are +-sqrt(sum_i N_i g_i^2).
    """
    g = np.asarray(couplings, dtype=float)
    n = np.asarray(populations, dtype=float)
    if g.shape != n.shape or g.ndim != 1:
        raise ValueError("need one coupling per population")
    if np.any(n < 0):
        raise ValueError("populations must be non-negative")
    m = g.size
    h = np.zeros((m + 1, m + 1))
    h[0, 0] = delta_c
    h[1:, 1:] = np.eye(m) * delta_a
    h[0, 1:] = h[1:, 0] = g * np.sqrt(n)
    return h
