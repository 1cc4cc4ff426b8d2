"""Angular-momentum algebra and the Rb-87 D2 level scheme.

Angular momenta are accepted as ints, floats or ``Fraction`` and must be
integer or half-integer.  Internally everything is handled as twice the
value so that parity checks are exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator

import numpy as np

from .constants import RB87, PhysicalConstants

J_GROUND = Fraction(1, 2)
J_EXCITED = Fraction(3, 2)
NUCLEAR_SPIN = Fraction(3, 2)

FORWARD_CG = "forward_cg"
LINE_STRENGTH = "line_strength"
CONVENTIONS = (LINE_STRENGTH, FORWARD_CG)


def _twice(x) -> int:
    """Return 2*x as an int, rejecting anything that is not a half-integer."""
    t = Fraction(x) * 2
    if t.denominator != 1:
        raise ValueError(f"{x!r} is not integer or half-integer")
    return int(t)


def _lf(twice_n: int) -> float:
    # log((n)!) for n given as twice its value; n is a non-negative integer here
    return math.lgamma(twice_n // 2 + 1)


def _triangle(a: int, b: int, c: int) -> bool:
    """Triangle rule on doubled momenta, including the integer-perimeter condition."""
    return abs(a - b) <= c <= a + b and (a + b + c) % 2 == 0


def _log_delta(a: int, b: int, c: int) -> float:
    return 0.5 * (_lf(a + b - c) + _lf(a - b + c) + _lf(-a + b + c) - _lf(a + b + c + 2))


def wigner3j(j1, j2, j3, m1, m2, m3) -> float:
    """Wigner 3-j symbol from the Racah sum, evaluated in log space."""
    J = [_twice(j) for j in (j1, j2, j3)]
    M = [_twice(m) for m in (m1, m2, m3)]
    if any(j < 0 for j in J):
        raise ValueError("angular momenta must be non-negative")
    if any((j - m) % 2 for j, m in zip(J, M)):
        raise ValueError("j and m must both be integer or both half-integer")
    if any(abs(m) > j for j, m in zip(J, M)):
        return 0.0
    if sum(M) != 0 or not _triangle(*J):
        return 0.0
    a, b, c = J
    ma, mb, mc = M
    pre = _log_delta(a, b, c) + 0.5 * sum(
        _lf(j + m) + _lf(j - m) for j, m in zip(J, M)
    )
    # summation limits in doubled units
    kmin = max(0, b - c - ma, a - c + mb)
    kmax = min(a + b - c, a - ma, b + mb)
    total = 0.0
    for k in range(kmin, kmax + 1, 2):
        lt = (_lf(k) + _lf(c - b + k + ma) + _lf(c - a + k - mb)
              + _lf(a + b - c - k) + _lf(a - k - ma) + _lf(b - k + mb))
        total += (-1) ** (k // 2) * math.exp(pre - lt)
    phase = (a - b - mc) // 2
    return (-1) ** phase * total


def wigner6j(j1, j2, j3, j4, j5, j6) -> float:
    """Wigner 6-j symbol {j1 j2 j3; j4 j5 j6} from the Racah sum."""
    a, b, c, d, e, f = (_twice(j) for j in (j1, j2, j3, j4, j5, j6))
    if min(a, b, c, d, e, f) < 0:
        raise ValueError("angular momenta must be non-negative")
    triads = ((a, b, c), (a, e, f), (d, b, f), (d, e, c))
    if not all(_triangle(*t) for t in triads):
        return 0.0
    pre = sum(_log_delta(*t) for t in triads)
    lo = [sum(t) for t in triads]
    hi = [a + b + d + e, b + c + e + f, c + a + f + d]
    total = 0.0
    for t in range(max(lo), min(hi) + 1, 2):
        lt = _lf(t + 2) - sum(_lf(t - x) for x in lo) - sum(_lf(x - t) for x in hi)
        total += (-1) ** (t // 2) * math.exp(pre + lt)
    return total


def clebsch_gordan(j1, m1, j2, m2, j, m) -> float:
    """<j1 m1; j2 m2 | j m> in the Condon-Shortley convention."""
    phase = _twice(j1) - _twice(j2) + _twice(m)
    return (-1) ** (phase // 2) * math.sqrt(_twice(j) + 1) * wigner3j(j1, j2, j, m1, m2, -Fraction(m))


class Manifold(enum.Enum):
    GROUND = "5S1/2"
    EXCITED = "5P3/2"


@dataclass(frozen=True, order=True)
class HyperfineState:
    manifold: Manifold
    F: int
    mF: int

    def __post_init__(self) -> None:
        allowed = (1, 2) if self.manifold is Manifold.GROUND else (0, 1, 2, 3)
        if self.F not in allowed:
            raise ValueError(f"F={self.F} does not exist in {self.manifold.value}")
        if abs(self.mF) > self.F:
            raise ValueError(f"|mF|={abs(self.mF)} exceeds F={self.F}")

    @property
    def detuning_MHz(self) -> float:
        return level_detuning(self)

    @property
    def label(self) -> str:
        prime = "'" if self.manifold is Manifold.EXCITED else ""
        return f"|F{prime}={self.F},m={self.mF:+d}>"


def ground(F: int, mF: int) -> HyperfineState:
    return HyperfineState(Manifold.GROUND, F, mF)


def excited(F: int, mF: int) -> HyperfineState:
    return HyperfineState(Manifold.EXCITED, F, mF)


def ground_states() -> list[HyperfineState]:
    """The 8 ground states ordered by (F, mF)."""
    return [ground(F, m) for F in (1, 2) for m in range(-F, F + 1)]


def excited_states() -> list[HyperfineState]:
    """The 16 excited states ordered by (F', mF')."""
    return [excited(F, m) for F in range(4) for m in range(-F, F + 1)]


def _excited_offsets(constants: PhysicalConstants) -> dict[int, float]:
    s01, s12, s23 = constants.excited_splittings_MHz
    return {0: -(s01 + s12), 1: -s12, 2: 0.0, 3: s23}


def level_detuning(state: HyperfineState, constants: PhysicalConstants = RB87) -> float:
    """Level energy in MHz, referenced so that F=1 -> F'=2 sits at zero detuning."""
    if state.manifold is Manifold.GROUND:
        return 0.0 if state.F == 1 else constants.ground_splitting_MHz
    return _excited_offsets(constants)[state.F]


def transition_detuning(g: HyperfineState, e: HyperfineState,
                        constants: PhysicalConstants = RB87) -> float:
    """Probe detuning (MHz) at which the bare transition g -> e is resonant."""
    return level_detuning(e, constants) - level_detuning(g, constants)


@lru_cache(maxsize=None)
def hyperfine_strength(F: int, Fp: int) -> float:
    """Relative strength S_FF' of the D2 hyperfine transition; sums to 1 over F'."""
    six = wigner6j(J_GROUND, J_EXCITED, 1, Fp, F, NUCLEAR_SPIN)
    return (2 * Fp + 1) * (2 * J_GROUND + 1) * six ** 2


@lru_cache(maxsize=None)
def _coefficient(F: int, m: int, Fp: int, mp: int, q: int, convention: str) -> float:
    if mp != m + q or abs(F - Fp) > 1:
        return 0.0
    s = hyperfine_strength(F, Fp)
    cg = clebsch_gordan(F, m, 1, q, Fp, mp)
    if convention == FORWARD_CG:
        return math.sqrt(s) * cg
    # line-strength convention: sqrt((2F+1)/(2F'+1)) <F m; 1 q | F' m'>
    return math.sqrt(s * (2 * F + 1) / (2 * Fp + 1)) * cg


def dipole_coefficient(g: HyperfineState, e: HyperfineState, q: int,
                       convention: str = LINE_STRENGTH) -> float:
    """Dimensionless coupling of the transition g -> e driven by polarization q.

    ``line_strength`` (default) is the absorption matrix element in units of
    the reduced D2 element, normalised so that the total strength out of any
    ground state is one.  ``forward_cg`` uses sqrt(S_FF') <F m; 1 q|F' m'>.
    """
    if g.manifold is not Manifold.GROUND or e.manifold is not Manifold.EXCITED:
        raise ValueError("dipole_coefficient expects (ground, excited) states")
    if q not in (-1, 0, 1):
        raise ValueError(f"q must be -1, 0 or +1, got {q}")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    return _coefficient(g.F, g.mF, e.F, e.mF, q, convention)


def effective_cg(g: HyperfineState, q: int, convention: str = LINE_STRENGTH) -> float:
    """Quadrature sum of the couplings from ``g`` over all F' for polarization q.

    This is the collective coupling seen by the cavity when the normal-mode
    splitting is large compared with the excited hyperfine structure.
    """
    if q not in (-1, 1):
        raise ValueError("the cavity only supports circular polarizations q = +-1")
    total = 0.0
    for Fp in range(4):
        mp = g.mF + q
        if abs(mp) <= Fp:
            total += dipole_coefficient(g, excited(Fp, mp), q, convention) ** 2
    return math.sqrt(total)


@dataclass(frozen=True)
class DipoleEntry:
    ground: HyperfineState
    excited: HyperfineState
    q: int
    c: float

    @property
    def detuning_MHz(self) -> float:
        return transition_detuning(self.ground, self.excited)


@dataclass(frozen=True)
class DipoleTable:
    entries: tuple[DipoleEntry, ...]
    convention: str

    def __iter__(self) -> Iterator[DipoleEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def from_ground(self, g: HyperfineState) -> list[DipoleEntry]:
        return [e for e in self.entries if e.ground == g]

    def as_rows(self) -> list[dict]:
        return [
            {"F": e.ground.F, "mF": e.ground.mF, "Fp": e.excited.F, "mFp": e.excited.mF,
             "q": e.q, "c": e.c, "c_squared": e.c ** 2, "detuning_MHz": e.detuning_MHz}
            for e in self.entries
        ]


def dipole_table(convention: str = LINE_STRENGTH, polarizations=(-1, 0, 1)) -> DipoleTable:
    """All nonzero D2 Zeeman transitions for the requested polarizations."""
    entries = []
    for g in ground_states():
        for e in excited_states():
            for q in polarizations:
                c = dipole_coefficient(g, e, q, convention)
                if c != 0.0:
                    entries.append(DipoleEntry(g, e, q, c))
    return DipoleTable(tuple(entries), convention)


def clebsch_gordan_ratio(g: HyperfineState = ground(1, -1),
                         convention: str = LINE_STRENGTH) -> float:
    """Ratio of effective sigma+ (q=+1) to sigma- (q=-1) couplings from ``g``."""
    return effective_cg(g, +1, convention) / effective_cg(g, -1, convention)


def total_strength(g: HyperfineState, convention: str = LINE_STRENGTH) -> float:
    return float(np.sum([e.c ** 2 for e in dipole_table(convention).from_ground(g)]))
