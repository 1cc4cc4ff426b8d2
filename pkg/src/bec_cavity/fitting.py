"""Bounded Levenberg-Marquardt least squares and the two physics fits.

``fit_sqrt_law`` fits the lower-branch detuning versus atom number per
circular channel; ``fit_spectrum`` fits ground-state populations and the
transverse coupling ratio to measured (Delta_c, Delta_p, channel) points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import hamiltonian as ham
from .errors import FitError
from .gpe import u0_empirical
from .jacobi import eigensolve

log = logging.getLogger(__name__)

PURE_SQRT = "pure_sqrt"
FULL_FORMULA = "full_formula"


@dataclass
class FitProblem:
    """A weighted least-squares problem.

    ``residuals(x)`` returns the weighted residual vector; the objective is
    half its squared norm.  Bounds are enforced by projection.
    """

    residuals: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    names: Sequence[str]
    lower: Sequence[float] | None = None
    upper: Sequence[float] | None = None
    gtol: float = 1e-10
    xtol: float = 1e-12
    ftol: float = 1e-14
    max_iter: int = 200
    label: str = "fit"

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.x0.size
        if len(self.names) != n:
            raise ValueError("one name per parameter required")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise ValueError("initial values must lie within the bounds")


@dataclass
class FitResult:
    names: tuple[str, ...]
    x: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    initial_residual_norm: float
    iterations: int
    converged: bool
    message: str
    residuals: np.ndarray
    jacobian: np.ndarray
    singular: bool = False
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.x[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.x)}


def _evaluate(problem: FitProblem, x: np.ndarray) -> np.ndarray:
    try:
        r = np.asarray(problem.residuals(x), dtype=float)
    except FitError:
        raise
    except Exception as exc:  # surface the parameter point that failed
        pars = ", ".join(f"{n}={v:.6g}" for n, v in zip(problem.names, x))
        raise FitError(f"{problem.label}: residual evaluation failed at {pars}: {exc}") from exc
    if r.ndim != 1 or not np.all(np.isfinite(r)):
        pars = ", ".join(f"{n}={v:.6g}" for n, v in zip(problem.names, x))
        raise FitError(f"{problem.label}: non-finite residuals at {pars}")
    return r


def jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, r0: np.ndarray | None = None,
             lower=None, upper=None, method: str = "forward") -> np.ndarray:
    """Finite-difference Jacobian; steps are flipped to stay inside the bounds."""
    x = np.asarray(x, dtype=float)
    lower = np.full(x.size, -np.inf) if lower is None else lower
    upper = np.full(x.size, np.inf) if upper is None else upper
    if r0 is None:
        r0 = fun(x)
    eps = np.finfo(float).eps
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        if method == "central":
            h = eps ** (1 / 3) * max(abs(x[j]), 1.0)
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            jac[:, j] = (fun(xp) - fun(xm)) / (2 * h)
            continue
        h = math.sqrt(eps) * max(abs(x[j]), 1.0)
        if x[j] + h > upper[j]:
            h = -h
        xh = x.copy()
        xh[j] += h
        h = xh[j] - x[j]  # exactly representable step
        jac[:, j] = (fun(xh) - r0) / h
    return jac


def least_squares(problem: FitProblem) -> FitResult:
    """Levenberg-Marquardt with Marquardt scaling and projected steps.

    Trial steps that do not lower the objective are rejected and the damping
    raised, so the accepted objective never increases.  Standard errors come
    from s^2 (J^T J)^-1 with s^2 the residual variance per degree of freedom.
    """
    lo, hi = problem.lower, problem.upper
    x = np.clip(problem.x0.copy(), lo, hi)
    fun = lambda p: _evaluate(problem, p)  # noqa: E731
    r = fun(x)
    cost = 0.5 * float(r @ r)
    initial = math.sqrt(2 * cost)
    n = x.size
    if r.size < n:
        raise FitError(f"{problem.label}: {r.size} residuals for {n} parameters")
    jac = jacobian(fun, x, r, lo, hi)
    lam = 1e-3
    converged, singular, message = False, False, "maximum iterations reached"
    it = 0
    while it < problem.max_iter:
        it += 1
        jtj = jac.T @ jac
        grad = jac.T @ r
        colnorm = np.sqrt(np.diag(jtj))
        rnorm = math.sqrt(2 * cost)
        if rnorm == 0.0:
            converged, message = True, "exact fit"
            break
        scaled = np.abs(grad) / np.where(colnorm > 0, colnorm * rnorm, np.inf)
        if np.all(scaled <= problem.gtol):
            converged, message = True, "gradient tolerance"
            break
        if np.any(colnorm == 0):
            singular = True
        d = np.maximum(np.diag(jtj), 1e-12 * max(np.max(np.diag(jtj)), 1e-300))
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(d), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = np.clip(x + step, lo, hi)
            r_new = fun(x_new)
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                break
            lam *= 4
        if not accepted:
            converged, message = True, "no further decrease (step tolerance)"
            break
        dx = x_new - x
        rel_drop = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 3, 1e-12)
        if np.linalg.norm(dx) <= problem.xtol * (np.linalg.norm(x) + problem.xtol):
            converged, message = True, "step tolerance"
            jac = jacobian(fun, x, r, lo, hi)
            break
        jac = jacobian(fun, x, r, lo, hi)
        if rel_drop < problem.ftol:
            converged, message = True, "objective tolerance"
            break

    jtj = jac.T @ jac
    dof = max(r.size - n, 1)
    s2 = 2 * cost / dof
    if np.linalg.matrix_rank(jtj) < n:
        singular = True
        cov = np.linalg.pinv(jtj)
    else:
        cov = np.linalg.inv(jtj)
    stderr = np.sqrt(np.clip(np.diag(cov) * s2, 0, None))
    if singular:
        message += "; singular normal matrix"
    return FitResult(tuple(problem.names), x, stderr, math.sqrt(2 * cost), initial, it,
                     converged, message, r, jac, singular)


def curve_problem(x, y, model: Callable[[np.ndarray, np.ndarray], np.ndarray], p0, names,
                  sigma=None, **kw) -> FitProblem:
    """FitProblem for y ~ model(params, x) with optional per-point sigma."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be positive and finite")
    return FitProblem(lambda p: w * (model(p, x) - y), p0, names, **kw)


# --- lower-branch law -------------------------------------------------------

def sqrt_law_model(mode: str, r: float, delta_t: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    if mode == PURE_SQRT:
        return lambda p, N: p[0] * np.sqrt(N)
    if mode == FULL_FORMULA:
        def full(p, N):
            u = np.array([u0_empirical(n) for n in N])
            return u * p[0] * np.sqrt(N) + (u * r * p[0]) ** 2 * N / (2 * delta_t)
        return full
    raise ValueError(f"unknown sqrt-law mode {mode!r}")


def fit_sqrt_law(data: Sequence[tuple[float, float, str]], mode: str = FULL_FORMULA,
                 r: float = 1.2, delta_t: float = 18500.0) -> dict[str, FitResult]:
    """Fit |Delta_p|(N) separately per channel.

    ``pure_sqrt`` fits A sqrt(N); ``full_formula`` fits
    U0(N) g sqrt(N) + (U0(N) r g)^2 N / (2 Delta_t) for g with r, Delta_t fixed.
    """
    sqrt_law_model(mode, r, delta_t)  # validates mode
    if delta_t <= 0:
        raise ValueError("transverse offset must be positive")
    out = {}
    channels = sorted({row[2] for row in data})
    for ch in channels:
        rows = [(float(n), abs(float(d))) for n, d, c in data if c == ch]
        N = np.array([n for n, _ in rows])
        y = np.array([d for _, d in rows])
        if N.size < 3:
            raise FitError(f"channel {ch}: need at least 3 points, got {N.size}")
        if np.any(N <= 0):
            raise FitError(f"channel {ch}: atom numbers must be positive")
        if np.ptp(N) == 0:
            raise FitError(f"channel {ch}: degenerate atom-number range (all N equal)")
        a0 = float(np.sum(y * np.sqrt(N)) / np.sum(N))
        name = "A" if mode == PURE_SQRT else "g"
        if mode == FULL_FORMULA:
            a0 /= float(np.mean([u0_empirical(n) for n in N]))
        model = sqrt_law_model(mode, r, delta_t)
        prob = curve_problem(N, y, model, [a0], [name], lower=[0.0], label=f"sqrt law {ch}")
        out[ch] = least_squares(prob)
    return out


# --- full spectrum ----------------------------------------------------------

@dataclass(frozen=True)
class SpectrumPoint:
    delta_c: float
    delta_p: float
    channel: str


def model_resonances(config: ham.SystemConfig, delta_c: float, channel: str,
                     min_weight: float = 0.02, solver: str = "lapack") -> np.ndarray:
    """Eigenvalues at ``delta_c`` whose photonic weight in ``channel`` is at least ``min_weight``
    and exceeds that of the other channel."""
    basis = ham.enumerate_basis(config)
    w, v = eigensolve(ham.build_hamiltonian(config, basis, delta_c), solver)
    cw = ham.channel_weights(basis, v)
    other = ham.MINUS if channel == ham.PLUS else ham.PLUS
    keep = (cw[channel] >= min_weight) & (cw[channel] >= cw[other])
    return w[keep]


def _model_lines(config, delta_cs, min_weight, solver):
    """{delta_c: {channel: eigenvalues}} for the unique cavity detunings."""
    basis = ham.enumerate_basis(config)
    h0, proj = ham._static_parts(config, basis)
    out = {}
    for dc in delta_cs:
        w, v = eigensolve(h0 + np.diag(dc * proj), solver)
        cw = ham.channel_weights(basis, v)
        out[dc] = {
            ham.PLUS: w[(cw[ham.PLUS] >= min_weight) & (cw[ham.PLUS] >= cw[ham.MINUS])],
            ham.MINUS: w[(cw[ham.MINUS] >= min_weight) & (cw[ham.MINUS] > cw[ham.PLUS])],
        }
    return out


@dataclass
class SpectrumFit:
    result: FitResult
    config: ham.SystemConfig
    populations: dict[tuple[int, int], float]
    population_errors: dict[tuple[int, int], float]
    r: float
    r_error: float
    excluded: list[int]
    weights: np.ndarray
    residuals_MHz: np.ndarray
    passes: int

    @property
    def f2_fraction(self) -> float:
        tot = sum(self.populations.values())
        return sum(n for (F, _), n in self.populations.items() if F == 2) / tot if tot else 0.0


def fit_spectrum(measured: Sequence[SpectrumPoint | tuple], base: ham.SystemConfig,
                 free_states: Sequence[tuple[int, int]] | None = None, fit_r: bool = True,
                 noise_MHz: float = 25.0, min_weight: float = 0.02, solver: str = "lapack",
                 max_passes: int = 3, initial: dict | None = None) -> SpectrumFit:
    """Fit populations (in log space) and the transverse ratio r to spectrum points.

    Each datum is compared with the nearest model resonance of its channel.
    Data with a second model resonance within 2 x ``noise_MHz`` are
    down-weighted by 1/2; data with no model resonance in the channel are
    excluded and reported.  The association is fixed during one
    optimisation pass and re-derived at the pass result until it no longer
    changes.  ``initial`` overrides starting values ({(F, m): N, "r": r}).
    """
    pts = [p if isinstance(p, SpectrumPoint) else SpectrumPoint(float(p[0]), float(p[1]), str(p[2]))
           for p in measured]
    if not pts:
        raise FitError("no spectrum points")
    for p in pts:
        if p.channel not in (ham.PLUS, ham.MINUS):
            raise FitError(f"unknown channel {p.channel!r}")
    if free_states is None:
        free_states = [(g.F, g.mF) for g, n in zip(ham.GROUND_STATES, base.populations) if n > 0]
    free_states = [tuple(s) for s in free_states]
    if not free_states:
        raise FitError("no free populations")
    initial = dict(initial or {})
    start = [math.log(max(initial.get(s, base.population(*s)), 1.0)) for s in free_states]
    names = [f"logN_{F}_{m}" for F, m in free_states]
    lower = [0.0] * len(free_states)
    upper = [math.log(1e8)] * len(free_states)
    r0 = initial.get("r", base.geometry.transverse_ratio)
    if fit_r:
        if not base.transverse:
            raise FitError("fitting r requires the transverse mode")
        start.append(float(r0))
        names.append("r")
        lower.append(0.0)
        upper.append(5.0)

    dcs = sorted({p.delta_c for p in pts})

    def config_for(x):
        pops = dict(zip(ham.GROUND_STATES, base.populations))
        for (F, m), lv in zip(free_states, x):
            pops[ham.ground(F, m)] = math.exp(lv)
        cfg = base.with_populations([pops[g] for g in ham.GROUND_STATES])
        if fit_r:
            cfg = replace(cfg, geometry=replace(cfg.geometry, transverse_ratio=float(x[-1])))
        return cfg

    def associate(x):
        lines = _model_lines(config_for(x), dcs, min_weight, solver)
        w = np.ones(len(pts))
        excluded = []
        for i, p in enumerate(pts):
            cand = lines[p.delta_c][p.channel]
            if cand.size == 0:
                w[i] = 0.0
                excluded.append(i)
                continue
            dist = np.sort(np.abs(cand - p.delta_p))
            if dist.size > 1 and dist[1] - dist[0] < 2 * noise_MHz:
                w[i] = 0.5
        return w, excluded

    def residual_MHz(x):
        lines = _model_lines(config_for(x), dcs, min_weight, solver)
        res = np.zeros(len(pts))
        for i, p in enumerate(pts):
            cand = lines[p.delta_c][p.channel]
            if cand.size:
                j = np.argmin(np.abs(cand - p.delta_p))
                res[i] = p.delta_p - cand[j]
        return res

    x = np.array(start)
    weights, excluded = associate(x)
    result = None
    passes = 0
    for passes in range(1, max_passes + 1):
        wts = weights.copy()
        prob = FitProblem(lambda p, wts=wts: wts * residual_MHz(p) / noise_MHz, x, names, lower, upper,
                          gtol=1e-8, xtol=1e-10, max_iter=100, label="spectrum fit")
        result = least_squares(prob)
        x = result.x
        new_w, new_ex = associate(x)
        if np.array_equal(new_w, weights):
            break
        weights, excluded = new_w, new_ex
    if len(excluded) == len(pts):
        raise FitError("no datum has a model resonance in its channel")
    if excluded:
        log.info("excluded %d points without a model resonance in their channel", len(excluded))

    perr = {s: math.exp(v) * e for s, v, e in zip(free_states, result.x, result.stderr)}
    r_fit = float(result.x[-1]) if fit_r else float(base.geometry.transverse_ratio)
    r_err = float(result.stderr[-1]) if fit_r else 0.0
    cfg = config_for(result.x)
    all_pops = {(g.F, g.mF): n for g, n in zip(ham.GROUND_STATES, cfg.populations) if n > 0}
    return SpectrumFit(result, cfg, all_pops, perr, r_fit, r_err, excluded, weights,
                       residual_MHz(result.x), passes)


def synthetic_spectrum(config: ham.SystemConfig, delta_cs: Sequence[float], noise_MHz: float = 25.0,
                       min_weight: float = 0.1, seed: int = 0,
                       window: tuple[float, float] | None = None) -> list[SpectrumPoint]:
    """Resonances with at least ``min_weight`` photonic weight in their channel plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    lines = _model_lines(config, list(delta_cs), min_weight, "lapack")
    out = []
    for dc in delta_cs:
        for ch in (ham.PLUS, ham.MINUS):
            for e in lines[dc][ch]:
                if window is not None and not window[0] <= e <= window[1]:
                    continue
                out.append(SpectrumPoint(float(dc), float(e + noise_MHz * rng.standard_normal()), ch))
    return out
