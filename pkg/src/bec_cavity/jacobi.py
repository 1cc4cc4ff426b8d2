"""Cyclic Jacobi diagonalization of dense complex Hermitian matrices.

Each sweep visits every (p, q) pair once, using the round-robin ordering so
that the n/2 rotations of one round act on disjoint index pairs and can be
applied together.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    players = list(range(n)) + ([-1] if n % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def off_diagonal_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def eigensolve_hermitian(h: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100,
                         herm_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of ``h``.

    Raises ValueError if ``h`` is not Hermitian to ``herm_tol`` relative, and
    NumericError if the off-diagonal norm is not below ``tol * ||h||`` after
    ``max_sweeps`` sweeps.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("expected a square matrix")
    n = h.shape[0]
    a = np.array(h, dtype=complex)
    scale = np.linalg.norm(a)
    if n == 0:
        return np.zeros(0), np.zeros((0, 0), dtype=complex)
    if np.linalg.norm(a - a.conj().T) > herm_tol * max(scale, np.finfo(float).tiny):
        raise ValueError("matrix is not Hermitian")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    if scale == 0.0:
        return np.zeros(n), v

    target = tol * scale
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        if off_diagonal_norm(a) <= target:
            break
        for p, q in rounds:
            apq = a[p, q]
            b = np.abs(apq)
            active = b > 1e-300
            if not active.any():
                continue
            app = a[p, p].real
            aqq = a[q, q].real
            bb = np.where(active, b, 1.0)
            zeta = (aqq - app) / (2 * bb)
            sign = np.where(zeta >= 0, 1.0, -1.0)
            t = np.where(active, sign / (np.abs(zeta) + np.hypot(1.0, zeta)), 0.0)
            c = 1 / np.sqrt(1 + t ** 2)
            s = t * c
            ph = np.where(active, np.exp(-1j * np.angle(apq)), 1.0)
            # U = diag(1, e^{-i phi}) @ [[c, s], [-s, c]]
            u00, u01 = c, s
            u10, u11 = -s * ph, c * ph

            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = u00[:, None] * rp + np.conj(u10)[:, None] * rq
            a[q, :] = u01[:, None] * rp + np.conj(u11)[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * u00 + cq * u10
            a[:, q] = cp * u01 + cq * u11
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * u00 + vq * u10
            v[:, q] = vp * u01 + vq * u11
            a[p, q] = 0.0
            a[q, p] = 0.0
    else:
        if off_diagonal_norm(a) > target:
            raise NumericError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off_diagonal_norm(a):.3e}, target {target:.3e})")

    w = np.diag(a).real
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigensolve(h: np.ndarray, solver: str = "jacobi") -> tuple[np.ndarray, np.ndarray]:
    """Dispatch to the in-house Jacobi solver or LAPACK (``numpy.linalg.eigh``)."""
    if solver == "jacobi":
        return eigensolve_hermitian(h)
    if solver == "lapack":
        return np.linalg.eigh(h)
    raise ValueError(f"unknown solver {solver!r}")
