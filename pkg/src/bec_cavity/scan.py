"""Synthetic photon-counting transmission scans and resonance extraction.

Line-shape model (a weak-drive heuristic, not derived from input-output
theory): each eigenstate contributes a Lorentzian in the probe detuning with
half width kappa * W_photon + gamma * W_atom, peak-normalised so that the
mean intracavity photon number at its centre is ``n_bar``.  Photons leave the
cavity at the energy decay rate 2 kappa (kappa being the amplitude decay
rate) and are detected with efficiency ``eta``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from . import constants as k

log = logging.getLogger(__name__)

PLUS, MINUS = "+", "-"


@dataclass(frozen=True)
class ScanConfig:
    speed_MHz_per_ms: float = k.SCAN_SPEED_MHz_PER_MS
    start_MHz: float = -4156.0
    stop_MHz: float = -4056.0
    bin_time: float = k.BIN_TIME
    average_window: float = k.AVERAGE_WINDOW
    efficiency: float = k.DETECTION_EFFICIENCY
    dark_rate: float = k.DARK_RATE  # per detector
    n_bar: float = 0.04
    kappa_MHz: float = k.KAPPA_MHz
    gamma_MHz: float = k.GAMMA_MHz
    seed: int = 0
    threshold_sigmas: float = 5.0

    def __post_init__(self) -> None:
        if self.speed_MHz_per_ms <= 0:
            raise ValueError("scan speed must be positive")
        if self.stop_MHz <= self.start_MHz:
            raise ValueError("scan window must have stop > start")
        if not 0 < self.bin_time < self.average_window:
            raise ValueError("need 0 < bin time < averaging window")
        if not 0 <= self.efficiency <= 1:
            raise ValueError("detection efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.n_bar < 0:
            raise ValueError("dark rate and photon number must be non-negative")
        n0 = self.gamma_MHz ** 2 / (2 * k.G0_MHz ** 2)
        if self.n_bar > n0 * (1 + 1e-6):
            log.warning("n_bar=%.3g exceeds the critical photon number %.3g", self.n_bar, n0)

    @property
    def duration(self) -> float:
        return (self.stop_MHz - self.start_MHz) / (self.speed_MHz_per_ms * 1e3)

    @property
    def n_bins(self) -> int:
        return int(round(self.duration / self.bin_time))

    @property
    def window_bins(self) -> int:
        return max(1, int(round(self.average_window / self.bin_time)))

    @property
    def output_rate(self) -> float:
        """Detected counts per second per intracavity photon: 2 kappa eta."""
        return 2 * (2 * math.pi * self.kappa_MHz * 1e6) * self.efficiency


@dataclass(frozen=True)
class Resonance:
    center_MHz: float
    channel: str
    photonic: float
    atomic: float

    def hwhm(self, scan: ScanConfig) -> float:
        return scan.kappa_MHz * self.photonic + scan.gamma_MHz * self.atomic


@dataclass
class ScanTrace:
    start_MHz: float
    speed_MHz_per_ms: float
    bin_time: float
    counts_plus: np.ndarray
    counts_minus: np.ndarray
    seed: int | None = None
    times: np.ndarray | None = None  # explicit axes, e.g. as read from CSV
    detunings: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.counts_plus = np.asarray(self.counts_plus)
        self.counts_minus = np.asarray(self.counts_minus)
        if self.counts_plus.shape != self.counts_minus.shape:
            raise ValueError("channel count arrays differ in length")

    @property
    def n_bins(self) -> int:
        return self.counts_plus.size

    @property
    def t(self) -> np.ndarray:
        if self.times is not None:
            return self.times
        return (np.arange(self.n_bins) + 0.5) * self.bin_time

    @property
    def delta_p(self) -> np.ndarray:
        if self.detunings is not None:
            return self.detunings
        return self.start_MHz + self.speed_MHz_per_ms * 1e3 * self.t

    def counts(self, channel: str) -> np.ndarray:
        return self.counts_plus if channel == PLUS else self.counts_minus


def expected_rates(resonances: Sequence[Resonance], scan: ScanConfig,
                   delta: np.ndarray) -> dict[str, np.ndarray]:
    """Mean detected count rate (1/s) per channel at probe detunings ``delta``."""
    photons = {PLUS: np.zeros_like(delta, dtype=float), MINUS: np.zeros_like(delta, dtype=float)}
    for r in resonances:
        hw = r.hwhm(scan)
        photons[r.channel] += scan.n_bar * hw ** 2 / ((delta - r.center_MHz) ** 2 + hw ** 2)
    return {ch: n * scan.output_rate + scan.dark_rate for ch, n in photons.items()}


def synthesize_scan(resonances: Sequence[Resonance], scan: ScanConfig,
                    seed: int | None = None) -> ScanTrace:
    """Poisson photon counts per bin for a linear probe-frequency scan."""
    seed = scan.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    for r in resonances:
        if not scan.start_MHz <= r.center_MHz <= scan.stop_MHz:
            raise ValueError(f"resonance at {r.center_MHz} MHz lies outside the scan window")
        if r.channel not in (PLUS, MINUS):
            raise ValueError(f"unknown channel {r.channel!r}")
    trace = ScanTrace(scan.start_MHz, scan.speed_MHz_per_ms, scan.bin_time,
                      np.zeros(scan.n_bins, dtype=np.int32), np.zeros(scan.n_bins, dtype=np.int32), seed)
    rates = expected_rates(resonances, scan, trace.delta_p)
    trace.counts_plus = rng.poisson(rates[PLUS] * scan.bin_time).astype(np.int32)
    trace.counts_minus = rng.poisson(rates[MINUS] * scan.bin_time).astype(np.int32)
    return trace


def sliding_average(counts: np.ndarray, window: int) -> np.ndarray:
    """Centred boxcar mean over ``window`` bins (zero padding at the edges)."""
    c = np.concatenate(([0.0], np.cumsum(counts, dtype=float)))
    n = counts.size
    first = np.arange(n) - window // 2
    lo = np.clip(first, 0, n)
    hi = np.clip(first + window, 0, n)
    return (c[hi] - c[lo]) / window


@dataclass(frozen=True)
class DetectedPeak:
    center_MHz: float
    channel: str
    peak_rate: float  # counts / s in the smoothed trace
    uncertainty_MHz: float


def _vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares parabola vertex and its standard error."""
    x0 = x.mean()
    (a, b, c), cov = np.polyfit(x - x0, y, 2, cov="unscaled") if x.size > 3 else (np.polyfit(x - x0, y, 2), None)
    if a >= 0:
        return float(x[np.argmax(y)]), float("nan")
    xv = -b / (2 * a)
    if cov is None:
        return float(xv + x0), float("nan")
    resid = y - np.polyval((a, b, c), x - x0)
    s2 = float(np.sum(resid ** 2)) / max(x.size - 3, 1)
    # d xv / d(a, b, c)
    grad = np.array([b / (2 * a ** 2), -1 / (2 * a), 0.0])
    var = float(grad @ (cov * s2) @ grad)
    return float(xv + x0), math.sqrt(max(var, 0.0))


def smooth_and_detect(trace: ScanTrace, scan: ScanConfig,
                      channels: Sequence[str] = (PLUS, MINUS)) -> list[DetectedPeak]:
    """Detect resonances in the boxcar-smoothed trace and locate their centres.

    A peak is a local maximum of the smoothed count rate above the dark level
    plus ``threshold_sigmas`` standard deviations of the smoothed dark
    counts.  Its centre is the vertex of a least-squares parabola through the
    smoothed trace above half of the peak height.
    """
    w = scan.window_bins
    if w > trace.n_bins:
        raise ValueError("averaging window is longer than the trace")
    window_time = w * trace.bin_time
    dark_counts = scan.dark_rate * window_time
    threshold = (dark_counts + scan.threshold_sigmas * math.sqrt(dark_counts)) / window_time
    detuning = trace.delta_p
    found = []
    for ch in channels:
        rate = sliding_average(trace.counts(ch), w) / trace.bin_time
        peaks, props = find_peaks(rate, height=threshold, distance=w)
        for p in peaks:
            top = rate[p]
            level = 0.5 * (top + scan.dark_rate)
            lo = p
            while lo > 0 and rate[lo - 1] >= level:
                lo -= 1
            hi = p
            while hi < rate.size - 1 and rate[hi + 1] >= level:
                hi += 1
            sl = slice(lo, hi + 1)
            if hi - lo < 3:
                centre, err = float(detuning[p]), float("nan")
            else:
                centre, err = _vertex(detuning[sl], rate[sl])
            found.append(DetectedPeak(centre, ch, float(top), err))
    return sorted(found, key=lambda d: d.center_MHz)


def write_trace_csv(trace: ScanTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t_s", "delta_p_MHz", "counts_plus", "counts_minus"])
        for t, d, a, b in zip(trace.t, trace.delta_p, trace.counts_plus, trace.counts_minus):
            wr.writerow([repr(float(t)), repr(float(d)), int(a), int(b)])


def read_trace_csv(path: str | Path) -> ScanTrace:
    """Read a trace CSV; the time axis must be uniform and detuning affine in time."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["t_s", "delta_p_MHz", "counts_plus", "counts_minus"]:
            raise ValueError(f"{path}: unexpected trace header {header}")
        rows = [r for r in rd if r]
    arr = np.array([[float(r[0]), float(r[1])] for r in rows])
    cp = np.array([int(r[2]) for r in rows], dtype=np.int32)
    cm = np.array([int(r[3]) for r in rows], dtype=np.int32)
    if len(rows) < 2:
        raise ValueError(f"{path}: trace needs at least two bins")
    t, d = arr[:, 0], arr[:, 1]
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6):
        raise ValueError(f"{path}: non-uniform time bins")
    bin_time = float(dt[0])
    speed = float((d[-1] - d[0]) / (t[-1] - t[0])) / 1e3
    start = float(d[0] - speed * 1e3 * t[0])
    return ScanTrace(start, speed, bin_time, cp, cm, times=t, detunings=d)
