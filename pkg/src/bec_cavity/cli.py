"""Command-line front end: ``bec-cavity <command> [--config PATH] [--out DIR] [--seed N]``.

Every command writes its outputs plus ``manifest.txt`` (command, resolved
configuration, version, timestamps, SHA-256 digests) and ``resolved.cfg``
(re-usable with ``--config``) into the output directory.  Exit status is 0
on success, 1 for configuration/usage errors and 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from . import atomic
from . import hamiltonian as ham
from .config import RunConfig, format_config, parse_config
from .errors import ConfigError, FitError, NumericError
from .fitting import SpectrumPoint, fit_spectrum, fit_sqrt_law
from .geometry import cavity_derived, figures_of_merit, recoil_frequency, transport_kinematics
from .gpe import overlap_factor, overlap_sweep, solve_ground_state, u0_empirical
from .scan import Resonance, read_trace_csv, smooth_and_detect, synthesize_scan, write_trace_csv

log = logging.getLogger("bec_cavity")

COMMANDS = ("atom", "geometry", "transport", "spectrum", "normalmode", "gpe", "scan", "fit")
_VALUE_FLAGS = ("--grid", "--N", "--sweep", "--config", "--out", "--seed", "--data", "--trace")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors (exit 1)
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# --- formatting and atomic output -------------------------------------------

def fmt(x) -> str:
    """Full-precision text for numbers (17 significant digits for floats)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` (linear) or ``start:stop:logN`` (geometric)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid {text!r} is not start:stop:count or start:stop:logN", key="--grid")
    try:
        start, stop = float(parts[0]), float(parts[1])
        log_spaced = parts[2].startswith("log")
        count = int(parts[2][3:] if log_spaced else parts[2])
    except ValueError as exc:
        raise ConfigError(f"malformed grid {text!r}: {exc}", key="--grid") from exc
    if count < 1:
        raise ConfigError("grid needs at least one point", key="--grid")
    if log_spaced:
        if start <= 0 or stop <= 0:
            raise ConfigError("logarithmic grid needs positive bounds", key="--grid")
        return np.geomspace(start, stop, count)
    if stop < start:
        raise ConfigError("grid stop must not be below start", key="--grid")
    return np.linspace(start, stop, count)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) for v in row])
    return buf.getvalue()


def kv_text(pairs: Iterable[tuple[str, object]]) -> str:
    pairs = list(pairs)
    width = max((len(k) for k, _ in pairs), default=0)
    return "".join(f"{k.ljust(width)} = {fmt(v)}\n" for k, v in pairs)


def read_kv(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects output files and writes the manifest."""

    def __init__(self, command: str, argv: Sequence[str], cfg: RunConfig, out: Path, seed: int):
        self.command, self.argv, self.cfg, self.out, self.seed = command, list(argv), cfg, out, seed
        self.started = dt.datetime.now(dt.timezone.utc)
        self.outputs: dict[str, Path] = {}
        self.inputs: dict[str, Path] = {}
        if cfg.source:
            self.inputs["config"] = Path(cfg.source)

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        atomic_write(path, text)
        self.outputs[name] = path
        return path

    def manifest(self) -> Path:
        pairs = [("command", self.command), ("argv", " ".join(self.argv)), ("version", __version__),
                 ("seed", self.seed), ("started_utc", self.started.isoformat()),
                 ("finished_utc", dt.datetime.now(dt.timezone.utc).isoformat())]
        for name, path in sorted(self.inputs.items()):
            pairs.append((f"input.{name}", f"{path} sha256={sha256(path)}"))
        for name, path in sorted(self.outputs.items()):
            pairs.append((f"output.{name}", f"sha256={sha256(path)}"))
        for line in format_config(self.cfg).splitlines():
            key, value = line.split(" = ", 1)
            pairs.append((f"config.{key}", value))
        resolved = self.out / "resolved.cfg"
        atomic_write(resolved, format_config(self.cfg))
        path = self.out / "manifest.txt"
        atomic_write(path, "".join(f"{k} = {v}\n" for k, v in pairs))
        return path


# --- commands ---------------------------------------------------------------

def cmd_atom(args, cfg: RunConfig, run: Run) -> None:
    convention = args.convention or cfg["system.convention"]
    table = atomic.dipole_table(convention)
    header = ["F", "mF", "Fp", "mFp", "q", "c", "c_squared", "detuning_MHz"]
    run.write("dipole_table.csv", csv_text(header, ([row[h] for h in header] for row in table.as_rows())))
    print(kv_text([("convention", convention), ("entries", len(table.entries)),
                   ("cg_ratio_sigma_plus_over_minus", atomic.clebsch_gordan_ratio(convention=convention))]), end="")


def cmd_geometry(args, cfg: RunConfig, run: Run) -> None:
    geom = cfg.geometry()
    d = cavity_derived(geom)
    system = cfg.system()
    u0 = system.u0
    fom = figures_of_merit(cfg["cavity.g0_MHz"], u0 * system.g_plus, system.population(1, -1),
                           geom.kappa_MHz, geom.gamma_MHz, geom.lock_wavelength)
    pairs = [("waist_m", d.waist), ("fsr_MHz", d.fsr_MHz), ("transverse_spacing_MHz", d.transverse_spacing_MHz),
             ("critical_photon_number", fom.critical_photon_number), ("cooperativity", fom.cooperativity),
             ("U0", u0), ("recoil_lock_Hz", fom.recoil_Hz),
             ("recoil_probe_Hz", recoil_frequency(geom.probe_wavelength))]
    text = kv_text(pairs)
    run.write("geometry.txt", text)
    if args.csv:
        run.write("geometry.csv", csv_text(["key", "value"], pairs))
    print(text, end="")


def cmd_transport(args, cfg: RunConfig, run: Run) -> None:
    kin = transport_kinematics(cfg.transport())
    run.write("transport.csv", csv_text(["t_s", "delta_Hz", "v_m_per_s", "a_m_per_s2", "x_m"],
                                        zip(kin.t, kin.delta, kin.v, kin.a, kin.x)))
    print(kv_text([("v_max_m_per_s", kin.v_max), ("a_max_m_per_s2", kin.a_max), ("distance_m", kin.distance)]), end="")


def cmd_spectrum(args, cfg: RunConfig, run: Run) -> None:
    system = cfg.system(require_atoms=True)
    grid = parse_grid(args.grid)
    res = ham.spectrum_sweep(system, grid, solver=cfg["system.solver"])
    rows = []
    for b in res.branches:
        for n in range(grid.size):
            rows.append((b.delta_c[n], b.delta_p[n], b.w_plus[n], b.w_minus[n], b.w_transverse[n], b.branch_id))
    header = ["delta_c_MHz", "delta_p_MHz", "w_sigma_plus", "w_sigma_minus", "w_transverse", "branch_id"]
    run.write("spectrum.csv", csv_text(header, rows))
    pairs = [("grid_points", grid.size), ("dimension", res.basis.dimension)]
    for ch, xc in sorted(res.crossings.items()):
        name = "plus" if ch == ham.PLUS else "minus"
        pairs += [(f"f2_crossing_{name}_delta_c_MHz", xc.center_delta_c), (f"f2_crossing_{name}_gap_MHz", xc.gap),
                  (f"f2_crossing_{name}_shift_MHz", xc.shift)]
    text = kv_text(pairs)
    run.write("spectrum_summary.txt", text)
    print(text, end="")


def normalmode_rows(cfg: RunConfig, Ns: np.ndarray) -> list[tuple]:
    """|Delta_p| of the lower branch at Delta_c = 0 for a pure |1,-1> condensate of each N."""
    base = replace(cfg.system(), overlap=ham.FROM_N)
    rows = []
    for N in Ns:
        system = base.with_populations({(1, -1): float(N)})
        for ch in (ham.PLUS, ham.MINUS):
            full, closed = ham.lower_branch_detuning(system, ch, solver=cfg["system.solver"])
            rows.append((float(N), ch, full, closed))
    return rows


def cmd_normalmode(args, cfg: RunConfig, run: Run) -> None:
    Ns = parse_grid(args.N)
    if np.any(Ns < 1):
        raise ConfigError("atom numbers must be >= 1", key="--N")
    rows = normalmode_rows(cfg, Ns)
    run.write("normalmode.csv", csv_text(["N", "channel", "delta_p_full_MHz", "delta_p_closed_MHz"], rows))
    print(kv_text([("points", len(rows))]), end="")


def cmd_gpe(args, cfg: RunConfig, run: Run) -> None:
    trap, grid = cfg.trap(), cfg.grid()
    kw = dict(dt=cfg["gpe.dt_s"], refinements=cfg["gpe.refinements"], tol=cfg["gpe.tol"])
    if args.sweep:
        try:
            Ns = [float(v) for v in args.sweep.split(",") if v.strip()]
        except ValueError as exc:
            raise ConfigError(f"malformed atom-number list: {exc}", key="--sweep") from exc
        if not Ns or min(Ns) <= 0:
            raise ConfigError("need positive atom numbers", key="--sweep")
        rows = overlap_sweep(Ns, trap, grid, **kw)
        run.write("gpe_sweep.csv", csv_text(["N", "U0_solver", "U0_empirical"], rows))
        print(csv_text(["N", "U0_solver", "U0_empirical"], rows), end="")
        return
    sol = solve_ground_state(trap, grid, **kw)
    u0 = overlap_factor(sol, trap.probe_waist)
    pairs = [("N", trap.N), ("mu_Hz", sol.mu_Hz), ("mu_over_Erec", sol.mu_over_erec()),
             ("energy_per_particle_Hz", sol.energy_Hz), ("U0", u0), ("U0_empirical", u0_empirical(trap.N)),
             ("grid", "x".join(str(n) for n in sol.grid_points)),
             ("spacing_um", ",".join(fmt(a[1] - a[0]) for a in sol.axes)),
             ("iterations", sol.iterations), ("converged", sol.converged)]
    text = kv_text(pairs)
    run.write("gpe.txt", text)
    if args.slices:
        rows = []
        centre = [a.size // 2 for a in sol.axes]
        names = ("x", "y", "z")
        for a, b in ((0, 1), (0, 2), (1, 2)):
            c = 3 - a - b
            plane = np.take(sol.density, centre[c], axis=c)
            for i, u in enumerate(sol.axes[a]):
                for j, v in enumerate(sol.axes[b]):
                    rows.append((names[a] + names[b], u, v, plane[i, j]))
        run.write("gpe_slices.csv", csv_text(["plane", "u_um", "v_um", "density_per_um3"], rows))
    print(text, end="")


def scan_resonances(system: ham.SystemConfig, delta_c: float, lo: float, hi: float,
                    min_weight: float = 0.01, solver: str = "jacobi") -> list[Resonance]:
    basis = ham.enumerate_basis(system)
    w, v = ham.eigensolve(ham.build_hamiltonian(system, basis, delta_c), solver)
    wp, wm, wt = ham.photonic_weights(basis, v)
    out = []
    for e, a, b, t in zip(w, wp, wm, wt):
        if lo <= e <= hi and max(a, b) >= min_weight:
            photonic = min(a + b + t, 1.0)
            out.append(Resonance(float(e), ham.PLUS if a >= b else ham.MINUS, photonic, 1.0 - photonic))
    return out


def cmd_scan(args, cfg: RunConfig, run: Run) -> None:
    scan = cfg.scan(seed=run.seed)
    truth = []
    if args.trace:
        run.inputs["trace"] = Path(args.trace)
        trace = read_trace_csv(args.trace)
    else:
        system = cfg.system()
        truth = scan_resonances(system, cfg["system.delta_c_MHz"], scan.start_MHz, scan.stop_MHz,
                                solver=cfg["system.solver"])
        trace = synthesize_scan(truth, scan, seed=run.seed)
        buf = Path(run.out / "trace.csv")
        buf.parent.mkdir(parents=True, exist_ok=True)
        tmp = buf.with_name(".trace.csv.tmp")
        write_trace_csv(trace, tmp)
        os.replace(tmp, buf)
        run.outputs["trace.csv"] = buf
    peaks = smooth_and_detect(trace, scan)
    run.write("peaks.csv", csv_text(["center_MHz", "channel", "peak_rate_per_s", "uncertainty_MHz"],
                                    [(p.center_MHz, p.channel, p.peak_rate, p.uncertainty_MHz) for p in peaks]))
    if truth:
        run.write("resonances.csv", csv_text(["center_MHz", "channel", "photonic", "atomic"],
                                             [(r.center_MHz, r.channel, r.photonic, r.atomic) for r in truth]))
    print(kv_text([("bins", trace.n_bins), ("resonances_in_window", len(truth)), ("peaks", len(peaks))]
                  + [(f"peak{i}_{p.channel}_MHz", p.center_MHz) for i, p in enumerate(peaks)]), end="")


def read_measurements(path: str | Path) -> tuple[str, list[tuple]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ConfigError("empty measurement file", key=str(path))
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    try:
        if header == ["delta_c_MHz", "delta_p_MHz", "channel"]:
            return "spectrum", [(float(a), float(b), c.strip()) for a, b, c in body]
        if header == ["N", "delta_p_MHz", "channel"]:
            return "sqrt", [(float(a), float(b), c.strip()) for a, b, c in body]
    except ValueError as exc:
        raise ConfigError(f"malformed measurement row: {exc}", key=str(path)) from exc
    raise ConfigError(f"unrecognised header {header}; expected delta_c_MHz,delta_p_MHz,channel "
                      "or N,delta_p_MHz,channel", key=str(path))


def cmd_fit(args, cfg: RunConfig, run: Run) -> None:
    run.inputs["data"] = Path(args.data)
    kind, data = read_measurements(args.data)
    for row in data:
        if row[2] not in (ham.PLUS, ham.MINUS):
            raise ConfigError(f"unknown channel {row[2]!r}", key=str(args.data))
    geom = cfg.geometry()
    if kind == "sqrt":
        results = fit_sqrt_law(data, cfg["fit.mode"], geom.transverse_ratio, geom.transverse_offset_MHz)
        pairs, rows = [("kind", "sqrt_law"), ("mode", cfg["fit.mode"])], []
        for ch, res in sorted(results.items()):
            name = "plus" if ch == ham.PLUS else "minus"
            pname = res.names[0]
            pairs += [(f"{pname}_{name}_MHz", res.x[0]), (f"{pname}_{name}_stderr_MHz", res.stderr[0]),
                      (f"residual_norm_{name}", res.residual_norm), (f"iterations_{name}", res.iterations),
                      (f"converged_{name}", res.converged)]
            sel = [row for row in data if row[2] == ch]
            for row, r in zip(sel, res.residuals):
                rows.append((row[0], row[1], ch, r))
        if set(results) == {ham.PLUS, ham.MINUS}:
            pairs.append(("ratio_plus_over_minus", results[ham.PLUS].x[0] / results[ham.MINUS].x[0]))
        run.write("fit_residuals.csv", csv_text(["N", "delta_p_MHz", "channel", "residual_MHz"], rows))
    else:
        fit = fit_spectrum([SpectrumPoint(*row) for row in data], cfg.system(require_atoms=True),
                           fit_r=cfg["fit.fit_r"], noise_MHz=cfg["fit.noise_MHz"])
        res = fit.result
        pairs = [("kind", "spectrum")]
        for (F, m), n in sorted(fit.populations.items()):
            pairs.append((f"N_{F}_{m}", n))
            if (F, m) in fit.population_errors:
                pairs.append((f"N_{F}_{m}_stderr", fit.population_errors[(F, m)]))
        pairs += [("f2_fraction", fit.f2_fraction), ("r", fit.r), ("r_stderr", fit.r_error),
                  ("residual_norm", res.residual_norm), ("iterations", res.iterations),
                  ("converged", res.converged), ("excluded_points", len(fit.excluded)), ("passes", fit.passes)]
        rows = [(p[0], p[1], p[2], r, w) for p, r, w in zip(data, fit.residuals_MHz, fit.weights)]
        run.write("fit_residuals.csv", csv_text(["delta_c_MHz", "delta_p_MHz", "channel", "residual_MHz", "weight"],
                                                rows))
    text = kv_text(pairs)
    run.write("fit.txt", text)
    print(text, end="")


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file (default: built-in values)")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", default="0", help="random seed, unsigned 64-bit (default 0)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="bec-cavity", description="Condensate-cavity coupling model toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    s = sub.add_parser("atom", parents=[common], help="dipole coefficient table")
    s.add_argument("--convention", choices=atomic.CONVENTIONS)
    s = sub.add_parser("geometry", parents=[common], help="cavity geometry and figures of merit")
    s.add_argument("--csv", action="store_true", help="also write geometry.csv")
    sub.add_parser("transport", parents=[common], help="conveyor transport trajectory")
    s = sub.add_parser("spectrum", parents=[common], help="eigenenergy branches versus cavity detuning")
    s.add_argument("--grid", default="-8000:4000:481", help="cavity detunings start:stop:count (MHz)")
    s = sub.add_parser("normalmode", parents=[common], help="lower-branch detuning versus atom number")
    s.add_argument("--N", default="2500:200000:log12", help="atom numbers start:stop:count or start:stop:logN")
    s = sub.add_parser("gpe", parents=[common], help="condensate ground state and mode overlap")
    s.add_argument("--sweep", help="comma-separated atom numbers for a U0(N) sweep")
    s.add_argument("--slices", action="store_true", help="write central density planes")
    s = sub.add_parser("scan", parents=[common], help="synthesize and analyse a transmission scan")
    s.add_argument("--trace", help="analyse this trace CSV instead of synthesizing one")
    s = sub.add_parser("fit", parents=[common], help="fit spectrum or atom-number data")
    s.add_argument("--data", required=True, help="measurement CSV")
    return p


def _join_values(argv: Sequence[str]) -> list[str]:
    """Turn ``--grid -8000:4000:25`` into ``--grid=-8000:4000:25`` so values may start with '-'."""
    out, it = [], iter(argv)
    for a in it:
        if a in _VALUE_FLAGS:
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


HANDLERS = {"atom": cmd_atom, "geometry": cmd_geometry, "transport": cmd_transport, "spectrum": cmd_spectrum,
            "normalmode": cmd_normalmode, "gpe": cmd_gpe, "scan": cmd_scan, "fit": cmd_fit}


def run_command(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(argv))
        if args.command is None:
            raise UsageError(parser.format_usage() + "bec-cavity: error: a command is required")
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        seed = int(args.seed, 0)
        if not 0 <= seed < 2 ** 64:
            raise ValueError("out of range")
    except ValueError:
        print(f"error: --seed must be an unsigned 64-bit integer, got {args.seed!r}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(args.config)
        run = Run(args.command, argv, cfg, Path(args.out), seed)
        HANDLERS[args.command](args, cfg, run)
        run.manifest()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, FitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
