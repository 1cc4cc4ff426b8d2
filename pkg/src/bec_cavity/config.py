"""Flat ``key = value`` run configuration with dotted namespaces.

Every key has a default equal to the experiment's value, so an empty file is
a complete configuration.  ``format_defaults()`` renders the annotated
default file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from . import atomic
from . import constants as k
from . import hamiltonian as ham
from .errors import ConfigError
from .geometry import CavityGeometry, TransportProfile
from .gpe import GridSpec, TrapConfig
from .scan import ScanConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _overlap(text: str) -> float | str:
    return ham.FROM_N if text.strip() == ham.FROM_N else float(text)


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _int(text: str) -> int:
    return int(text, 0)


def _positive(x) -> bool:
    return x > 0


def _nonneg(x) -> bool:
    return x >= 0


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str
    check: Callable[[Any], bool] | None = None
    requirement: str = ""


_POP_DOC = "atoms in ground state |F, mF>"

def _pos(default, doc: str, parse=float) -> Key:
    return Key(parse, default, doc, _positive, "must be positive")


def _nonneg_key(default, doc: str, parse=float) -> Key:
    return Key(parse, default, doc, _nonneg, "must be non-negative")


KEYS: dict[str, Key] = {
    "cavity.length_m": _pos(k.CAVITY_LENGTH, "mirror separation"),
    "cavity.mirror_radius_m": _pos(k.MIRROR_RADIUS, "mirror radius of curvature"),
    "cavity.probe_wavelength_m": _pos(k.PROBE_WAVELENGTH, "probe (Rb D2) wavelength"),
    "cavity.lock_wavelength_m": _pos(k.LOCK_WAVELENGTH, "stabilisation laser / intracavity lattice wavelength"),
    "cavity.birefringence_MHz": _nonneg_key(k.BIREFRINGENCE_MHz, "linear TEM00 polarization splitting"),
    "cavity.kappa_MHz": _pos(k.KAPPA_MHz, "cavity field decay rate / 2pi"),
    "cavity.gamma_MHz": _pos(k.GAMMA_MHz, "atomic dipole decay rate / 2pi"),
    "cavity.g0_MHz": _pos(k.G0_MHz, "single-atom coupling on the strongest transition / 2pi"),
    "cavity.delta_t_MHz": _pos(k.TRANSVERSE_OFFSET_MHz, "transverse mode family offset from TEM00"),
    "cavity.transverse_ratio": _nonneg_key(k.TRANSVERSE_RATIO, "transverse/TEM00 coupling ratio r"),
    "system.g_plus_MHz": _pos(k.G_SIGMA_PLUS_MHz, "maximum coupling in the sigma+ channel / 2pi"),
    "system.g_minus_MHz": _pos(k.G_SIGMA_MINUS_MHz, "maximum coupling in the sigma- channel / 2pi"),
    "system.overlap": Key(_overlap, None, "condensate-mode overlap U0, or 'from-N' (default: U0(154000))"),
    "system.delta_c_MHz": Key(float, 0.0, "cavity detuning for single-point commands"),
    "system.basis": Key(_choice(ham.CIRCULAR, ham.LINEAR), ham.CIRCULAR, "polarization basis"),
    "system.transverse": Key(_bool, True, "include the effective transverse mode"),
    "system.convention": Key(_choice(*atomic.CONVENTIONS), atomic.LINE_STRENGTH, "dipole coefficient convention"),
    "system.solver": Key(_choice("jacobi", "lapack"), "jacobi", "Hermitian eigensolver"),
    "trap.freq_x_Hz": _pos(k.TRAP_FREQUENCIES_HZ[0], "trap frequency along the cavity axis"),
    "trap.freq_y_Hz": _pos(k.TRAP_FREQUENCIES_HZ[1], "trap frequency along the weak axis"),
    "trap.freq_z_Hz": _pos(k.TRAP_FREQUENCIES_HZ[2], "trap frequency along the third axis"),
    "trap.lattice_depth_Erec": _nonneg_key(k.LATTICE_DEPTH_EREC, "intracavity lattice depth in recoil energies"),
    "trap.N": _pos(k.N_BEC, "atoms in the condensate for the gpe command"),
    "trap.scattering_length_m": _nonneg_key(k.RB87.scattering_length, "s-wave scattering length"),
    "gpe.points_x": Key(_int, GridSpec().points[0], "grid points along the cavity axis"),
    "gpe.points_y": Key(_int, GridSpec().points[1], "grid points along the weak axis"),
    "gpe.points_z": Key(_int, GridSpec().points[2], "grid points along the third axis"),
    "gpe.tf_radii": _pos(GridSpec().tf_radii, "box half-width in Thomas-Fermi radii"),
    "gpe.dt_s": _pos(2e-5, "initial imaginary time step (s)"),
    "gpe.refinements": _nonneg_key(1, "number of time-step quarterings", _int),
    "gpe.tol": _pos(1e-9, "relative chemical-potential change for convergence"),
    "scan.speed_MHz_per_ms": _pos(k.SCAN_SPEED_MHz_PER_MS, "probe scan speed"),
    "scan.start_MHz": Key(float, ScanConfig().start_MHz, "scan start (probe detuning)"),
    "scan.stop_MHz": Key(float, ScanConfig().stop_MHz, "scan stop (probe detuning)"),
    "scan.bin_time_s": _pos(k.BIN_TIME, "photon-count bin"),
    "scan.window_s": _pos(k.AVERAGE_WINDOW, "sliding-average window"),
    "scan.efficiency": Key(float, k.DETECTION_EFFICIENCY, "detection efficiency per intracavity photon",
                             lambda x: 0 <= x <= 1, "must lie in [0, 1]"),
    "scan.dark_rate": _nonneg_key(k.DARK_RATE, "dark counts per second per detector"),
    "scan.n_bar": _nonneg_key(ScanConfig().n_bar, "peak mean intracavity photon number"),
    "scan.threshold_sigmas": _pos(5.0, "detection threshold above the dark level"),
    "transport.duration_s": _pos(k.TRANSPORT_DURATION, "transport duration"),
    "transport.delta_max_Hz": _pos(k.TRANSPORT_DELTA_MAX_HZ, "maximum conveyor detuning"),
    "transport.wavelength_m": _pos(k.TRANSPORT_WAVELENGTH, "conveyor lattice wavelength"),
    "transport.samples": _pos(1001, "time samples in the profile", _int),
    "fit.mode": Key(_choice("pure_sqrt", "full_formula"), "full_formula", "lower-branch law for N-dependent data"),
    "fit.noise_MHz": _pos(25.0, "per-point uncertainty of spectrum data"),
    "fit.fit_r": Key(_bool, True, "fit the transverse coupling ratio"),
}
for _g in atomic.ground_states():
    KEYS[f"populations.{_g.F},{_g.mF}"] = Key(
        float, {(1, -1): k.N_MAIN, (2, -1): k.N_F2}.get((_g.F, _g.mF), 0.0), _POP_DOC,
        _nonneg, "must be non-negative")


@dataclass
class RunConfig:
    values: dict[str, Any]
    explicit: dict[str, int] = field(default_factory=dict)  # key -> line number
    source: str | None = None

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def line_of(self, key: str) -> int | None:
        return self.explicit.get(key)

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(message, key=key, line=self.line_of(key))

    # --- resolved records -------------------------------------------------
    def geometry(self) -> CavityGeometry:
        v = self.values
        return self._build(
            ["cavity.length_m", "cavity.mirror_radius_m", "cavity.kappa_MHz", "cavity.gamma_MHz",
             "cavity.delta_t_MHz", "cavity.transverse_ratio", "cavity.birefringence_MHz"],
            lambda: CavityGeometry(
                length=v["cavity.length_m"], mirror_radius=v["cavity.mirror_radius_m"],
                probe_wavelength=v["cavity.probe_wavelength_m"], lock_wavelength=v["cavity.lock_wavelength_m"],
                birefringence_MHz=v["cavity.birefringence_MHz"], kappa_MHz=v["cavity.kappa_MHz"],
                gamma_MHz=v["cavity.gamma_MHz"], transverse_offset_MHz=v["cavity.delta_t_MHz"],
                transverse_ratio=v["cavity.transverse_ratio"]))

    def populations(self) -> tuple[float, ...]:
        return tuple(self.values[f"populations.{g.F},{g.mF}"] for g in atomic.ground_states())

    def system(self, require_atoms: bool = False) -> ham.SystemConfig:
        v = self.values
        geom = self.geometry()
        pop_keys = [f"populations.{g.F},{g.mF}" for g in atomic.ground_states()]
        overlap = v["system.overlap"]
        if overlap is None:
            from .gpe import u0_empirical
            overlap = u0_empirical(k.N_MAIN)
        cfg = self._build(
            pop_keys + ["system.g_plus_MHz", "system.g_minus_MHz", "system.overlap"],
            lambda: ham.SystemConfig(
                populations=self.populations(), g_plus=v["system.g_plus_MHz"], g_minus=v["system.g_minus_MHz"],
                overlap=overlap, geometry=geom, delta_c=v["system.delta_c_MHz"], basis=v["system.basis"],
                transverse=v["system.transverse"], convention=v["system.convention"]))
        if require_atoms and cfg.total_atoms <= 0:
            key = next((p for p in pop_keys if p in self.explicit), pop_keys[0])
            raise self.error(key, "all ground-state populations are zero; the command needs atoms")
        return cfg

    def trap(self) -> TrapConfig:
        v = self.values
        from .geometry import cavity_derived
        waist = cavity_derived(self.geometry()).waist
        return self._build(
            ["trap.freq_x_Hz", "trap.freq_y_Hz", "trap.freq_z_Hz", "trap.lattice_depth_Erec", "trap.N",
             "trap.scattering_length_m"],
            lambda: TrapConfig(
                frequencies_Hz=(v["trap.freq_x_Hz"], v["trap.freq_y_Hz"], v["trap.freq_z_Hz"]),
                lattice_depth_Erec=v["trap.lattice_depth_Erec"], lattice_wavelength=v["cavity.lock_wavelength_m"],
                probe_waist=waist, probe_wavelength=v["cavity.probe_wavelength_m"], N=v["trap.N"],
                scattering_length=v["trap.scattering_length_m"]))

    def grid(self) -> GridSpec:
        v = self.values
        return GridSpec(points=(v["gpe.points_x"], v["gpe.points_y"], v["gpe.points_z"]),
                        tf_radii=v["gpe.tf_radii"])

    def scan(self, seed: int = 0) -> ScanConfig:
        v = self.values
        return self._build(
            [key for key in KEYS if key.startswith("scan.")],
            lambda: ScanConfig(
                speed_MHz_per_ms=v["scan.speed_MHz_per_ms"], start_MHz=v["scan.start_MHz"],
                stop_MHz=v["scan.stop_MHz"], bin_time=v["scan.bin_time_s"], average_window=v["scan.window_s"],
                efficiency=v["scan.efficiency"], dark_rate=v["scan.dark_rate"], n_bar=v["scan.n_bar"],
                kappa_MHz=v["cavity.kappa_MHz"], gamma_MHz=v["cavity.gamma_MHz"], seed=seed,
                threshold_sigmas=v["scan.threshold_sigmas"]))

    def transport(self) -> TransportProfile:
        v = self.values
        return self._build(
            [key for key in KEYS if key.startswith("transport.")],
            lambda: TransportProfile(duration=v["transport.duration_s"], delta_max_Hz=v["transport.delta_max_Hz"],
                                     wavelength=v["transport.wavelength_m"], samples=v["transport.samples"]))

    def validate(self) -> None:
        """Resolve every record so invariant violations surface before any computation."""
        self.geometry()
        self.system()
        self.trap()
        self.scan()
        self.transport()

    def _build(self, keys: list[str], make: Callable[[], Any]) -> Any:
        try:
            return make()
        except ValueError as exc:
            # blame the first explicitly set key of the group, else the first key
            blame = next((key for key in keys if key in self.explicit), keys[0])
            raise ConfigError(str(exc), key=blame, line=self.explicit.get(blame)) from exc


def defaults() -> RunConfig:
    return RunConfig({name: key.default for name, key in KEYS.items()})


def parse_text(text: str, source: str | None = None) -> RunConfig:
    cfg = defaults()
    cfg.source = source
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        name, value = (part.strip() for part in line.split("=", 1))
        if name not in KEYS:
            raise ConfigError("unknown key", key=name, line=lineno)
        if name in cfg.explicit:
            raise ConfigError(f"duplicate key (first set on line {cfg.explicit[name]})", key=name, line=lineno)
        if not value:
            raise ConfigError("missing value", key=name, line=lineno)
        key = KEYS[name]
        try:
            parsed = key.parse(value)
        except ValueError as exc:
            raise ConfigError(f"malformed value {value!r}: {exc}", key=name, line=lineno) from exc
        if key.check is not None and not key.check(parsed):
            raise ConfigError(f"{key.requirement}, got {value}", key=name, line=lineno)
        cfg.values[name] = parsed
        cfg.explicit[name] = lineno
    return cfg


def parse_config(path: str | Path | None) -> RunConfig:
    """Read a configuration file (None gives the defaults) and validate every record."""
    if path is None:
        cfg = defaults()
    else:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {p}: {exc}") from exc
        cfg = parse_text(text, str(p))
    cfg.validate()
    return cfg


def with_overrides(cfg: RunConfig, **values: Any) -> RunConfig:
    out = replace(cfg, values=dict(cfg.values), explicit=dict(cfg.explicit))
    for name, value in values.items():
        key = name.replace("__", ".")
        if key not in KEYS:
            raise ConfigError("unknown key", key=key)
        out.values[key] = value
    return out


def format_config(cfg: RunConfig) -> str:
    """Resolved configuration as ``key = value`` lines (round-trips through ``parse_text``)."""
    lines = []
    for name in sorted(KEYS):
        value = cfg.values[name]
        if value is None:
            continue
        lines.append(f"{name} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def format_defaults() -> str:
    lines = ["# Default run configuration (experimental values)."]
    for name in sorted(KEYS):
        key = KEYS[name]
        lines.append(f"# {key.doc}")
        if key.default is None:
            lines.append(f"# {name} =")
        else:
            lines.append(f"{name} = {_fmt(key.default)}")
    return "\n".join(lines) + "\n"


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
