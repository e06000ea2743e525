"""Command line driver: potential -> spectrum -> ladder -> checks -> profile -> runs.

Usage::

    nlslab certify --config run.ini --out results/
    nlslab simulate --preset two-mode --out results/selection

Every command writes ``manifest.json`` into the output directory before
the heavy lifting starts and finalizes it (status, file hashes, timings)
on exit.  Exit codes: 0 ok, 2 configuration error, 3 failed assumption
check, 4 runtime failure.  ``NLSLAB_OUT`` overrides ``--out``.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_RUNTIME = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class CheckFailure(RuntimeError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("failed checks: " + ", ".join(self.names))


# --- configuration ----------------------------------------------------------

BUILTINS = ("poschl_teller", "free", "sech2", "gaussian")


@dataclass(frozen=True)
class ExperimentConfig:
    L: float = 40.0
    n: int = 4096
    source: str = "inverse"  # builtin | file | inverse
    name: str = "sech2"  # builtin name, or the repulsive seed for inverse
    depth: int = 1  # Poschl-Teller index k: V = -k(k+1) sech^2
    amplitude: float = 1.0
    width: float = 1.0
    omegas: tuple = ()
    file: str = ""
    order: int = 3
    z_max: float = 0.3
    A: float = 1e4
    B: float = 20.0
    eps: float = 0.1
    allow_any_hierarchy: bool = False
    mode: str = "pde"  # pde | compare
    dt: float = 2e-3
    T: float = 100.0
    sample_interval: float = 0.5
    z0: tuple = ()
    bump: float = 0.0
    absorber: bool = True
    snapshots: tuple = ()
    monitors: bool = True
    tol_eig: float = 1e-6
    tol_fgr: float = 1e-12
    sweep_key: str = ""
    sweep_values: tuple = ()
    sweep_command: str = "simulate"

    def echo(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(t) for t in text.replace(";", ",").split(","))
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from exc


def _parser_from_text(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return cp


def config_from_parser(cp: configparser.ConfigParser, base_dir: Path = Path(".")) -> ExperimentConfig:
    known = {
        "grid": {"L", "n"},
        "potential": {"source", "name", "depth", "amplitude", "width", "omegas", "file"},
        "profile": {"order", "z_max"},
        "virial": {"a", "b", "eps", "allow_any_hierarchy"},
        "dynamics": {"mode", "dt", "t", "sample_interval", "z0", "bump", "absorber", "snapshots", "monitors"},
        "tolerances": {"eig", "fgr"},
        "sweep": {"key", "values", "command"},
    }
    for sec in cp.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key.lower() not in {k.lower() for k in known[sec]}:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, configparser.Error) as exc:
            raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc

    def boolean(raw):
        v = raw.strip().lower()
        if v in ("1", "yes", "true", "on"):
            return True
        if v in ("0", "no", "false", "off"):
            return False
        raise ValueError("expected yes/no")

    d = ExperimentConfig()
    file = get("potential", "file", str, "")
    if file and not Path(file).is_absolute():
        file = str((base_dir / file).resolve())
    cfg = ExperimentConfig(
        L=get("grid", "L", float, d.L),
        n=get("grid", "n", int, d.n),
        source=get("potential", "source", str, d.source).strip(),
        name=get("potential", "name", str, d.name).strip(),
        depth=get("potential", "depth", int, d.depth),
        amplitude=get("potential", "amplitude", float, d.amplitude),
        width=get("potential", "width", float, d.width),
        omegas=get("potential", "omegas", _floats, d.omegas),
        file=file,
        order=get("profile", "order", int, d.order),
        z_max=get("profile", "z_max", float, d.z_max),
        A=get("virial", "A", float, d.A),
        B=get("virial", "B", float, d.B),
        eps=get("virial", "eps", float, d.eps),
        allow_any_hierarchy=get("virial", "allow_any_hierarchy", boolean, d.allow_any_hierarchy),
        mode=get("dynamics", "mode", str, d.mode).strip(),
        dt=get("dynamics", "dt", float, d.dt),
        T=get("dynamics", "T", float, d.T),
        sample_interval=get("dynamics", "sample_interval", float, d.sample_interval),
        z0=get("dynamics", "z0", _floats, d.z0),
        bump=get("dynamics", "bump", float, d.bump),
        absorber=get("dynamics", "absorber", boolean, d.absorber),
        snapshots=get("dynamics", "snapshots", _floats, d.snapshots),
        monitors=get("dynamics", "monitors", boolean, d.monitors),
        tol_eig=get("tolerances", "eig", float, d.tol_eig),
        tol_fgr=get("tolerances", "fgr", float, d.tol_fgr),
        sweep_key=get("sweep", "key", str, "").strip(),
        sweep_values=tuple(v.strip() for v in get("sweep", "values", str, "").split("|") if v.strip()),
        sweep_command=get("sweep", "command", str, d.sweep_command).strip(),
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if not cfg.L > 0:
        raise ConfigError("grid half width L must be positive")
    if cfg.n < 8 or cfg.n & (cfg.n - 1):
        raise ConfigError("grid size n must be a power of two >= 8")
    if cfg.source not in ("builtin", "file", "inverse"):
        raise ConfigError(f"unknown potential source {cfg.source!r}")
    if cfg.source in ("builtin", "inverse") and cfg.name not in BUILTINS:
        raise ConfigError(f"unknown builtin potential {cfg.name!r}")
    if cfg.source == "file":
        if not cfg.file:
            raise ConfigError("potential source 'file' needs a file")
        if not Path(cfg.file).is_file():
            raise ConfigError(f"potential file not found: {cfg.file}")
    if cfg.source == "inverse":
        w = np.asarray(cfg.omegas)
        if w.size == 0 or np.any(w >= 0):
            raise ConfigError("target energies must be negative")
        if len(set(cfg.omegas)) != len(cfg.omegas):
            raise ConfigError("target energies must be distinct")
        if cfg.z0 and len(cfg.z0) != w.size:
            raise ConfigError(f"z0 has {len(cfg.z0)} entries, expected {w.size}")
    if cfg.order != 3:
        raise ConfigError("only profile order 3 is available")
    if not (cfg.A > cfg.B**2 > cfg.B > 1.0) and not cfg.allow_any_hierarchy:
        raise ConfigError("virial parameters must satisfy A > B^2 > B > 1")
    if not 0 < cfg.eps <= 1:
        raise ConfigError("eps must lie in (0, 1]")
    if cfg.mode not in ("pde", "compare"):
        raise ConfigError(f"unknown dynamics mode {cfg.mode!r}")
    if not (cfg.dt > 0 and cfg.T > 0 and cfg.sample_interval >= cfg.dt):
        raise ConfigError("need dt > 0, T > 0 and sample_interval >= dt")
    if abs(cfg.sample_interval / cfg.dt - round(cfg.sample_interval / cfg.dt)) > 1e-9:
        raise ConfigError("sample_interval must be a multiple of dt")
    if cfg.sweep_command not in COMMANDS or cfg.sweep_command == "sweep":
        raise ConfigError(f"sweep command {cfg.sweep_command!r} is not a run command")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return config_from_parser(_parser_from_text(path.read_text()), path.parent)


PRESETS = {
    "single-mode": """
[potential]
source = inverse
name = sech2
omegas = -4, -1
[profile]
z_max = 0.5
[dynamics]
T = 200
z0 = 0.3, 0
""",
    "two-mode": """
[potential]
source = inverse
name = sech2
omegas = -4, -1
[profile]
z_max = 10
[dynamics]
T = 2000
z0 = 0.7, 0.7
snapshots = 200, 400, 600, 800, 1000, 1200, 1400, 1600, 1800, 2000
""",
    "reduced-vs-pde": """
[potential]
source = inverse
name = sech2
omegas = -4, -1
[dynamics]
mode = compare
dt = 1e-3
T = 50
z0 = 0.01, 0.01
absorber = no
""",
}


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return config_from_parser(_parser_from_text(PRESETS[name]))


# --- the pipeline -----------------------------------------------------------


def builtin_potential(name: str, x: np.ndarray, depth: int = 1, amplitude: float = 1.0, width: float = 1.0):
    if name == "poschl_teller":
        return -depth * (depth + 1) / np.cosh(x) ** 2
    if name == "free":
        return np.zeros_like(x)
    if name == "sech2":
        return amplitude / np.cosh(x / width) ** 2
    if name == "gaussian":
        return amplitude * np.exp(-((x / width) ** 2))
    raise ConfigError(f"unknown builtin potential {name!r}")


def _potential_from_file(path: str, x: np.ndarray) -> np.ndarray:
    from scipy.interpolate import CubicSpline

    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read potential file {path}: {exc}") from exc
    if data.shape[1] < 2 or data.shape[0] < 4:
        raise ConfigError(f"potential file {path} needs columns x, V and at least 4 rows")
    xs, vs = data[:, 0], data[:, 1]
    if np.any(np.diff(xs) <= 0):
        raise ConfigError(f"x column of {path} must increase")
    out = np.zeros_like(x)
    inside = (x >= xs[0]) & (x <= xs[-1])
    out[inside] = CubicSpline(xs, vs)(x[inside])
    return out


class Pipeline:
    """Lazily built objects shared by the commands."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.timings: dict = {}

    def _timed(self, name, fn):
        t0 = time.perf_counter()
        out = fn()
        self.timings[name] = round(time.perf_counter() - t0, 3)
        return out

    @cached_property
    def grid(self):
        from .grid import make_grid

        return make_grid(self.cfg.L, self.cfg.n)

    @cached_property
    def potential(self):
        from .darboux import inverse_darboux
        from .grid import Field

        c, x = self.cfg, self.grid.x
        if c.source == "builtin":
            return Field(self.grid, builtin_potential(c.name, x, c.depth, c.amplitude, c.width))
        if c.source == "file":
            return Field(self.grid, _potential_from_file(c.file, x))
        seed = Field(self.grid, builtin_potential(c.name, x, c.depth, c.amplitude, c.width))
        return self._timed("inverse_darboux", lambda: inverse_darboux(seed, c.omegas, tol_eig=c.tol_eig))

    @cached_property
    def op(self):
        from .spectral import SchrodingerOp

        return SchrodingerOp(self.grid, self.potential.values.real)

    @cached_property
    def spectrum(self):
        from .spectral import discrete_spectrum

        hint = len(self.cfg.omegas) if self.cfg.source == "inverse" else 4
        return self._timed("spectrum", lambda: discrete_spectrum(self.op, count_hint=hint))

    @cached_property
    def ladder(self):
        from .darboux import build_ladder

        return self._timed(
            "ladder", lambda: build_ladder(self.potential, expected_N=self.spectrum.N, tol_eig=self.cfg.tol_eig)
        )

    @cached_property
    def classification(self):
        from .profile import classify_indices

        return classify_indices(self.spectrum.omegas)

    @cached_property
    def profile(self):
        from .profile import build_profile

        return self._timed(
            "profile",
            lambda: build_profile(self.spectrum, self.classification, self.op, order=self.cfg.order, z_max=self.cfg.z_max),
        )

    @cached_property
    def fgr(self):
        from .profile import fgr_coefficients

        return self._timed("fgr", lambda: fgr_coefficients(self.profile, self.op, self.ladder, tol_fgr=self.cfg.tol_fgr))

    @cached_property
    def weights(self):
        from .virial import make_weights

        c = self.cfg
        return make_weights(self.grid, self.ladder.removed_omegas, c.A, c.B, c.eps, allow_any=c.allow_any_hierarchy)

    def z0(self) -> np.ndarray:
        N = self.spectrum.N
        z0 = self.cfg.z0 or tuple([0.05] * N)
        if len(z0) != N:
            raise ConfigError(f"z0 has {len(z0)} entries but the potential has {N} bound states")
        return np.asarray(z0, dtype=complex)


# --- run directory and manifest ---------------------------------------------


class Run:
    def __init__(self, out: Path, cfg: ExperimentConfig, command: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.manifest = {
            "tool": "nlslab",
            "version": __version__,
            "command": command,
            "status": "running",
            "config": cfg.echo(),
            "checks": {},
            "files": {},
            "timings": {},
        }
        self._t0 = time.perf_counter()
        self._write()

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(p)
        return p

    def check(self, name: str, passed: bool, **details):
        self.manifest["checks"][name] = {"passed": bool(passed), **details}

    def _write(self):
        from .io import write_json

        write_json(self.out / "manifest.json", self.manifest)

    def finalize(self, status: str, pipeline: Pipeline | None = None, message: str = ""):
        from .io import sha256_file

        self.manifest["status"] = status
        if message:
            self.manifest["message"] = message
        seen = set()
        for p in self.files:
            if p.exists() and p not in seen:
                seen.add(p)
                self.manifest["files"][str(p.relative_to(self.out))] = sha256_file(p)
        if pipeline is not None:
            self.manifest["timings"].update(pipeline.timings)
        self.manifest["timings"]["total"] = round(time.perf_counter() - self._t0, 3)
        self._write()


# --- commands ---------------------------------------------------------------


def cmd_spectrum(pl: Pipeline, run: Run, args) -> int:
    from .io import field_to_csv, jost_table_to_csv, spectrum_to_csv, write_json

    spec = pl.spectrum
    field_to_csv(pl.potential, run.path("potential.csv"))
    spectrum_to_csv(spec, run.path("spectrum.csv"))
    for j, phi in enumerate(spec.phis, start=1):
        field_to_csv(phi, run.path(f"eigenfunctions/phi_{j}.csv"))
    jost_table_to_csv(pl.op, np.linspace(0.1, 3.0, 30), run.path("transmission.csv"))
    write_json(
        run.path("decay_fit.json"),
        {"decay_rate": pl.op.decay_rate if np.isfinite(pl.op.decay_rate) else "compact", "N": spec.N},
    )
    run.check("decay", True, rate=float(pl.op.decay_rate) if np.isfinite(pl.op.decay_rate) else None)
    print(f"{spec.N} bound state(s): " + ", ".join(f"{w:.10g}" for w in spec.omegas))
    return EXIT_OK


def run_checks(pl: Pipeline, run: Run | None) -> list[str]:
    """Decay, non-resonance, Fermi Golden Rule and repulsivity; returns failed names."""
    from .darboux import check_repulsive
    from .grid import Field
    from .profile import NonResonanceError

    rec = run.check if run is not None else (lambda *a, **k: None)
    failed = []
    rec("decay", True, rate=float(pl.op.decay_rate) if np.isfinite(pl.op.decay_rate) else None)
    spec = pl.spectrum
    try:
        cls = pl.classification
        rec("non-resonance", True, cutoff=cls.norm_cutoff, R_min=[list(m) for m in cls.R_min])
    except NonResonanceError as exc:
        rec("non-resonance", False, message=str(exc))
        failed.append("non-resonance")
        cls = None
    ladder = pl.ladder
    # a rung below the ladder's own round-off counts as identically zero
    scale = float(np.max(np.abs(pl.potential.values.real)))
    rep = check_repulsive(Field(pl.grid, ladder.potentials[-1]), tol_zero=max(1e-12, 1e-8 * scale))
    rec("repulsivity", rep.verdict, sup_violation=rep.sup_violation, nonzero=rep.is_nonzero)
    if not rep.verdict:
        failed.append("repulsivity")
    if cls is not None and spec.N >= 1 and cls.R_min:
        fgr = pl.fgr
        ok = fgr.holds
        table = [{"m": list(m), "lambda": float(l), "Gamma": float(G)} for m, l, G in zip(fgr.indices, fgr.lambdas, fgr.Gamma)]
        rec("fermi-golden-rule", ok, table=table)
        if not ok:
            failed.append("fermi-golden-rule")
    else:
        rec("fermi-golden-rule", True, table=[], note="no minimal resonant index")
    return failed


def cmd_certify(pl: Pipeline, run: Run, args) -> int:
    from .io import export_ladder, spectrum_to_csv

    spectrum_to_csv(pl.spectrum, run.path("spectrum.csv"))
    failed = run_checks(pl, run)
    for p in export_ladder(pl.ladder, run.out / "ladder"):
        run.files.append(p)
    for name, res in run.manifest["checks"].items():
        print(f"{name:20s} {'pass' if res['passed'] else 'FAIL'}")
    if failed:
        raise CheckFailure(failed)
    return EXIT_OK


def _index_tag(m) -> str:
    return "_".join(str(int(c)) for c in m)


def cmd_profile(pl: Pipeline, run: Run, args) -> int:
    from .io import field_to_csv, profile_manifest_to_csv

    prof = pl.profile
    fgr = pl.fgr if prof.R_min else None
    profile_manifest_to_csv(prof, fgr, run.path("profile.csv"))
    for m, f in sorted(prof.tilde_phi.items()):
        field_to_csv(f, run.path(f"fields/tilde_phi_{_index_tag(m)}.csv"))
    for m, f in sorted(prof.G.items()):
        field_to_csv(f, run.path(f"fields/G_{_index_tag(m)}.csv"))
    if fgr is not None:
        for m, G in zip(fgr.indices, fgr.Gamma):
            print(f"Gamma{m} = {G:.12g}")
    return EXIT_OK


_GNUPLOT_HEAD = """set datafile separator ','
set key autotitle columnhead
set xlabel 't'
"""


def _plot_scripts(run: Run, ts_name: str, N: int, indices):
    cols = [f"abs_z{j + 1}" for j in range(N)]
    lines = ", ".join(f"'{ts_name}' using 't':'{c}' with lines" for c in cols)
    run.path("plot_abs_z.gp").write_text(_GNUPLOT_HEAD + "set ylabel '|z_j|'\nplot " + lines + "\n")
    zm = ["abs_zm_" + _index_tag(m) for m in indices]
    if zm:
        lines = ", ".join(f"'{ts_name}' using 't':'{c}' with lines" for c in zm)
        run.path("plot_resonant.gp").write_text(_GNUPLOT_HEAD + "set logscale y\nset ylabel '|z^m|'\nplot " + lines + "\n")
    run.path("plot_energy.gp").write_text(
        _GNUPLOT_HEAD
        + "set ylabel 'mode energy'\n"
        + f"plot '{ts_name}' using 't':'E_phi' with lines, '{ts_name}' using 't':(column('E_phi') - column('A1')) with lines title 'E_phi - A1'\n"
    )


def monitor_rows(ts, indices, C_report: float = 10.0) -> list[dict]:
    """Per-sample virial monitor rows built from a time series with monitor columns."""
    t = ts.t
    if t.size < 3:
        raise ValueError("insufficient samples for a time derivative")
    I = ts.array("I")
    dI = np.gradient(I, t)
    res = np.zeros_like(t)
    for m in indices:
        res = res + ts.array("abs_zm_" + _index_tag(m)) ** 2
    wp = ts.array("w_prime_sq")
    maj = ts.array("w_weighted_sq") + res
    rows = []
    for k in range(t.size):
        rows.append(
            {
                "t": t[k],
                "dI_dt": dI[k],
                "w_prime_sq": wp[k],
                "majorant": maj[k],
                "holds": float(dI[k] + 0.5 * wp[k] <= C_report * maj[k]),
                "J": ts.array("J")[k],
                "xi_tilde_sigma": ts.array("xi_tilde_sigma")[k],
            }
        )
    return rows


MONITOR_COLUMNS = ["t", "dI_dt", "w_prime_sq", "majorant", "holds", "J", "xi_tilde_sigma"]


def cmd_simulate(pl: Pipeline, run: Run, args) -> int:
    from .dynamics import (
        Absorber,
        SelectionConfig,
        compare_reduced_pde,
        physical_part,
        run_selection_experiment,
        selection_report,
    )
    from .io import field_to_binary, rows_to_csv, write_json
    from .virial import partial_inversion_residual, quadrmain_sides

    if not args.force:
        failed = run_checks(pl, run)
        if failed:
            raise CheckFailure(failed)
    c = pl.cfg
    z0 = pl.z0()
    prof, fgr = pl.profile, pl.fgr
    run._write()
    if c.mode == "compare":
        cmp = pl._timed(
            "compare",
            lambda: compare_reduced_pde(z0, c.T, pl.op, prof, fgr, dt=c.dt, sample_interval=c.sample_interval,
                                        absorber=Absorber() if c.absorber else None),
        )
        N = prof.N
        cols = ["t"] + [f"pde_abs_z{j + 1}" for j in range(N)] + [f"reduced_abs_z{j + 1}" for j in range(N)]
        rows = [[t, *a, *b] for t, a, b in zip(cmp.t, cmp.abs_pde, cmp.abs_reduced)]
        rows_to_csv(run.path("comparison.csv"), cols, rows)
        write_json(run.path("report.json"), {"max_rel_dev": cmp.max_rel_dev, "failed": cmp.failed})
        print(f"max relative deviation of |z_j|: {cmp.max_rel_dev:.3e}")
        return EXIT_RUNTIME if cmp.failed else EXIT_OK

    scfg = SelectionConfig(
        z0=tuple(z0),
        T=c.T,
        dt=c.dt,
        sample_interval=c.sample_interval,
        absorber=Absorber() if c.absorber else None,
        bump=c.bump,
        snapshot_times=tuple(c.snapshots),
        monitors=c.monitors,
    )
    ladder = pl.ladder if c.monitors else None
    weights = pl.weights if c.monitors else None
    ts, snaps = pl._timed("simulate", lambda: run_selection_experiment(scfg, pl.op, prof, fgr, ladder, weights))
    ts.to_csv(run.path("timeseries.csv"))
    _plot_scripts(run, "timeseries.csv", prof.N, fgr.indices)
    index = []
    for t, (z, eta) in sorted(snaps.items()):
        name = f"snapshots/eta_{t:09.3f}.bin"
        field_to_binary(eta, run.path(name))
        index.append({"t": t, "file": name, "z": [[float(v.real), float(v.imag)] for v in z]})
    if index:
        write_json(run.path("snapshots/index.json"), index)
    report = selection_report(ts, fgr.indices) if len(ts.rows) > 1 else {}
    if c.monitors and len(ts.rows) >= 3:
        rows_to_csv(run.path("monitor.csv"), MONITOR_COLUMNS, monitor_rows(ts, fgr.indices))
        checks = []
        for t, (z, eta) in sorted(snaps.items()):
            Pc = physical_part(eta, pl.spectrum, scfg.absorber)
            lhs, rhs = quadrmain_sides(Pc, pl.op, pl.weights)
            checks.append({"t": t, "quadr_lhs": lhs, "quadr_rhs": rhs,
                           "partial_inversion": partial_inversion_residual(Pc, pl.ladder, pl.weights)})
        if checks:
            rows_to_csv(run.path("identities.csv"), ["t", "quadr_lhs", "quadr_rhs", "partial_inversion"], checks)
    report["failed"] = ts.failed
    report["message"] = ts.message
    write_json(run.path("report.json"), report)
    if ts.failed:
        print(f"run stopped early: {ts.message}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({k: report[k] for k in ("surviving_index", "product_ratio", "max_ratio") if k in report}))
    return EXIT_OK


def cmd_monitor(pl: Pipeline, run: Run, args) -> int:
    """Recompute virial monitors from stored snapshots and an existing time series."""
    from .dynamics import Absorber, Timeseries, physical_part
    from .io import field_from_binary, rows_to_csv
    from .virial import quadrmain_sides, transform_vars, virial_I, virial_J

    src = Path(args.run_dir) if args.run_dir else run.out
    idx_path = src / "snapshots" / "index.json"
    if not idx_path.is_file():
        raise ConfigError(f"no snapshots in {src}")
    index = json.loads(idx_path.read_text())
    rows = []
    for item in index:
        eta = field_from_binary(src / item["file"], pl.grid)
        Pc = physical_part(eta, pl.spectrum, Absorber() if pl.cfg.absorber else None)
        tv = transform_vars(Pc, pl.ladder, pl.weights)
        lhs, rhs = quadrmain_sides(Pc, pl.op, pl.weights)
        rows.append({"t": item["t"], "I": virial_I(Pc, pl.weights), "J": virial_J(tv.v, pl.weights),
                     "quadr_lhs": lhs, "quadr_rhs": rhs})
    rows_to_csv(run.path("snapshot_monitor.csv"), ["t", "I", "J", "quadr_lhs", "quadr_rhs"], rows)
    ts_path = src / "timeseries.csv"
    if ts_path.is_file():
        with open(ts_path, newline="") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            ts = Timeseries(columns, [[float(v) for v in r] for r in reader])
        if "I" in ts.columns:
            from .profile import classify_indices

            idx = [m for m in classify_indices(pl.spectrum.omegas).R_min]
            rows_to_csv(run.path("monitor.csv"), MONITOR_COLUMNS, monitor_rows(ts, idx))
    worst = max((abs(r["quadr_lhs"] - r["quadr_rhs"]) for r in rows), default=0.0)
    print(f"{len(rows)} snapshot(s); largest identity mismatch {worst:.3e}")
    return EXIT_OK


def _sweep_worker(job):
    command, cfg_path, out_dir, force = job
    argv = [command, "--config", str(cfg_path), "--out", str(out_dir)]
    if force:
        argv.append("--force")
    return main(argv, _env_out=False)


def cmd_sweep(pl: Pipeline, run: Run, args) -> int:
    c = pl.cfg
    if not c.sweep_key or not c.sweep_values:
        raise ConfigError("sweep needs [sweep] key and values")
    sec, _, key = c.sweep_key.partition(".")
    if not key:
        raise ConfigError("sweep key must look like section.key")
    base = _parser_from_text(args.config_text)
    if base.has_section("sweep"):
        base.remove_section("sweep")
    jobs = []
    for i, val in enumerate(c.sweep_values):
        cp = _parser_from_text(args.config_text)
        cp.remove_section("sweep")
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, val)
        config_from_parser(cp, args.config_dir)  # validate before launching anything
        d = run.out / f"run_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        p = d / "config.ini"
        with open(p, "w") as fh:
            cp.write(fh)
        run.files.append(p)
        jobs.append((c.sweep_command, p, d, args.force))
    workers = max(1, int(args.threads or 1))
    if workers == 1:
        codes = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            codes = list(ex.map(_sweep_worker, jobs))
    run.manifest["sweep"] = [{"value": v, "dir": f"run_{i:03d}", "exit": code} for i, (v, code) in enumerate(zip(c.sweep_values, codes))]
    return max(codes) if codes else EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "certify": cmd_certify,
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "monitor": cmd_monitor,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nlslab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"nlslab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="INI configuration file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="use a shipped configuration")
        s.add_argument("--out", type=Path, default=Path("nlslab_out"), help="output directory")
        s.add_argument("--force", action="store_true", help="run even if assumption checks fail")
        s.add_argument("--threads", type=int, default=1, help="worker processes for sweep")
        if name == "monitor":
            s.add_argument("--run-dir", dest="run_dir", type=Path, help="directory of a finished simulate run")
    return p


def main(argv=None, _env_out: bool = True) -> int:
    args = build_parser().parse_args(argv)
    out = Path(os.environ["NLSLAB_OUT"]) if _env_out and os.environ.get("NLSLAB_OUT") else args.out
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            args.config_text = args.config.read_text()
            args.config_dir = args.config.parent
        elif args.preset is not None:
            cfg = preset_config(args.preset)
            args.config_text = PRESETS[args.preset]
            args.config_dir = Path(".")
        else:
            cfg = ExperimentConfig()
            args.config_text = ""
            args.config_dir = Path(".")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .profile import NonResonanceError
    from .spectral import AssumptionError

    run = Run(out, cfg, args.command)
    pl = Pipeline(cfg)
    status, code, msg = "ok", EXIT_OK, ""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = COMMANDS[args.command](pl, run, args)
        status = "ok" if code == EXIT_OK else "failed"
    except ConfigError as exc:
        status, code, msg = "config-error", EXIT_CONFIG, str(exc)
        print(f"config error: {exc}", file=sys.stderr)
    except CheckFailure as exc:
        status, code, msg = "check-failed", EXIT_CHECK, str(exc)
        print(f"assumption check failed: {', '.join(exc.names)}", file=sys.stderr)
    except (AssumptionError, NonResonanceError) as exc:
        status, code, msg = "check-failed", EXIT_CHECK, str(exc)
        print(f"assumption check failed: {exc}", file=sys.stderr)
    except Exception as exc:  # anything else is a runtime failure
        status, code, msg = "runtime-error", EXIT_RUNTIME, f"{type(exc).__name__}: {exc}"
        print(f"runtime failure: {msg}", file=sys.stderr)
    run.finalize(status, pl, msg)
    return code


if __name__ == "__main__":
    sys.exit(main())
