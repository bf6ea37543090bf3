"""Configuration-driven experiment runner.

Usage::

    python -m apchern run CONFIG.ini [--L 40 --seed 1 ...]
    python -m apchern run --experiment verify --L 20
    python -m apchern validate CONFIG.ini

A config file is INI with the sections listed in ``SCHEMA``.  Every key can
also be set through an environment variable ``APC_<KEY>`` (upper case) or a
command-line flag ``--<key>`` with underscores written as dashes.  Precedence
is flag > environment > file > default.

Exit status: 0 on success, 2 when the configuration is invalid, 3 when a
numerical step fails.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .algebra import CovariantKernel
from .errors import ApcError, ConfigInvalid, InvalidParameter
from .hamiltonian import FluxIndex, HoppingRule, build_chiral_chain, resolve_flux
from .invariants import (CHERN_SIGN, hall_conductance_map, localizer_index_odd,
                         residue_trace_check, winding_number, write_map_csv)
from .pattern import (TorusGeometry, generate_pattern, load_pattern, periodic_lattice,
                      save_pattern, verify_delone)
from .spectral import spectrum_butterfly, write_butterfly_csv, write_gap_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
EXPERIMENTS = ("generate", "spectrum", "chern", "map", "winding", "verify", "residue")
ENV_PREFIX = "APC_"


def _opt_float(text):
    text = str(text).strip()
    return None if text.lower() in ("", "none") else float(text)


def _opt_int(text):
    text = str(text).strip()
    return None if text.lower() in ("", "none") else int(text)


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (section, parser, default)
SCHEMA = {
    "experiment": ("run", str, "verify"),
    "out": ("run", str, "apc_out"),
    "threads": ("run", int, 1),
    "L": ("geometry", float, 20.0),
    "d": ("geometry", int, 2),
    "lattice": ("pattern", _bool, False),
    "d_min": ("pattern", float, 0.83),
    "d_max": ("pattern", _opt_float, 4.0),
    "seed": ("pattern", int, 0),
    "pattern_file": ("pattern", str, ""),
    "beta": ("model", float, 3.0),
    "range": ("model", _opt_float, None),
    "onsite": ("model", _opt_float, 0.0),
    "delta": ("model", _floats, [0.5, -0.5]),
    "intra": ("model", float, 0.0),
    "flux_min": ("sweep", int, 0),
    "flux_max": ("sweep", _opt_int, None),
    "theta": ("sweep", _opt_float, None),
    "ef_min": ("sweep", float, 0.1),
    "ef_max": ("sweep", float, 0.1),
    "ef_steps": ("sweep", int, 1),
    "window_min": ("sweep", _opt_float, None),
    "window_max": ("sweep", _opt_float, None),
    "gap_count": ("sweep", int, 2),
    "gap_method": ("sweep", str, "spacing"),
    "gap_levels": ("sweep", int, 10),
    "gap_ratio": ("sweep", float, 3.0),
    "gap_trim": ("sweep", float, 0.0),
    "radii": ("residue", _floats, []),
    "quantization_tol": ("tolerances", float, 1e-3),
}


@dataclass
class RunConfig:
    experiment: str = "verify"
    out: str = "apc_out"
    threads: int = 1
    L: float = 20.0
    d: int = 2
    lattice: bool = False
    d_min: float = 0.83
    d_max: float | None = 4.0
    seed: int = 0
    pattern_file: str = ""
    beta: float = 3.0
    range: float | None = None
    onsite: float | None = 0.0
    delta: list = field(default_factory=lambda: [0.5, -0.5])
    intra: float = 0.0
    flux_min: int = 0
    flux_max: int | None = None
    theta: float | None = None
    ef_min: float = 0.1
    ef_max: float = 0.1
    ef_steps: int = 1
    window_min: float | None = None
    window_max: float | None = None
    gap_count: int = 2
    gap_method: str = "spacing"
    gap_levels: int = 10
    gap_ratio: float = 3.0
    gap_trim: float = 0.0
    radii: list = field(default_factory=list)
    quantization_tol: float = 1e-3

    def check(self):
        """Raise :class:`ConfigInvalid` listing every violated constraint."""
        problems = []
        if self.experiment not in EXPERIMENTS:
            problems.append(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not self.L >= 4:
            problems.append(f"L must be at least 4, got {self.L}")
        if self.d not in (1, 2, 3):
            problems.append(f"d must be 1, 2 or 3, got {self.d}")
        if self.experiment == "winding" and self.d != 1:
            problems.append("winding runs on one-dimensional chains (d = 1)")
        if self.experiment in ("spectrum", "chern", "map") and self.d != 2:
            problems.append(f"{self.experiment} needs d = 2")
        if self.threads < 1:
            problems.append("threads must be positive")
        top = int(self.L // 2) if self.flux_max is None else self.flux_max
        if self.theta is None and top < self.flux_min:
            problems.append("flux grid is empty (flux_max < flux_min)")
        if self.ef_steps < 1 or self.ef_max < self.ef_min:
            problems.append("Fermi-energy grid is empty")
        if self.experiment == "winding" and not self.delta:
            problems.append("delta grid is empty")
        if not self.beta > 0:
            problems.append("beta must be positive")
        if not 0 <= self.d_min <= 1:
            problems.append("d_min must lie in [0, 1]")
        if self.d_max is not None and not self.d_max > self.d_min:
            problems.append("d_max must exceed d_min")
        if self.gap_method not in ("spacing", "density"):
            problems.append(f"gap_method must be 'spacing' or 'density', got {self.gap_method!r}")
        if self.gap_count < 1 or self.gap_levels < 1 or not self.gap_ratio > 1:
            problems.append("gap_count and gap_levels must be positive and gap_ratio must exceed 1")
        if not 0 <= self.gap_trim < 0.5:
            problems.append("gap_trim must lie in [0, 0.5)")
        if problems:
            raise ConfigInvalid("; ".join(problems))
        return self

    def flux_indices(self):
        if self.theta is not None:
            return [resolve_flux(self.theta, self.L).n]
        top = int(self.L // 2) if self.flux_max is None else self.flux_max
        return list(range(self.flux_min, top + 1))

    def ef_grid(self):
        if self.ef_steps == 1:
            return [self.ef_min]
        return [float(v) for v in np.linspace(self.ef_min, self.ef_max, self.ef_steps)]

    def rule(self):
        return HoppingRule(beta=self.beta, cutoff=self.range, onsite=self.onsite)


def _parse_value(key, raw):
    parser = SCHEMA[key][1]
    try:
        return parser(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad value for {key!r}: {raw!r} ({exc})") from None


def _read_file(path):
    """Return ``({key: raw}, unknown_keys)`` for an INI file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"config file {path} not found")
    text = path.read_text()
    if not text.strip():
        raise ConfigInvalid(f"config file {path} is empty")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from None
    values, unknown = {}, []
    for section in cp.sections():
        for key, raw in cp.items(section):
            norm = key.replace("-", "_")
            if norm not in SCHEMA:
                unknown.append(f"{section}.{key}")
            elif SCHEMA[norm][0] != section:
                unknown.append(f"{section}.{key} (belongs in [{SCHEMA[norm][0]}])")
            else:
                values[norm] = raw
    if not values and not unknown:
        raise ConfigInvalid(f"config file {path} sets no keys")
    return values, unknown


def _env_values(environ):
    out = {}
    for key in SCHEMA:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = environ[name]
    return out


def load_config(path=None, overrides=None, environ=None) -> RunConfig:
    """Merge defaults, file, environment and explicit overrides; unknown keys are an error."""
    raw = {}
    if path is not None:
        values, unknown = _read_file(path)
        if unknown:
            raise ConfigInvalid(f"unknown keys: {', '.join(unknown)}")
        raw.update(values)
    raw.update(_env_values(os.environ if environ is None else environ))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {k: _parse_value(k, v) if isinstance(v, str) else v for k, v in raw.items()}
    return RunConfig(**kwargs).check()


def validate(path) -> dict:
    """Parse and check a config file without running it."""
    values, unknown = _read_file(path)
    report = {"path": str(path), "valid": True, "unknown_keys": unknown, "errors": []}
    if unknown:
        report["valid"] = False
        report["errors"].append(f"unknown keys: {', '.join(unknown)}")
    try:
        kwargs = {k: _parse_value(k, v) for k, v in values.items()}
        RunConfig(**kwargs).check()
    except ConfigInvalid as exc:
        report["valid"] = False
        report["errors"].append(str(exc))
    return report


# ----------------------------------------------------------------------------
# experiments

def _pattern(cfg: RunConfig):
    if cfg.pattern_file:
        return load_pattern(cfg.pattern_file)
    geo = TorusGeometry(cfg.L, cfg.d)
    if cfg.lattice:
        return periodic_lattice(geo)
    return generate_pattern(geo, cfg.d_min, cfg.d_max, seed=cfg.seed)


def _write_csv(path, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _exp_generate(cfg, out, manifest):
    pattern = _pattern(cfg)
    save_pattern(pattern, out / "pattern.txt")
    _write_csv(out / "points.csv", [f"x{j + 1}" for j in range(pattern.d)], pattern.points.tolist())
    manifest["pattern"] = _pattern_info(pattern)
    return ["pattern.txt", "points.csv"], _plot_points(pattern.d)


def _exp_verify(cfg, out, manifest):
    pattern = _pattern(cfg)
    r = pattern.d_min / 2 if pattern.d_min > 0 else 0.25
    R = cfg.d_max if cfg.d_max is not None else 4.0
    rep = verify_delone(pattern, r, R)
    (out / "delone.json").write_text(json.dumps({"r": r, "R": R, **rep.as_dict(),
                                                  "is_delone": rep.is_delone}, indent=2) + "\n")
    _write_csv(out / "points.csv", [f"x{j + 1}" for j in range(pattern.d)], pattern.points.tolist())
    manifest["pattern"] = _pattern_info(pattern)
    manifest["delone"] = {"is_delone": rep.is_delone, "r": r, "R": R}
    return ["delone.json", "points.csv"], _plot_points(pattern.d)


def _exp_spectrum(cfg, out, manifest):
    pattern = _pattern(cfg)
    window = None
    if cfg.window_min is not None or cfg.window_max is not None:
        window = (-math.inf if cfg.window_min is None else cfg.window_min,
                  math.inf if cfg.window_max is None else cfg.window_max)
    options = {"trim": cfg.gap_trim}
    if cfg.gap_method == "density":
        options.update(levels=cfg.gap_levels, ratio=cfg.gap_ratio)
    rows = spectrum_butterfly(pattern, cfg.rule(), cfg.flux_indices(), window=window,
                              gap_count=cfg.gap_count, threads=cfg.threads,
                              gap_method=cfg.gap_method, **options)
    write_butterfly_csv(rows, out / "butterfly.csv")
    write_gap_csv(rows, out / "gaps.csv")
    manifest["pattern"] = _pattern_info(pattern)
    return ["butterfly.csv", "gaps.csv"], PLOT_BUTTERFLY


def _exp_map(cfg, out, manifest, name="map.csv"):
    pattern = _pattern(cfg)
    cells = hall_conductance_map(pattern, cfg.rule(), cfg.flux_indices(), cfg.ef_grid(),
                                 threads=cfg.threads)
    write_map_csv(cells, out / name)
    manifest["pattern"] = _pattern_info(pattern)
    manifest["flux"] = [{"n": n, "theta": FluxIndex(n, cfg.L).theta} for n in cfg.flux_indices()]
    manifest["quantized"] = all(c.deviation <= cfg.quantization_tol for c in cells)
    return [name], PLOT_MAP


def _exp_chern(cfg, out, manifest):
    return _exp_map(cfg, out, manifest, name="chern.csv")


def _exp_winding(cfg, out, manifest):
    pattern = _pattern(cfg)
    rule = HoppingRule(beta=cfg.beta, cutoff=cfg.range)
    rows = []
    for delta in cfg.delta:
        rep = winding_number(build_chiral_chain(pattern, rule, delta, intra=cfg.intra))
        idx = localizer_index_odd(build_chiral_chain(pattern, rule, delta, intra=cfg.intra,
                                                     boundary="open"))
        rows.append([float(delta), rep.value, rep.nearest_integer, rep.deviation, idx,
                     rep.diagnostics["gap"]])
    _write_csv(out / "winding.csv", ["delta", "winding", "nearest_int", "deviation",
                                     "localizer_index", "gap"], rows)
    manifest["pattern"] = _pattern_info(pattern)
    return ["winding.csv"], PLOT_WINDING


def _exp_residue(cfg, out, manifest):
    pattern = _pattern(cfg)
    radii = cfg.radii or [pattern.L / 6, pattern.L / 3, 0.49 * pattern.L]
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    kernels = {"unit": CovariantKernel.unit(pattern),
               "random_positive": CovariantKernel(pattern, np.diag(rng.uniform(0.5, 1.5, pattern.n)))}
    rows = []
    for name, f in kernels.items():
        rep = residue_trace_check(f, radii)
        rows.append([name, rep["lhs"], rep["rhs_estimate"], rep["relative_error"], rep["fit_residual"]])
    _write_csv(out / "residue.csv", ["kernel", "lhs", "rhs_estimate", "relative_error",
                                     "fit_residual"], rows)
    manifest["pattern"] = _pattern_info(pattern)
    manifest["radii"] = radii
    return ["residue.csv"], None


RUNNERS = {"generate": _exp_generate, "verify": _exp_verify, "spectrum": _exp_spectrum,
           "chern": _exp_chern, "map": _exp_map, "winding": _exp_winding, "residue": _exp_residue}


def _pattern_info(p):
    return {"n": p.n, "L": p.L, "d": p.d, "kind": p.kind, "seed": p.seed, "d_min": p.d_min,
            "d_max": p.d_max, "fingerprint": p.fingerprint()}


def _plot_points(d):
    if d == 1:
        return "set datafile separator ','\nset key autotitle columnhead\nplot 'points.csv' using 1:(0) with points pt 7 ps 0.4\n"
    return ("set datafile separator ','\nset key autotitle columnhead\nset size ratio -1\n"
            "plot 'points.csv' using 1:2 with points pt 7 ps 0.3\n")


PLOT_BUTTERFLY = """set datafile separator ','
set key autotitle columnhead
set xlabel 'theta'
set ylabel 'E'
plot 'butterfly.csv' using 2:4 with dots notitle
"""

PLOT_MAP = """set datafile separator ','
set key autotitle columnhead
set xlabel 'theta'
set ylabel 'E_F'
set view map
splot 'map.csv' using 2:3:4 with points pt 5 ps 0.6 palette notitle
"""

PLOT_WINDING = """set datafile separator ','
set key autotitle columnhead
set xlabel 'delta'
plot 'winding.csv' using 1:2 with linespoints title 'winding', '' using 1:5 with points title 'localizer'
"""


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run(cfg: RunConfig) -> int:
    """Execute one experiment; writes CSV tables, ``manifest.json`` and ``plot.gp``."""
    cfg.check()
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigInvalid(f"output directory {out} is not writable ({exc})") from None
    manifest = {
        "config": asdict(cfg),
        "calibration": {"chern_sign": CHERN_SIGN, "chern_constant": "-2*pi*i",
                        "winding_normalization": "Tr(u^* [X, u]) / L",
                        "flux_grid": "theta_n = 4*pi*n/L"},
        "versions": {"apchern": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
    }
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        files, plot = RUNNERS[cfg.experiment](cfg, out, manifest)
    manifest["wall_time_s"] = time.perf_counter() - start
    seen = []
    for w in caught:
        entry = f"{w.category.__name__}: {w.message}"
        if entry not in seen:
            seen.append(entry)
            print(f"warning: {entry}", file=sys.stderr)
    manifest["warnings"] = seen
    if plot:
        (out / "plot.gp").write_text(plot)
        files = files + ["plot.gp"]
    manifest["outputs"] = {name: _sha256(out / name) for name in files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing

def _add_flags(p):
    p.add_argument("config", nargs="?", help="INI configuration file")
    for key, (_, parser, _) in SCHEMA.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar=key.upper())


def build_parser():
    parser = argparse.ArgumentParser(prog="python -m apchern", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_flags(sub.add_parser("run", help="run an experiment"))
    v = sub.add_parser("validate", help="check a configuration without running it")
    v.add_argument("config")
    return parser


def _provenance(exc):
    """Innermost package module on the traceback of ``exc``."""
    where = "apchern"
    tb = exc.__traceback__
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("apchern."):
            where = name
        tb = tb.tb_next
    return where


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            report = validate(args.config)
            print(json.dumps(report, indent=2))
            return EXIT_OK if report["valid"] else EXIT_INVALID
        overrides = {k: getattr(args, k) for k in SCHEMA}
        cfg = load_config(args.config, overrides)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg)
    except (ConfigInvalid, InvalidParameter) as exc:
        print(f"invalid parameter: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ApcError, np.linalg.LinAlgError, FloatingPointError) as exc:
        where = _provenance(exc)
        print(f"numerical failure in {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
