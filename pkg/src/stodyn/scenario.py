"""Scenario files: flat TOML in, fully resolved lockfiles out.

A scenario names a mode, a system, and the numbers a run needs. Loading
validates against a per-mode schema, fills every default, and can echo
the result as a canonical lockfile: sections in a fixed order, keys
sorted, floats in shortest round-trip form. Loading a lockfile and
re-echoing it reproduces the file byte for byte, which is what makes a
run directory self-describing.
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import tomli

from .engine import SystemSpec
from .errors import ValidationError
from .expr import parse as parse_expr
from .noise import NoiseSpec
from .slow_manifold import SlowFastSpec

MODES = ("simulate", "fokker-planck", "mppp", "mean-portrait",
         "first-passage", "bifurcation-scan", "slow-manifold")

DEFAULT_SEED = 1729

REQUIRED = object()

# field kinds: int, float, str, bool, numlist (floats), intpair is not
# needed, strlist, matrix (rows of floats), exprlist / exprmatrix are
# validated as parseable expression strings
_RUN = {
    "name": ("str", REQUIRED),
    "mode": ("str", REQUIRED),
    "seed": ("int", DEFAULT_SEED),
    "jobs": ("int", 1),
}
_SYSTEM = {
    "drift": ("exprlist", REQUIRED),
    "sigma": ("exprmatrix", REQUIRED),
    "x0": ("numlist", REQUIRED),
}
_NOISE = {
    "family": ("str", "brownian"),
    "alpha": ("float", 2.0),
    "beta": ("float", 0.0),
}
_TIME = {
    "t_final": ("float", REQUIRED),
    "dt": ("float", REQUIRED),
}
_GRID = {
    "a": ("float", REQUIRED),
    "b": ("float", REQUIRED),
    "n": ("int", 256),
}
_SCHEMAS = {
    "simulate": {
        "run": _RUN, "system": _SYSTEM, "system.params": None,
        "noise": _NOISE, "time": _TIME,
        "ensemble": {
            "m_paths": ("int", 10000),
            "retain": ("int", 1000),
            "quantiles": ("numlist", [0.05, 0.5, 0.95]),
            "out_every": ("int", 0),   # 0: pick from step count
        },
    },
    "fokker-planck": {
        "run": _RUN, "system": _SYSTEM, "system.params": None,
        "noise": _NOISE, "time": _TIME, "grid": _GRID,
        "density": {
            "width": ("float", 0.0),      # 0: default blob width
            "radius": ("float", 0.0),     # 0: default b - a
            "quad_ratio": ("float", 1.12),
            "core_cut": ("float", 2.0),
            "renormalize": ("str", "never"),
            "out_every": ("int", 0),
        },
    },
    "mppp": {
        "run": _RUN, "system": _SYSTEM, "system.params": None,
        "noise": _NOISE, "grid": _GRID,
        "portrait": {
            "horizon": ("float", REQUIRED),
            "probes": ("int", 9),
            "dt": ("float", 0.0),         # 0: solver picks
        },
    },
    "first-passage": {
        "run": _RUN, "system": _SYSTEM, "system.params": None,
        "noise": _NOISE, "time": _TIME,
        "passage": {
            "domain": ("numlist", REQUIRED),
            "m_paths": ("int", 10000),
            "threshold": ("float", math.nan),  # nan: no well tracking
            "band": ("float", 0.1),
            "out_points": ("int", 200),
        },
    },
    "bifurcation-scan": {
        "run": _RUN, "system": _SYSTEM, "system.params": None,
        "noise": _NOISE, "grid": _GRID,
        "portrait": {
            "horizon": ("float", REQUIRED),
            "probes": ("int", 9),
            "dt": ("float", 0.0),
        },
        "scan": {
            "param": ("str", REQUIRED),
            "values": ("numlist", REQUIRED),
        },
    },
    "slow-manifold": {
        "run": _RUN,
        "slowfast": {
            "a": ("matrix", REQUIRED),
            "b": ("matrix", REQUIRED),
            "f": ("exprlist", REQUIRED),
            "g": ("exprlist", REQUIRED),
            "eps": ("float", REQUIRED),
            "sigma": ("float", 0.0),
        },
        "manifold": {
            "xi_lo": ("float", REQUIRED),
            "xi_hi": ("float", REQUIRED),
            "xi_n": ("int", 65),
            "tol": ("float", 1e-11),
        },
        "reduce": {
            "x0": ("float", REQUIRED),
            "y0_offset": ("float", 0.0),
            "t_final": ("float", REQUIRED),
            "dt": ("float", 0.001),
        },
    },
}
_SCHEMAS["mean-portrait"] = _SCHEMAS["mppp"]

_SECTION_ORDER = ("run", "system", "system.params", "noise", "time", "grid",
                  "density", "ensemble", "portrait", "passage", "scan",
                  "slowfast", "manifold", "reduce")


def _check_expr(where, s):
    if not isinstance(s, str):
        raise ValidationError(f"{where}: expression must be a string, "
                              f"got {type(s).__name__}")
    try:
        parse_expr(s)
    except Exception as exc:
        raise ValidationError(f"{where}: bad expression {s!r}: {exc}")
    return s


def _coerce(where, kind, value):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{where}: expected an integer, "
                                  f"got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ValidationError(f"{where}: expected a string, got {value!r}")
        return value
    if kind == "numlist":
        if not isinstance(value, list) or not value or \
                any(isinstance(v, bool) or not isinstance(v, (int, float))
                    for v in value):
            raise ValidationError(f"{where}: expected a list of numbers")
        return [float(v) for v in value]
    if kind == "matrix":
        if not isinstance(value, list) or not value or \
                any(not isinstance(row, list) for row in value):
            raise ValidationError(f"{where}: expected rows of numbers")
        return [_coerce(where, "numlist", row) for row in value]
    if kind == "exprlist":
        if not isinstance(value, list) or not value:
            raise ValidationError(f"{where}: expected a list of expressions")
        return [_check_expr(where, s) for s in value]
    if kind == "exprmatrix":
        if not isinstance(value, list) or not value or \
                any(not isinstance(row, list) for row in value):
            raise ValidationError(f"{where}: expected rows of expressions")
        return [[_check_expr(where, s) for s in row] for row in value]
    raise AssertionError(kind)


@dataclass
class Scenario:
    """One resolved run configuration; `tables` has every default filled."""

    tables: dict

    @property
    def name(self):
        return self.tables["run"]["name"]

    @property
    def mode(self):
        return self.tables["run"]["mode"]

    @property
    def seed(self):
        return self.tables["run"]["seed"]

    @property
    def jobs(self):
        return self.tables["run"]["jobs"]

    def section(self, name):
        return self.tables[name]

    def build_system(self):
        sy = self.tables["system"]
        no = self.tables["noise"]
        if no["family"] == "brownian":
            noise = NoiseSpec(family="brownian")
        else:
            noise = NoiseSpec(family="stable", alpha=no["alpha"],
                              beta=no["beta"])
        params = self.tables.get("system.params", {})
        return SystemSpec(drift=tuple(sy["drift"]),
                          sigma=tuple(tuple(r) for r in sy["sigma"]),
                          noise=noise, params=dict(params))

    def build_slowfast(self):
        sf = self.tables["slowfast"]
        return SlowFastSpec(a=tuple(map(tuple, sf["a"])),
                            b=tuple(map(tuple, sf["b"])),
                            f=tuple(sf["f"]), g=tuple(sf["g"]),
                            eps=sf["eps"], sigma=sf["sigma"])

    def canonical_text(self):
        return _emit_toml(self.tables)

    @property
    def scenario_hash(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def _resolve(raw, path):
    run = raw.get("run")
    if not isinstance(run, dict):
        raise ValidationError(f"{path}: missing [run] section")
    mode = run.get("mode")
    if mode not in MODES:
        raise ValidationError(
            f"{path}: run.mode must be one of {', '.join(MODES)}; "
            f"got {mode!r}")
    schema = _SCHEMAS[mode]

    flat = {}
    for sec, body in raw.items():
        if not isinstance(body, dict):
            raise ValidationError(f"{path}: top-level key {sec!r} must be "
                                  "a section")
        sub_keys = [k for k, v in body.items() if isinstance(v, dict)]
        for k in sub_keys:
            flat[f"{sec}.{k}"] = body[k]
        flat[sec] = {k: v for k, v in body.items() if k not in sub_keys}

    unknown = set(flat) - set(schema)
    if unknown:
        raise ValidationError(
            f"{path}: sections {sorted(unknown)} not used by mode {mode!r}")

    tables = {}
    for sec, fields in schema.items():
        body = flat.get(sec, {})
        if fields is None:
            # free-form numeric table (system parameters)
            for k, v in body.items():
                body[k] = _coerce(f"{sec}.{k}", "float", v)
            if body:
                tables[sec] = dict(sorted(body.items()))
            continue
        extra = set(body) - set(fields)
        if extra:
            raise ValidationError(
                f"{path}: unknown keys {sorted(extra)} in [{sec}]")
        out = {}
        for key, (kind, default) in fields.items():
            if key in body:
                out[key] = _coerce(f"{sec}.{key}", kind, body[key])
            elif default is REQUIRED:
                raise ValidationError(f"{path}: [{sec}] requires {key!r} "
                                      f"in mode {mode!r}")
            else:
                out[key] = default if not isinstance(default, list) \
                    else list(default)
        tables[sec] = out

    sc = Scenario(tables)
    _validate_semantics(sc, path)
    return sc


def _validate_semantics(sc, path):
    t = sc.tables
    if t["run"]["jobs"] < 1:
        raise ValidationError(f"{path}: run.jobs must be >= 1")
    if sc.mode == "slow-manifold":
        sc.build_slowfast()
        man = t["manifold"]
        if not man["xi_lo"] < man["xi_hi"]:
            raise ValidationError(f"{path}: manifold.xi_lo must be below "
                                  "xi_hi")
        if man["xi_n"] < 2:
            raise ValidationError(f"{path}: manifold.xi_n must be >= 2")
        return
    system = sc.build_system()
    if len(t["system"]["x0"]) != system.dim:
        raise ValidationError(
            f"{path}: system.x0 has {len(t['system']['x0'])} entries for "
            f"a {system.dim}-dimensional system")
    if "grid" in t and not t["grid"]["a"] < t["grid"]["b"]:
        raise ValidationError(f"{path}: grid.a must be below grid.b")
    if "time" in t:
        if t["time"]["dt"] <= 0 or t["time"]["t_final"] <= 0:
            raise ValidationError(f"{path}: time.dt and time.t_final must "
                                  "be positive")
    if sc.mode == "first-passage":
        dom = t["passage"]["domain"]
        if len(dom) != 2 or not dom[0] < dom[1]:
            raise ValidationError(f"{path}: passage.domain must be [lo, hi]")
    if sc.mode == "bifurcation-scan":
        vals = t["scan"]["values"]
        if len(vals) < 2 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValidationError(
                f"{path}: scan.values must be >= 2 strictly increasing "
                "numbers")
        name = t["scan"]["param"]
        if name not in ("alpha", "beta") and \
                name not in t.get("system.params", {}):
            raise ValidationError(
                f"{path}: scan.param {name!r} is neither alpha/beta nor a "
                "declared system parameter")


def load_scenario(path, *, overrides=None, lock_path=None):
    """Parse, validate, and resolve a scenario file.

    overrides: {'seed': int, 'jobs': int} applied before resolution so the
    lockfile reflects what actually ran. lock_path: where to echo the
    resolved scenario; the caller picks a location inside its output
    directory (nothing is written when omitted).
    """
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"scenario file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: TOML parse error: {exc}")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw.setdefault("run", {})[key] = value
    sc = _resolve(raw, path)
    if lock_path is not None:
        with open(lock_path, "w", newline="\n") as fh:
            fh.write(sc.canonical_text())
    return sc


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            raise ValidationError("cannot write infinite values")
        return repr(v)
    if isinstance(v, str):
        body = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{body}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt_value(x) for x in v) + "]"
    raise ValidationError(f"cannot write value of type {type(v).__name__}")


def _emit_toml(tables):
    lines = []
    for sec in _SECTION_ORDER:
        if sec not in tables or not tables[sec]:
            continue
        lines.append(f"[{sec}]")
        for key in sorted(tables[sec]):
            lines.append(f"{key} = {_fmt_value(tables[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def format_float(v):
    """Fixed CSV float format: 17 significant digits, round-trip exact."""
    return "%.17g" % v


def write_csv(path, header, rows):
    """Deterministic CSV: %.17g floats, raw strings, newline-terminated."""
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [c if isinstance(c, str) else format_float(c)
                     for c in row]
            fh.write(",".join(cells) + "\n")


def bundled_dir():
    from pathlib import Path
    return Path(__file__).resolve().parent / "scenarios"


def list_bundled():
    return sorted(p.stem for p in bundled_dir().glob("*.toml"))


def bundled_path(name):
    p = bundled_dir() / f"{name}.toml"
    if not p.exists():
        raise ValidationError(
            f"no bundled scenario {name!r}; have {', '.join(list_bundled())}")
    return p
