"""Command line front end: one subcommand per run mode, plus validate.

Every run resolves its scenario, echoes the result as `<name>.resolved`
inside the output directory, writes the mode's CSV/JSON artifacts there,
and always leaves a run.json recording status, seed, scenario hash, wall
time, and library versions. Nothing is written anywhere else.

Exit codes: 0 success, 1 bad input (scenario or arguments), 2 numerical
failure (instability, non-convergence, coverage or horizon problems).
"""

import argparse
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .backend import active_backend
from .engine import first_passage_stats, simulate_ensemble
from .errors import StodynError, ValidationError
from .fokker_planck import (Grid1D, build_adjoint_generator, delta_initial,
                            evolve_density)
from .noise import NoiseSpec, make_noise_path
from .portraits import bifurcation_scan, mean_portrait, most_probable_portrait
from .scenario import (MODES, bundled_path, list_bundled, load_scenario,
                       write_csv)
from .slow_manifold import (full_slowfast_integrate, lyapunov_perron_solve,
                            reduced_slow_integrate, truncated_h, validate_gap)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _resolve_scenario_arg(arg):
    p = Path(arg)
    if p.exists():
        return p
    if "/" not in arg and "\\" not in arg and not arg.endswith(".toml"):
        try:
            return bundled_path(arg)
        except ValidationError:
            pass
    raise ValidationError(
        f"scenario file not found: {arg} "
        f"(bundled names: {', '.join(list_bundled())})")


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (np.floating, np.integer)):
        return _json_safe(float(v))
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def _write_json(path, payload):
    with open(path, "w", newline="\n") as fh:
        json.dump(_json_safe(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions():
    return {"python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "stodyn": __version__,
            "backend": active_backend()}


def _run_simulate(sc, out, warnings):
    en = sc.section("ensemble")
    tm = sc.section("time")
    system = sc.build_system()
    levels = tuple(en["quantiles"])
    es = simulate_ensemble(
        system, sc.section("system")["x0"], tm["t_final"], tm["dt"],
        en["m_paths"], sc.seed, quantile_levels=levels,
        retain=en["retain"], jobs=sc.jobs,
        out_every=en["out_every"] or None)
    if es.blowup_fraction > 0:
        warnings.append(f"{es.blowup_fraction:.3g} of paths blew up and "
                        "were frozen at the blow-up step")
    dim = es.mean.shape[1]
    header = (["t"]
              + [f"mean_{i + 1}" for i in range(dim)]
              + [f"var_{i + 1}" for i in range(dim)]
              + [f"q{lv:g}_{i + 1}" for lv in levels for i in range(dim)])
    rows = []
    for k in range(len(es.t)):
        row = [es.t[k]]
        row.extend(es.mean[k])
        row.extend(es.var[k])
        for li in range(len(levels)):
            row.extend(es.quantiles[li, k])
        rows.append(row)
    write_csv(out / "stats.csv", header, rows)
    _write_json(out / "meta.json", {
        "m_paths": es.m_paths, "dt": es.dt,
        "blowup_fraction": es.blowup_fraction,
        "quantile_levels": list(levels)})


def _run_fokker_planck(sc, out, warnings):
    de = sc.section("density")
    tm = sc.section("time")
    g = sc.section("grid")
    system = sc.build_system()
    grid = Grid1D(g["a"], g["b"], g["n"])
    p0 = delta_initial(grid, sc.section("system")["x0"][0],
                       width=de["width"] or None)
    gen = build_adjoint_generator(system, grid,
                                  radius=de["radius"] or None,
                                  quad_ratio=de["quad_ratio"],
                                  core_cut=de["core_cut"])
    ev = evolve_density(gen, p0, tm["t_final"], tm["dt"],
                        out_every=de["out_every"] or None,
                        renormalize=de["renormalize"])
    rows = []
    for k, tk in enumerate(ev.t):
        for j, xj in enumerate(grid.centers):
            rows.append([tk, xj, ev.p[k, j]])
    write_csv(out / "density.csv", ["t", "x", "p"], rows)
    if ev.clipped_mass > 1e-8:
        warnings.append(f"clipped {ev.clipped_mass:.3g} of negative "
                        "density mass")
    _write_json(out / "meta.json", {
        "grid": {"a": grid.a, "b": grid.b, "n": grid.n, "h": grid.h},
        "mass_final": float(ev.mass[-1]),
        "clipped_mass": ev.clipped_mass,
        "min_density": ev.min_density,
        "renormalize": ev.renormalize,
        "jump_rate_dt": float(gen.max_jump_rate * tm["dt"])})


def _write_portrait(portrait, out, param_value=""):
    for k, orbit in enumerate(portrait.orbits):
        rows = [[orbit.t[i], orbit.x[i, 0], orbit.provenance]
                for i in range(len(orbit.t))]
        write_csv(out / f"orbit_{k:02d}.csv", ["t", "x", "provenance"], rows)
    rows = [[e.location, e.kind, param_value] for e in portrait.equilibria]
    write_csv(out / "equilibria.csv",
              ["location", "kind", "parameter-value"], rows)


def _probe_points(grid_sec, count):
    a, b = grid_sec["a"], grid_sec["b"]
    return np.linspace(a + 0.06 * (b - a), b - 0.06 * (b - a), count)


def _run_portrait(sc, out, warnings, kind):
    g = sc.section("grid")
    po = sc.section("portrait")
    system = sc.build_system()
    fn = most_probable_portrait if kind == "mppp" else mean_portrait
    portrait = fn(system, (g["a"], g["b"]), po["horizon"],
                  _probe_points(g, po["probes"]),
                  dt=po["dt"] or None, grid_n=g["n"], jobs=sc.jobs)
    _write_portrait(portrait, out)
    if not portrait.equilibria:
        warnings.append("no equilibria detected on the domain")
    _write_json(out / "meta.json", {
        "kind": portrait.config["kind"], "dt": portrait.config["dt"],
        "equilibria": [{"location": e.location, "kind": e.kind}
                       for e in portrait.equilibria]})


def _run_first_passage(sc, out, warnings):
    pa = sc.section("passage")
    tm = sc.section("time")
    system = sc.build_system()
    thr = pa["threshold"]
    ps = first_passage_stats(
        system, sc.section("system")["x0"][0], tuple(pa["domain"]),
        tm["t_final"], tm["dt"], pa["m_paths"], sc.seed,
        threshold=None if math.isnan(thr) else thr, band=pa["band"],
        jobs=sc.jobs, out_points=pa["out_points"])
    write_csv(out / "survival.csv", ["t", "survival"],
              list(zip(ps.survival_t, ps.survival)))
    if ps.exit_probability < 0.5:
        warnings.append("over half the ensemble never left the domain; "
                        "median exit time is censored")
    _write_json(out / "passage.json", {
        "exit_probability": ps.exit_probability,
        "mean_exit_time": ps.mean_exit_time,
        "median_exit_time": ps.median_exit_time,
        "mean_transitions": float(ps.transitions.mean()),
        "t_max": ps.t_max, "m_paths": ps.m_paths})


def _run_scan(sc, out, warnings):
    g = sc.section("grid")
    po = sc.section("portrait")
    scan = sc.section("scan")
    system = sc.build_system()
    bd = bifurcation_scan(system, scan["param"], scan["values"],
                          (g["a"], g["b"]), po["horizon"],
                          dt=po["dt"] or None, grid_n=g["n"],
                          probes=_probe_points(g, po["probes"]), jobs=sc.jobs)
    rows = []
    for v, eqs in zip(bd.values, bd.equilibria):
        if eqs is None:
            continue
        for e in eqs:
            rows.append([v, e.location, e.kind])
    write_csv(out / "diagram.csv", ["param", "location", "kind"], rows)
    for v, msg in sorted(bd.errors.items()):
        warnings.append(f"scan value {v:g} failed: {msg}")
    _write_json(out / "meta.json", {
        "param": bd.param,
        "change_points": [list(cp) for cp in bd.change_points],
        "errors": {repr(k): v for k, v in sorted(bd.errors.items())}})


def _graph_rows(graph):
    rows = []
    for i, xi in enumerate(graph.xi):
        rows.append([xi, *graph.values[i], graph.residual])
    return rows


def _run_slow_manifold(sc, out, warnings):
    mf = sc.section("manifold")
    rd = sc.section("reduce")
    spec = sc.build_slowfast()
    gap = validate_gap(spec)
    if not gap.ok:
        warnings.append(gap.message)
    xi = np.linspace(mf["xi_lo"], mf["xi_hi"], mf["xi_n"])

    path = None
    if spec.sigma > 0:
        # backward steps cover the eta burn-in plus the kernel window
        rate = spec.decay_rate()
        n_window = int(math.ceil(
            spec.eps * math.log(1e8) / rate / rd["dt"])) + 2
        n_fwd = int(round(rd["t_final"] / rd["dt"])) + 2
        path = make_noise_path(NoiseSpec(family="brownian"), rd["dt"],
                               2 * n_window, n_fwd, sc.seed,
                               dim=spec.m_fast)

    trunc = truncated_h(spec, xi, path)
    graph = lyapunov_perron_solve(spec, xi, path, tol=mf["tol"])
    hcols = [f"h_{j + 1}" for j in range(spec.m_fast)]
    write_csv(out / "manifold.csv", ["xi_1", *hcols, "residual"],
              _graph_rows(graph))
    write_csv(out / "truncated.csv", ["xi_1", *hcols, "residual"],
              _graph_rows(trunc))
    _write_json(out / "convergence.json", {
        "iterations": graph.iterations, "residual": graph.residual,
        "residual_history": list(graph.residual_history)})

    reduced = reduced_slow_integrate(spec, graph, rd["x0"], rd["t_final"],
                                     rd["dt"], path)
    y0 = graph.interp(rd["x0"])[0] + rd["y0_offset"]
    full = full_slowfast_integrate(spec, rd["x0"], y0, rd["t_final"],
                                   rd["dt"], path)
    write_csv(out / "reduced.csv", ["t", "x_1", "provenance"],
              [[reduced.t[i], reduced.x[i, 0], reduced.provenance]
               for i in range(len(reduced.t))])
    ycols = [f"y_{j + 1}" for j in range(spec.m_fast)]
    write_csv(out / "full.csv", ["t", "x_1", *ycols, "provenance"],
              [[full.t[i], *full.x[i], full.provenance]
               for i in range(len(full.t))])
    sup_gap = float(np.max(np.abs(reduced.x[:, 0] - full.x[:, 0])))
    _write_json(out / "meta.json", {
        "sup_gap": sup_gap, "eps": spec.eps, "sigma": spec.sigma,
        "gap_report": {"dichotomy": gap.dichotomy, "ratio": gap.ratio,
                       "ok": gap.ok, "message": gap.message}})


_RUNNERS = {
    "simulate": _run_simulate,
    "fokker-planck": _run_fokker_planck,
    "mppp": lambda sc, out, w: _run_portrait(sc, out, w, "mppp"),
    "mean-portrait": lambda sc, out, w: _run_portrait(sc, out, w, "mean"),
    "first-passage": _run_first_passage,
    "bifurcation-scan": _run_scan,
    "slow-manifold": _run_slow_manifold,
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stodyn",
        description="Deterministic portraits of stochastic dynamics: "
                    "ensembles, densities, phase portraits, scans, and "
                    "slow-manifold reductions from scenario files.")
    sub = ap.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a {mode} scenario")
        p.add_argument("--scenario", required=True,
                       help="scenario file path or bundled scenario name")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--jobs", type=int, default=None,
                       help="cap on worker threads")
        p.add_argument("--out", default=None,
                       help="output directory (default runs/<scenario name>)")
    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("--scenario", required=True,
                   help="scenario file path or bundled scenario name")
    return ap


def _validate_only(arg):
    path = _resolve_scenario_arg(arg)
    sc = load_scenario(path)
    print(f"ok: {sc.name} ({sc.mode}) hash {sc.scenario_hash[:16]}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            return _validate_only(args.scenario)
        except ValidationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION

    t0 = time.monotonic()
    status = "ok"
    code = EXIT_OK
    warnings = []
    sc = None
    out = None
    try:
        path = _resolve_scenario_arg(args.scenario)
        out = Path(args.out) if args.out else Path("runs") / path.stem
        out.mkdir(parents=True, exist_ok=True)
        sc = load_scenario(path,
                           overrides={"seed": args.seed, "jobs": args.jobs})
        if sc.mode != args.command:
            raise ValidationError(
                f"scenario {sc.name!r} has mode {sc.mode!r}; "
                f"invoked as {args.command!r}")
        with open(out / f"{sc.name}.resolved", "w", newline="\n") as fh:
            fh.write(sc.canonical_text())
        _RUNNERS[sc.mode](sc, out, warnings)
    except ValidationError as exc:
        status, code = "validation-error", EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
    except StodynError as exc:
        status, code = "numerical-error", EXIT_NUMERICAL
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except Exception as exc:
        status, code = "numerical-error", EXIT_NUMERICAL
        print(f"error: unexpected {type(exc).__name__}: {exc}",
              file=sys.stderr)

    if out is not None:
        _write_json(out / "run.json", {
            "status": status,
            "seed": sc.seed if sc else args.seed,
            "scenario_hash": sc.scenario_hash if sc else None,
            "duration_s": round(time.monotonic() - t0, 6),
            "warnings": warnings,
            "versions": _versions()})
        if code == EXIT_OK:
            print(f"{args.command}: wrote {out}/ "
                  f"({time.monotonic() - t0:.1f} s)")
    return code


if __name__ == "__main__":
    sys.exit(main())
