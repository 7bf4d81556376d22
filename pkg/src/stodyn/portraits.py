"""Geometric summaries of density evolutions: ridges, means, equilibria.

A most probable orbit follows the density's maximizer through time,
refined by a parabola through the peak cell and clamped to half a cell so
the curve never leaves the winning cell's neighborhood. Tie cells (within
a 1e-12 relative band of the slice maximum) resolve toward the previous
ridge location, which is what makes the ridge a curve rather than a set of
disconnected argmaxes.

Equilibria are detected by attraction over the tail half of the horizon,
not by differentiating anything: probe orbits are clustered by endpoint,
a cluster is stable when every probe launched near it closes in
monotonically, and basin boundaries found by bisecting between probes
that settle in different clusters are unstable equilibria.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace

import numpy as np

from .engine import Orbit, SystemSpec, simulate_ensemble
from .errors import HorizonError, MeanUndefinedError, ValidationError
from .fokker_planck import (Grid1D, build_adjoint_generator, delta_initial,
                            evolve_density)

_TIE_REL = 1e-12


@dataclass
class Equilibrium:
    location: float
    kind: str

    def __post_init__(self):
        if self.kind not in ("stable", "unstable", "unclassified"):
            raise ValidationError(f"unknown equilibrium kind {self.kind!r}")


@dataclass
class PhasePortrait:
    orbits: list
    equilibria: list
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        tags = {o.provenance for o in self.orbits}
        if len(tags) > 1:
            raise ValidationError(f"mixed orbit provenance in one portrait: {tags}")
        dom = self.config.get("domain")
        if dom is not None:
            for eq in self.equilibria:
                if not dom[0] <= eq.location <= dom[1]:
                    raise ValidationError(
                        f"equilibrium {eq.location} outside domain {dom}")


@dataclass
class BifurcationDiagram:
    param: str
    values: np.ndarray
    equilibria: list
    errors: dict
    change_points: list

    def __post_init__(self):
        if not np.all(np.diff(self.values) > 0):
            raise ValidationError("scan values must be strictly increasing")


def _refine_peak(p, i, h):
    """Parabolic sub-cell shift of the peak at cell i, clamped to half a cell."""
    if i == 0 or i == len(p) - 1:
        return 0.0
    denom = p[i - 1] - 2.0 * p[i] + p[i + 1]
    if not denom < 0:
        return 0.0
    d = 0.5 * (p[i - 1] - p[i + 1]) / denom
    return float(np.clip(d, -0.5, 0.5))


def most_probable_orbit(evolution, x0=None):
    """Ridge of a density sequence: per-slice argmax with continuity ties.

    x0 steers the tie-break on the first slice; when omitted, the first
    slice's center of mass stands in for it.
    """
    x = evolution.grid.centers
    h = evolution.grid.h
    ridge = np.empty(len(evolution.t))
    if x0 is None:
        m0 = evolution.p[0].sum()
        if m0 <= 0:
            raise ValidationError("all-zero density slice at t=0")
        prev = float((x * evolution.p[0]).sum() / m0)
    else:
        prev = float(x0)
    for k, p in enumerate(evolution.p):
        top = p.max()
        if not top > 0:
            raise ValidationError(f"all-zero density slice at t={evolution.t[k]:.6g}")
        tied = np.flatnonzero(p >= top - _TIE_REL * top)
        i = int(tied[np.argmin(np.abs(x[tied] - prev))])
        ridge[k] = x[i] + h * _refine_peak(p, i, h)
        prev = ridge[k]
    return Orbit(evolution.t, ridge, "most-probable")


def mean_orbit(evolution):
    """Grid quadrature mean of each slice; refuses biased (leaky) sequences."""
    h = evolution.grid.h
    mass = h * evolution.p.sum(axis=1)
    worst = float(np.abs(mass - 1.0).max())
    if worst > 1e-2:
        raise ValidationError(
            f"density mass drifts from 1 by {worst:.3g}; the grid mean would "
            "be biased (wider domain, or renormalize='each')")
    xbar = h * (evolution.p @ evolution.grid.centers)
    return Orbit(evolution.t, xbar, "mean")


def mean_orbit_mc(system, x0, t_final, dt, m_paths, seed, *, jobs=1):
    """Ensemble-mean orbit with a 3-sigma band on the mean estimate."""
    if system.noise.family == "stable" and system.noise.alpha <= 1.0:
        raise MeanUndefinedError(
            f"the mean of alpha-stable motion with alpha={system.noise.alpha} "
            "<= 1 does not exist; use median_orbit_mc instead")
    st = simulate_ensemble(system, x0, t_final, dt, m_paths, seed, jobs=jobs)
    return Orbit(st.t, st.mean, "mean-mc", band=st.band3())


def median_orbit_mc(system, x0, t_final, dt, m_paths, seed, *, jobs=1):
    """Ensemble-median orbit; the heavy-tail replacement for the mean."""
    st = simulate_ensemble(system, x0, t_final, dt, m_paths, seed, jobs=jobs,
                           quantile_levels=(0.5,))
    return Orbit(st.t, st.quantiles[0], "median-mc")


def _orbit_extractor(kind):
    if kind == "most-probable":
        return most_probable_orbit
    if kind == "mean":
        return mean_orbit
    raise ValidationError(f"unknown portrait kind {kind!r}")


def _default_dt(gen, t_final):
    v = float(np.abs(gen.v_face).max())
    h = gen.grid.h
    dt = t_final / 100.0
    if v > 0:
        dt = min(dt, 0.5 * h / v)
    # advection is implicit, so the cell-crossing rule is accuracy advice,
    # not stability; 2000 steps cap the cost of long horizons
    dt = max(dt, t_final / 2000.0)
    rate = gen.max_jump_rate
    if rate > 0:
        dt = min(dt, 0.5 / rate)
    return dt


class _ProbeRunner:
    """Evolves probe densities on one shared generator and extracts orbits."""

    def __init__(self, system, domain, t_final, dt, grid_n, kind):
        self.grid = Grid1D(domain[0], domain[1], grid_n)
        self.gen = build_adjoint_generator(system, self.grid)
        self.dt = dt if dt is not None else _default_dt(self.gen, t_final)
        self.t_final = t_final
        self.kind = kind
        self.extract = _orbit_extractor(kind)

    def orbit(self, x0):
        p0 = delta_initial(self.grid, x0)
        renorm = "each" if self.kind == "mean" else "never"
        # backward Euler: probing wants the steady state reached positively
        # at a coarse dt, not a second-order transient
        ev = evolve_density(self.gen, p0, self.t_final, self.dt,
                            renormalize=renorm, scheme="be")
        if self.kind == "most-probable":
            return self.extract(ev, x0=x0)
        return self.extract(ev)


def _cluster(points, tol):
    order = np.argsort(points)
    groups = []
    for idx in order:
        if groups and points[idx] - points[groups[-1][-1]] <= tol:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    return groups


def _tail_attracts(orbit, center, h):
    """Monotone (within a one-cell slack) approach to center over the tail."""
    half = len(orbit.t) // 2
    d = np.abs(orbit.x[half:, 0] - center)
    if d[-1] > d[0] + h:
        return False
    return bool(np.all(np.diff(d) <= h))


def _equilibria(system, domain, t_final, probes, kind, *, dt=None,
                grid_n=256, radius=None, max_bisect=12, jobs=1):
    a, b = float(domain[0]), float(domain[1])
    width = b - a
    if probes is None:
        probes = np.linspace(a + 0.06 * width, b - 0.06 * width, 9)
    probes = np.sort(np.asarray(probes, dtype=float))
    if len(probes) < 8:
        raise ValidationError(f"need at least 8 probes, got {len(probes)}")
    if probes[0] < a or probes[-1] > b:
        raise ValidationError("probes must lie inside the domain")
    radius = 0.1 * width if radius is None else float(radius)
    runner = _ProbeRunner(system, (a, b), t_final, dt, grid_n, kind)
    h = runner.grid.h

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            orbits = list(pool.map(runner.orbit, probes))
    else:
        orbits = [runner.orbit(x0) for x0 in probes]

    half_idx = len(orbits[0].t) // 2
    for x0, o in zip(probes, orbits):
        drift = abs(o.x[-1, 0] - o.x[half_idx, 0])
        if drift > 0.1 * width:
            raise HorizonError(
                f"probe at {x0:.4g} still drifts {drift:.3g} over the tail "
                f"half of [0, {t_final}]; extend the horizon")

    ends = np.array([o.x[-1, 0] for o in orbits])
    cluster_tol = max(4 * h, 0.02 * width)
    groups = _cluster(ends, cluster_tol)
    centers = np.array([ends[g].mean() for g in groups])

    eqs = []
    for gi, g in enumerate(groups):
        c = centers[gi]
        others = np.delete(centers, gi)
        r_eff = radius
        if len(others):
            # the nearby-probe test must not reach into a neighboring basin
            r_eff = min(radius, 0.45 * float(np.abs(others - c).min()))
        members = set(g)
        # attraction evidence: cluster members launched away from the center
        # (a probe sitting on the point itself would also sit on a repeller)
        evidence = [k for k in g if abs(probes[k] - c) > 2 * h]
        escaped = any(abs(probes[k] - c) <= r_eff
                      for k in range(len(probes)) if k not in members)
        if escaped or not evidence:
            kind_lbl = "unclassified"
        elif all(_tail_attracts(orbits[k], c, h) for k in evidence):
            kind_lbl = "stable"
        else:
            kind_lbl = "unclassified"
        eqs.append(Equilibrium(float(c), kind_lbl))

    # basin boundaries: bisect between adjacent probes that settle apart
    fate = np.array([np.argmin(np.abs(centers - e)) for e in ends])
    for k in range(len(probes) - 1):
        if fate[k] == fate[k + 1]:
            continue
        lo_x, hi_x = probes[k], probes[k + 1]
        lo_f = fate[k]
        for _ in range(max_bisect):
            mid = 0.5 * (lo_x + hi_x)
            end_mid = runner.orbit(mid).x[-1, 0]
            if np.argmin(np.abs(centers - end_mid)) == lo_f:
                lo_x = mid
            else:
                hi_x = mid
        loc = 0.5 * (lo_x + hi_x)
        merged = False
        for eq in eqs:
            if abs(eq.location - loc) <= cluster_tol and eq.kind != "stable":
                eq.kind = "unstable"
                eq.location = float(loc)
                merged = True
                break
        if not merged:
            eqs.append(Equilibrium(float(loc), "unstable"))

    eqs.sort(key=lambda e: e.location)
    return eqs


def most_probable_equilibria(system, domain, t_final, probes=None, **kw):
    """Stable/unstable points of the most probable flow on a domain.

    Probes (>= 8 of them, default 9 spanning the domain) are evolved to the
    horizon; endpoint clusters attract, bisected basin boundaries repel.
    """
    return _equilibria(system, domain, t_final, probes, "most-probable", **kw)


def mean_equilibria(system, domain, t_final, probes=None, **kw):
    """Same detection contract as most_probable_equilibria, on mean orbits."""
    return _equilibria(system, domain, t_final, probes, "mean", **kw)


def _portrait(system, domain, t_final, probes, kind, *, dt=None, grid_n=256,
              jobs=1, **kw):
    a, b = float(domain[0]), float(domain[1])
    if probes is None:
        probes = np.linspace(a + 0.06 * (b - a), b - 0.06 * (b - a), 9)
    eqs = _equilibria(system, domain, t_final, probes, kind,
                      dt=dt, grid_n=grid_n, jobs=jobs, **kw)
    runner = _ProbeRunner(system, (a, b), t_final, dt, grid_n, kind)
    orbits = [runner.orbit(float(x0)) for x0 in probes]
    return PhasePortrait(orbits=orbits, equilibria=eqs,
                         config={"domain": (a, b), "t_final": t_final,
                                 "kind": kind, "grid_n": grid_n,
                                 "dt": runner.dt})


def most_probable_portrait(system, domain, t_final, probes=None, **kw):
    return _portrait(system, domain, t_final, probes, "most-probable", **kw)


def mean_portrait(system, domain, t_final, probes=None, **kw):
    return _portrait(system, domain, t_final, probes, "mean", **kw)


def _apply_param(system, name, value):
    if name in system.params:
        return system.with_params(**{name: value})
    if name in ("alpha", "beta"):
        noise = dc_replace(system.noise, family="stable", **{name: value})
        return system.with_noise(noise)
    raise ValidationError(
        f"parameter {name!r} is neither a system parameter nor a noise "
        "parameter (alpha, beta)")


def bifurcation_scan(system, param, values, domain, t_final, *, dt=None,
                     grid_n=256, probes=None, jobs=1, **kw):
    """Equilibrium sets along a parameter sweep, with count change-points.

    Per-value failures are recorded in `errors` and leave a None row;
    change-points mark intervals between adjacent clean values where the
    stable-equilibrium count changes.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise ValidationError("need a 1-d scan of at least 2 values")
    if not np.all(np.diff(values) > 0):
        raise ValidationError("scan values must be strictly increasing")
    _apply_param(system, param, values[0])

    def solve(v):
        sy = _apply_param(system, param, float(v))
        return _equilibria(sy, domain, t_final, probes, "most-probable",
                           dt=dt, grid_n=grid_n, **kw)

    rows = []
    errors = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(solve, v): i for i, v in enumerate(values)}
            tmp = {}
            for f, i in futs.items():
                try:
                    tmp[i] = f.result()
                except Exception as exc:
                    tmp[i] = None
                    errors[float(values[i])] = str(exc)
            rows = [tmp[i] for i in range(len(values))]
    else:
        for v in values:
            try:
                rows.append(solve(v))
            except Exception as exc:
                rows.append(None)
                errors[float(v)] = str(exc)

    change_points = []
    prev_i = None
    for i, row in enumerate(rows):
        if row is None:
            continue
        if prev_i is not None:
            n0 = sum(e.kind == "stable" for e in rows[prev_i])
            n1 = sum(e.kind == "stable" for e in row)
            if n0 != n1:
                change_points.append(
                    (float(values[prev_i]), float(values[i]), n0, n1))
        prev_i = i
    return BifurcationDiagram(param=param, values=values, equilibria=rows,
                              errors=errors, change_points=change_points)
