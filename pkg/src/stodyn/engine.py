"""Euler-Maruyama integration, ensembles, and first-passage statistics.

The update is x_{k+1} = x_k + f(x_k, t_k) dt + sigma(x_k) dL_k with sigma
frozen at the left endpoint for both noise families. Ensembles run in fixed
chunks of rng.CHUNK_PATHS paths; chunk c draws from the stream
(seed, STREAM_ENSEMBLE, c) in a fixed block order, and reductions combine
chunks by index, so results are byte-identical for any --jobs value and for
either backend within one machine.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as expr_mod
from . import kernels
from .errors import ValidationError
from .noise import NoiseSpec, draw_increments
from .rng import CHUNK_PATHS, STREAM_ENSEMBLE, STREAM_PASSAGE, derive_rng

# steps per increment block; bounds buffer memory at CHUNK_PATHS x EM_BLOCK_STEPS
EM_BLOCK_STEPS = 512
PASSAGE_BLOCK_STEPS = 1024


def _as_exprs(items):
    out = []
    for it in items:
        out.append(it if isinstance(it, expr_mod.Expr) else expr_mod.parse(it))
    return tuple(out)


@dataclass(frozen=True)
class SystemSpec:
    """An SDE dx = f(x,t) dt + sigma(x) dL with declared parameters."""

    drift: tuple
    sigma: tuple
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        drift = _as_exprs(self.drift)
        sigma = tuple(_as_exprs(row) for row in self.sigma)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "sigma", sigma)
        n = len(drift)
        if n == 0:
            raise ValidationError("system needs at least one drift expression")
        if len(sigma) != n:
            raise ValidationError(
                f"sigma has {len(sigma)} rows for a {n}-dimensional system")
        widths = {len(row) for row in sigma}
        if len(widths) != 1:
            raise ValidationError("sigma rows have unequal lengths")
        allowed = {f"x{i + 1}" for i in range(n)} | {"t"} | set(self.params)
        for e in list(drift) + [e for row in sigma for e in row]:
            extra = e.free_vars - allowed
            if extra:
                raise ValidationError(
                    f"unknown variable(s) {sorted(extra)} in expression {e.source!r}")

    @property
    def dim(self):
        return len(self.drift)

    @property
    def noise_dim(self):
        return len(self.sigma[0])

    @property
    def param_names(self):
        return tuple(sorted(self.params))

    @property
    def param_vector(self):
        return np.array([float(self.params[k]) for k in self.param_names])

    def _var_map(self):
        vm = {f"x{i + 1}": f"x[{i}]" for i in range(self.dim)}
        vm["t"] = "t"
        return vm

    @property
    def drift_source(self):
        items = [(f"[{i}]", e) for i, e in enumerate(self.drift)]
        return expr_mod.compile_source("drift", items, self._var_map(), self.param_names)

    @property
    def sigma_source(self):
        items = [(f"[{i}, {j}]", e)
                 for i, row in enumerate(self.sigma) for j, e in enumerate(row)]
        return expr_mod.compile_source("sigma", items, self._var_map(), self.param_names)

    def with_params(self, **updates):
        unknown = set(updates) - set(self.params)
        if unknown:
            raise ValidationError(f"unknown parameter(s) {sorted(unknown)}")
        return SystemSpec(self.drift, self.sigma, self.noise, {**self.params, **updates})

    def with_noise(self, noise):
        return SystemSpec(self.drift, self.sigma, noise, dict(self.params))

    def drift_value(self, x, t=0.0):
        """Checked scalar evaluation, one point; used by oracles and probes."""
        env = {f"x{i + 1}": xi for i, xi in enumerate(np.atleast_1d(x))}
        env["t"] = t
        env.update(self.params)
        return np.array([expr_mod.evaluate(e, env) for e in self.drift])

    def sigma_value(self, x, t=0.0):
        env = {f"x{i + 1}": xi for i, xi in enumerate(np.atleast_1d(x))}
        env["t"] = t
        env.update(self.params)
        return np.array([[expr_mod.evaluate(e, env) for e in row] for row in self.sigma])


@dataclass
class Orbit:
    """One curve in state space: sampled, ridge, mean, or reduced-slow."""

    t: np.ndarray
    x: np.ndarray
    provenance: str
    blow_up_time: float = None
    band: np.ndarray = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.t.ndim != 1 or len(self.t) != len(self.x):
            raise ValidationError("orbit time grid and state array lengths differ")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValidationError("orbit time grid must be strictly increasing")

    @property
    def final_state(self):
        return self.x[-1]


@dataclass
class EnsembleStats:
    """Per-time moments and quantiles of a path ensemble.

    `sample_paths` is the deterministic subsample (first `retain` paths by
    stream order) that quantiles are computed from; when it holds all M
    paths the moments are computed from it directly, so the ensemble mean
    is exactly the mean of the retained paths.
    """

    t: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    quantile_levels: tuple
    quantiles: np.ndarray
    m_paths: int
    seed: int
    dt: float
    blowup_fraction: float
    final_states: np.ndarray
    sample_paths: np.ndarray = None

    def __post_init__(self):
        if np.any(self.var < 0):
            raise ValidationError("negative ensemble variance")
        if len(self.quantile_levels) > 1:
            lv = np.asarray(self.quantile_levels)
            if not np.all(np.diff(lv) > 0):
                raise ValidationError("quantile levels must increase")
            if np.any(np.diff(self.quantiles, axis=0) < -1e-12):
                raise ValidationError("quantiles not monotone in level")

    def band3(self):
        """3-sigma half width of the ensemble-mean estimate, per time."""
        return 3.0 * np.sqrt(self.var / self.m_paths)


def _rec_layout(nsteps, out_every):
    n_rec = nsteps // out_every
    extra = 1 if nsteps % out_every else 0
    r_total = n_rec + 1 + extra
    return n_rec, extra, r_total


def _rec_times(nsteps, out_every, dt):
    n_rec, extra, _ = _rec_layout(nsteps, out_every)
    t = np.arange(n_rec + 1) * (out_every * dt)
    if extra:
        t = np.append(t, nsteps * dt)
    return t


def integrate_em(system, x0, T, dt, path):
    """One path of the system driven by a materialized NoisePath."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (system.dim,):
        raise ValidationError(
            f"x0 has shape {x0.shape}, system dimension is {system.dim}")
    if not math.isclose(dt, path.dt, rel_tol=1e-12, abs_tol=0.0):
        raise ValidationError(f"dt={dt} does not match the path's dt={path.dt}")
    if path.dim != system.noise_dim:
        raise ValidationError("noise path dimension does not match sigma")
    nsteps = int(round(T / dt))
    if nsteps < 1:
        raise ValidationError("horizon shorter than one step")
    inc = np.asarray(path.increments(0, nsteps))[None, :, :]
    stepper = kernels.get_em_stepper(
        system.drift_source, system.sigma_source, system.dim, system.noise_dim)
    x = np.ascontiguousarray(x0[:, None])
    rec = np.empty((1, nsteps + 1, system.dim))
    rec[0, 0] = x0
    first_bad = np.full(1, -1, dtype=np.int64)
    stepper(x, 0, 0.0, dt, system.param_vector, inc, rec, 1, first_bad)
    t = np.arange(nsteps + 1) * dt
    if first_bad[0] >= 0:
        k = int(first_bad[0])
        return Orbit(t[:k], rec[0, :k], "sample", blow_up_time=k * dt)
    return Orbit(t, rec[0], "sample")


def _ensemble_chunk(system, x0, nsteps, dt, out_every, seed, stream_kind,
                    chunk_index, m_c, keep):
    """Worker: integrate one chunk, return its reduction pieces."""
    n, d = system.dim, system.noise_dim
    rng = derive_rng(seed, stream_kind, chunk_index)
    stepper = kernels.get_em_stepper(
        system.drift_source, system.sigma_source, n, d)
    par = system.param_vector
    n_rec, extra, r_total = _rec_layout(nsteps, out_every)
    x = np.tile(x0[:, None], (1, m_c))
    rec = np.empty((m_c, r_total, n))
    rec[:, 0, :] = x0
    first_bad = np.full(m_c, -1, dtype=np.int64)
    done = 0
    while done < nsteps:
        bs = min(EM_BLOCK_STEPS, nsteps - done)
        inc = draw_increments(system.noise, dt, (m_c, bs, d), rng)
        stepper(x, done, 0.0, dt, par, inc, rec, out_every, first_bad)
        done += bs
    if extra:
        rec[:, -1, :] = x.T
    blowups = int((first_bad >= 0).sum())
    out = {
        "final": x.T.copy(),
        "blowups": blowups,
        "kept": rec[:keep] if keep > 0 else None,
    }
    if keep < m_c:
        with np.errstate(all="ignore"):
            out["sum"] = np.sum(rec, axis=0)
            out["sumsq"] = np.sum(rec * rec, axis=0)
    return out


def simulate_ensemble(system, x0, T, dt, m_paths, seed, *, out_every=None,
                      quantile_levels=(0.05, 0.5, 0.95), retain=16384, jobs=1):
    """Monte Carlo ensemble of EM paths with streamed per-time statistics.

    Quantiles come from the first `retain` paths (deterministic subsample);
    moments use all paths. With retain >= m_paths the sample holds the whole
    ensemble and moments are computed from it directly.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (system.dim,):
        raise ValidationError(
            f"x0 has shape {x0.shape}, system dimension is {system.dim}")
    if m_paths < 1:
        raise ValidationError("need at least one path")
    nsteps = int(round(T / dt))
    if nsteps < 1:
        raise ValidationError("horizon shorter than one step")
    if out_every is None:
        out_every = max(1, nsteps // 200)
    quantile_levels = tuple(quantile_levels)
    retain = min(retain, m_paths)

    nchunks = (m_paths + CHUNK_PATHS - 1) // CHUNK_PATHS
    sizes = [min(CHUNK_PATHS, m_paths - c * CHUNK_PATHS) for c in range(nchunks)]
    keeps = []
    left = retain
    for s in sizes:
        keeps.append(min(left, s))
        left -= keeps[-1]

    def work(c):
        return _ensemble_chunk(system, x0, nsteps, dt, out_every, seed,
                               STREAM_ENSEMBLE, c, sizes[c], keeps[c])

    if jobs > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(nchunks)))
    else:
        results = [work(c) for c in range(nchunks)]

    t = _rec_times(nsteps, out_every, dt)
    final = np.concatenate([r["final"] for r in results], axis=0)
    blowups = sum(r["blowups"] for r in results)
    kept = [r["kept"] for r in results if r["kept"] is not None and len(r["kept"])]
    sample = np.concatenate(kept, axis=0) if kept else None

    # frozen paths carry non-finite states on purpose; keep reductions quiet
    with np.errstate(all="ignore"):
        if retain == m_paths:
            mean = np.mean(sample, axis=0)
            var = np.var(sample, axis=0)
        else:
            # fully retained chunks carry no sums; reduce in chunk order
            total = 0.0
            totalsq = 0.0
            for r in results:
                if "sum" in r:
                    total = total + r["sum"]
                    totalsq = totalsq + r["sumsq"]
                else:
                    total = total + np.sum(r["kept"], axis=0)
                    totalsq = totalsq + np.sum(r["kept"] * r["kept"], axis=0)
            mean = total / m_paths
            var = np.maximum(totalsq / m_paths - mean * mean, 0.0)
        quants = np.quantile(sample, quantile_levels, axis=0)

    return EnsembleStats(
        t=t, mean=mean, var=var, quantile_levels=quantile_levels,
        quantiles=quants, m_paths=m_paths, seed=seed, dt=dt,
        blowup_fraction=blowups / m_paths, final_states=final,
        sample_paths=sample)


@dataclass
class PassageSummary:
    """First-exit and transition statistics over an ensemble.

    exit_times holds nan for paths still inside at t_max (censored).
    mean_exit_time averages observed exits only; median_exit_time is the
    survival-curve crossing of 1/2 (nan when over half the paths survive).
    """

    exit_times: np.ndarray
    transitions: np.ndarray
    t_max: float
    survival_t: np.ndarray
    survival: np.ndarray
    m_paths: int
    seed: int

    @property
    def exit_probability(self):
        return float(np.isfinite(self.exit_times).mean())

    @property
    def mean_exit_time(self):
        obs = self.exit_times[np.isfinite(self.exit_times)]
        return float(obs.mean()) if len(obs) else float("nan")

    @property
    def median_exit_time(self):
        below = self.survival <= 0.5
        if not below.any():
            return float("nan")
        return float(self.survival_t[np.argmax(below)])


def first_passage_stats(system, x0, domain, t_max, dt, m_paths, seed, *,
                        threshold=None, band=0.1, jobs=1, out_points=200):
    """Per-path first exit of an interval, with optional well-transition counts.

    A path exits at the first step whose state lands at or beyond a boundary
    (non-finite states count as having left). Transition counting uses a
    hysteresis band of half-width `band` around `threshold`: a crossing is
    registered only when the path traverses from one outer band edge to the
    other, which suppresses chatter at the threshold itself.
    """
    if system.dim != 1 or system.noise_dim != 1:
        raise ValidationError("first-passage scans are scalar only")
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValidationError(f"empty domain ({lo}, {hi})")
    x0 = float(np.atleast_1d(x0)[0])
    if not lo < x0 < hi:
        raise ValidationError(f"x0={x0} outside the domain ({lo}, {hi})")
    nsteps = int(round(t_max / dt))
    if nsteps < 1:
        raise ValidationError("t_max shorter than one step")
    if threshold is None:
        thr, bnd = math.nan, 0.0
    else:
        thr, bnd = float(threshold), float(band)

    stepper = kernels.get_passage_stepper(system.drift_source, system.sigma_source)
    par = system.param_vector
    nchunks = (m_paths + CHUNK_PATHS - 1) // CHUNK_PATHS
    sizes = [min(CHUNK_PATHS, m_paths - c * CHUNK_PATHS) for c in range(nchunks)]

    def work(c):
        m_c = sizes[c]
        rng = derive_rng(seed, STREAM_PASSAGE, c)
        x = np.full(m_c, x0)
        exit_step = np.full(m_c, -1, dtype=np.int64)
        trans = np.zeros(m_c, dtype=np.int64)
        well = np.zeros(m_c, dtype=np.int8)
        if not math.isnan(thr):
            well[x > thr + bnd] = 1
            well[x < thr - bnd] = -1
        idx = np.arange(m_c)
        xa, wella, exita, transa = x, well, exit_step, trans
        done = 0
        while done < nsteps and len(idx):
            bs = min(PASSAGE_BLOCK_STEPS, nsteps - done)
            inc = draw_increments(system.noise, dt, (len(idx), bs, 1), rng)
            stepper(xa, done, 0.0, dt, par, inc, lo, hi, thr, bnd,
                    wella, exita, transa)
            exit_step[idx] = exita
            trans[idx] = transa
            x[idx] = xa
            well[idx] = wella
            still = exita < 0
            idx = idx[still]
            xa = np.ascontiguousarray(xa[still])
            wella = np.ascontiguousarray(wella[still])
            exita = np.ascontiguousarray(exita[still])
            transa = np.ascontiguousarray(transa[still])
            done += bs
        return exit_step, trans

    if jobs > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(nchunks)))
    else:
        results = [work(c) for c in range(nchunks)]

    exit_step = np.concatenate([r[0] for r in results])
    transitions = np.concatenate([r[1] for r in results])
    exit_times = np.where(exit_step >= 0, exit_step * dt, np.nan)
    st = np.linspace(0.0, nsteps * dt, min(out_points, nsteps) + 1)
    finite = np.nan_to_num(exit_times, nan=np.inf)
    survival = np.array([(finite > ti).mean() for ti in st])
    return PassageSummary(
        exit_times=exit_times, transitions=transitions, t_max=nsteps * dt,
        survival_t=st, survival=survival, m_paths=m_paths, seed=seed)


def killed_density_mc(system, x0, faces, t_final, dt, m_paths, seed, *, jobs=1):
    """Histogram density of paths never having left (faces[0], faces[-1]).

    Paths die at their first step at or beyond a boundary, matching the
    absorbing convention of the density solver; survivors at t_final are
    binned on the cell faces. Returns (density, survival_fraction) where
    density integrates to the survival fraction.
    """
    faces = np.asarray(faces, dtype=float)
    if faces.ndim != 1 or len(faces) < 2 or not np.all(np.diff(faces) > 0):
        raise ValidationError("faces must be an increasing 1-d array")
    if system.dim != 1 or system.noise_dim != 1:
        raise ValidationError("killed-density histograms are scalar only")
    lo, hi = float(faces[0]), float(faces[-1])
    x0 = float(np.atleast_1d(x0)[0])
    if not lo < x0 < hi:
        raise ValidationError(f"x0={x0} outside the domain ({lo}, {hi})")
    nsteps = int(round(t_final / dt))
    if nsteps < 1:
        raise ValidationError("t_final shorter than one step")

    stepper = kernels.get_passage_stepper(system.drift_source, system.sigma_source)
    par = system.param_vector
    nchunks = (m_paths + CHUNK_PATHS - 1) // CHUNK_PATHS
    sizes = [min(CHUNK_PATHS, m_paths - c * CHUNK_PATHS) for c in range(nchunks)]

    def work(c):
        m_c = sizes[c]
        rng = derive_rng(seed, STREAM_PASSAGE, c)
        x = np.full(m_c, x0)
        exit_step = np.full(m_c, -1, dtype=np.int64)
        trans = np.zeros(m_c, dtype=np.int64)
        well = np.zeros(m_c, dtype=np.int8)
        idx = np.arange(m_c)
        xa, wella, exita, transa = x, well, exit_step, trans
        done = 0
        while done < nsteps and len(idx):
            bs = min(PASSAGE_BLOCK_STEPS, nsteps - done)
            inc = draw_increments(system.noise, dt, (len(idx), bs, 1), rng)
            stepper(xa, done, 0.0, dt, par, inc, lo, hi, math.nan, 0.0,
                    wella, exita, transa)
            x[idx] = xa
            exit_step[idx] = exita
            still = exita < 0
            idx = idx[still]
            xa = np.ascontiguousarray(xa[still])
            wella = np.ascontiguousarray(wella[still])
            exita = np.ascontiguousarray(exita[still])
            transa = np.ascontiguousarray(transa[still])
            done += bs
        counts, _ = np.histogram(x[exit_step < 0], bins=faces)
        return counts, int((exit_step < 0).sum())

    if jobs > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, range(nchunks)))
    else:
        results = [work(c) for c in range(nchunks)]
    counts = np.sum([r[0] for r in results], axis=0)
    alive = sum(r[1] for r in results)
    widths = np.diff(faces)
    return counts / (m_paths * widths), alive / m_paths
