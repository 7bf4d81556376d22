"""Slow-fast systems and their random slow-manifold reductions.

The system is

    dx = (A x + f(x, y)) dt                     (slow, dim n)
    dy = (1/eps)(B y + g(x, y)) dt + (sigma/sqrt(eps)) dW   (fast, dim m)

with B strictly stable. The fast variable is slaved to the slow one through
a graph y = h(xi) found two ways: a fixed point of the backward-in-time
integral with kernel exp(B u / eps) (the representation that stays honest
about the noise history), and an asymptotic truncation h0 + eps*h1 built
from the frozen-xi equilibrium. The quadrature for the integral uses
product weights: the kernel is integrated exactly against a piecewise
linear integrand, eigenvalue by eigenvalue, so a constant g is reproduced
to the window truncation error (1e-8 of the kernel mass) rather than to
the step size. That exactness is what the closed-form regressions rely on.

The stationary fast noise eta solves d(eta) = (1/eps) B eta dt +
(1/sqrt(eps)) dW started well before the window of interest; its Euler
discretization has stationary variance 1/(2 - dt/eps) per unit rate for
scalar B = -1 (the dt -> 0 limit is the exact 1/2).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as expr_mod
from .engine import Orbit, _as_exprs
from .errors import (ConvergenceError, CoverageError, StabilityError,
                     ValidationError)

KERNEL_TAIL = 1e-8


def _compile_xy(name, exprs, n, m):
    var_map = {f"x{i + 1}": f"x[{i}]" for i in range(n)}
    var_map.update({f"y{j + 1}": f"y[{j}]" for j in range(m)})
    items = [(f"[{i}]", e) for i, e in enumerate(exprs)]
    src = expr_mod.compile_source(name, items, var_map, ())
    ns = {"np": np}
    exec(src, ns)
    return ns[name]


def _eval_xy(fun, k, xv, yv):
    """Evaluate a compiled field on (n,)/(m,) or (n,K)/(m,K) buffers."""
    xv = np.atleast_1d(np.asarray(xv, dtype=float))
    yv = np.atleast_1d(np.asarray(yv, dtype=float))
    if xv.ndim == 1 and yv.ndim == 1:
        out = np.zeros(k)
        fun(xv, yv, 0.0, (), out)
        return out
    width = xv.shape[1] if xv.ndim == 2 else yv.shape[1]
    if xv.ndim == 1:
        xv = np.repeat(xv[:, None], width, axis=1)
    if yv.ndim == 1:
        yv = np.repeat(yv[:, None], width, axis=1)
    out = np.zeros((k, width))
    fun(xv, yv, 0.0, (), out)
    return out


def _probe_lipschitz(fun, k, n, m, box):
    """Numerical sup of the field's Jacobian column norms over the box."""
    axes = [np.linspace(-box, box, 9)] * (n + m)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh])
    xv, yv = pts[:n], pts[n:]
    d = 1e-5 * box
    worst = 0.0
    for j in range(n + m):
        hi = pts.copy()
        lo = pts.copy()
        hi[j] += d
        lo[j] -= d
        dv = (_eval_xy(fun, k, hi[:n], hi[n:]) -
              _eval_xy(fun, k, lo[:n], lo[n:])) / (2 * d)
        worst = max(worst, float(np.abs(dv).max()))
    if not math.isfinite(worst):
        raise ValidationError("field is not finite on the probe box")
    return worst


@dataclass(frozen=True)
class SlowFastSpec:
    """Slow-fast system data: matrices, nonlinearities, scales, Lipschitz.

    f entries may use x1..xn and y1..ym; g entries likewise. lip_f/lip_g
    are probed numerically on [-probe_box, probe_box]^(n+m) when omitted.
    """

    a: tuple
    b: tuple
    f: tuple
    g: tuple
    eps: float
    sigma: float = 0.0
    lip_f: float = None
    lip_g: float = None
    probe_box: float = 2.5

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
            raise ValidationError("A and B must be square")
        n, m = a.shape[0], b.shape[0]
        object.__setattr__(self, "a", tuple(map(tuple, a)))
        object.__setattr__(self, "b", tuple(map(tuple, b)))
        ev = np.linalg.eigvals(b)
        if np.any(ev.real >= 0):
            raise ValidationError(
                f"fast matrix B must have strictly stable spectrum; "
                f"eigenvalues {np.round(ev, 6)}")
        if not self.eps > 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if self.sigma < 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")
        f = _as_exprs(self.f)
        g = _as_exprs(self.g)
        if len(f) != n or len(g) != m:
            raise ValidationError(
                f"need {n} slow and {m} fast field entries, "
                f"got {len(f)} and {len(g)}")
        allowed = {f"x{i + 1}" for i in range(n)} | {f"y{j + 1}" for j in range(m)}
        for e in f + g:
            extra = e.free_vars - allowed
            if extra:
                raise ValidationError(
                    f"unknown variables {sorted(extra)} in slow-fast field "
                    f"(allowed: {sorted(allowed)})")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "_f_fun", _compile_xy("f_field", f, n, m))
        object.__setattr__(self, "_g_fun", _compile_xy("g_field", g, n, m))
        if self.lip_f is None:
            object.__setattr__(
                self, "lip_f",
                _probe_lipschitz(self._f_fun, n, n, m, self.probe_box))
        if self.lip_g is None:
            object.__setattr__(
                self, "lip_g",
                _probe_lipschitz(self._g_fun, m, n, m, self.probe_box))
        if not (math.isfinite(self.lip_f) and math.isfinite(self.lip_g)):
            raise ValidationError("Lipschitz estimates must be finite")

    @property
    def n_slow(self):
        return len(self.f)

    @property
    def m_fast(self):
        return len(self.g)

    @property
    def a_mat(self):
        return np.asarray(self.a, dtype=float)

    @property
    def b_mat(self):
        return np.asarray(self.b, dtype=float)

    def f_value(self, xv, yv):
        return _eval_xy(self._f_fun, self.n_slow, xv, yv)

    def g_value(self, xv, yv):
        return _eval_xy(self._g_fun, self.m_fast, xv, yv)

    def decay_rate(self):
        """Slowest fast decay rate |Re lambda_max(B)| (before the 1/eps)."""
        return float(-np.linalg.eigvals(self.b_mat).real.max())


@dataclass
class GapReport:
    dichotomy: bool
    ratio: float
    ok: bool
    message: str


def validate_gap(spec=None, *, b=None, lip_g=None, eps=None):
    """Advisory dichotomy and contraction-ratio check.

    Accepts either a SlowFastSpec or raw (b, lip_g, eps) so that matrices
    a constructor would reject can still be diagnosed.
    """
    if spec is not None:
        b, lip_g, eps = spec.b_mat, spec.lip_g, spec.eps
    b = np.atleast_2d(np.asarray(b, dtype=float))
    ev = np.linalg.eigvals(b)
    if np.any(ev.real >= 0):
        return GapReport(False, math.inf, False,
                         f"dichotomy violated: Re(eigenvalue) >= 0 in "
                         f"{np.round(ev, 6)}")
    rate = float(-ev.real.max())
    ratio = eps * lip_g / rate
    if ratio > 0.5:
        return GapReport(True, ratio, False,
                         f"gap ratio eps*L_g/|Re lambda_max| = {ratio:.3g} "
                         "> 0.5: the fixed point may not contract")
    return GapReport(True, ratio, True, f"gap ratio {ratio:.3g}")


@dataclass
class EtaPath:
    """Stationary fast Ornstein-Uhlenbeck record aligned to noise steps.

    eta[i] is the value at step k_valid + i, i.e. at time (k_valid+i)*dt
    in the generating path's frame; steps before k_valid are burn-in and
    intentionally unavailable.
    """

    dt: float
    k_valid: int
    k_hi: int
    eta: np.ndarray

    def at_step(self, k):
        if not self.k_valid <= k <= self.k_hi:
            raise ValidationError(
                f"eta defined on steps [{self.k_valid}, {self.k_hi}], "
                f"requested {k}")
        return self.eta[k - self.k_valid]

    def window(self, k0, k1):
        if not (self.k_valid <= k0 <= k1 <= self.k_hi):
            raise ValidationError(
                f"eta defined on steps [{self.k_valid}, {self.k_hi}], "
                f"requested [{k0}, {k1}]")
        return self.eta[k0 - self.k_valid:k1 - self.k_valid + 1]


def stationary_eta(spec, path, *, burn_in=None):
    """Integrate d(eta) = (1/eps) B eta dt + (1/sqrt(eps)) dW over a path.

    Starts from zero at the path's earliest step; everything within
    burn_in of the start is discarded (default: long enough that the
    initial condition has decayed to 1e-8).
    """
    m = spec.m_fast
    if not path.spec.is_brownian:
        raise ValidationError("the fast equation is Brownian-driven; "
                              "stable noise paths are not supported here")
    if path.dim != m:
        raise ValidationError(
            f"noise path has {path.dim} components, fast space has {m}")
    eps, dt = spec.eps, path.dt
    rate = spec.decay_rate()
    if burn_in is None:
        burn_in = eps * math.log(1e8) / rate
    n_burn = int(math.ceil(burn_in / dt))
    k_lo = path.k_lo - path.shift_offset
    k_hi = path.k_hi - path.shift_offset
    if k_lo + n_burn > k_hi:
        raise ValidationError(
            f"burn-in needs {n_burn} steps but the path only covers "
            f"[{k_lo}, {k_hi})")
    bmat = spec.b_mat
    step_mat = np.eye(m) + (dt / eps) * bmat
    if np.abs(np.linalg.eigvals(step_mat)).max() >= 1.0:
        raise StabilityError(
            f"fast Euler step unstable: dt/eps = {dt / eps:.3g} too large "
            f"for B; use dt < {eps / rate:.3g}")
    # k_lo/k_hi are already in the path's shifted frame; increments()
    # translates by shift_offset itself
    inc = path.increments(k_lo, k_hi) / math.sqrt(eps)
    nsteps = k_hi - k_lo
    eta = np.zeros((nsteps + 1, m))
    v = np.zeros(m)
    for k in range(nsteps):
        v = step_mat @ v + inc[k]
        eta[k + 1] = v
    return EtaPath(dt=dt, k_valid=k_lo + n_burn, k_hi=k_hi,
                   eta=eta[n_burn:])


@dataclass
class ManifoldGraph:
    """Tabulated slow-manifold graph xi -> h(xi) with solve metadata."""

    xi: np.ndarray
    values: np.ndarray
    eps: float
    seed: int = None
    iterations: int = 0
    residual: float = 0.0
    residual_history: list = field(default_factory=list)

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.xi.ndim != 1 or len(self.xi) < 2:
            raise ValidationError("graph needs a 1-d grid of >= 2 points")
        if np.any(np.diff(self.xi) <= 0):
            raise ValidationError("graph grid must be strictly increasing")
        if self.values.shape != (len(self.xi), self.values.shape[1]):
            raise ValidationError("graph values must be (len(xi), m)")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("graph values must be finite")

    @property
    def coverage(self):
        return float(self.xi[0]), float(self.xi[-1])

    def interp(self, x):
        """Linear interpolation over a 1-d array of slow values; points
        beyond the grid get linear edge-slope extrapolation."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        cols = [np.interp(x, self.xi, self.values[:, j])
                for j in range(self.values.shape[1])]
        out = np.stack(cols, axis=-1)
        lo, hi = self.xi[0], self.xi[-1]
        below, above = x < lo, x > hi
        if np.any(below):
            slope = (self.values[1] - self.values[0]) / (self.xi[1] - lo)
            out[below] = self.values[0] + np.outer(x[below] - lo, slope)
        if np.any(above):
            slope = (self.values[-1] - self.values[-2]) / (hi - self.xi[-2])
            out[above] = self.values[-1] + np.outer(x[above] - hi, slope)
        return out


def _require_scalar_slow(spec, op):
    if spec.n_slow != 1:
        raise ValidationError(
            f"{op} tabulates h over a 1-d slow grid; slow dimension is "
            f"{spec.n_slow}")


def _newton_h0(spec, xi, tol=1e-13, max_iter=60):
    """Solve B h + g(xi, h) = 0 per grid point (frozen-xi equilibrium)."""
    m = spec.m_fast
    bmat = spec.b_mat
    binv_g0 = np.linalg.solve(bmat, spec.g_value([xi], np.zeros(m)))
    y = -binv_g0
    d = 1e-7
    for _ in range(max_iter):
        r = bmat @ y + spec.g_value([xi], y)
        if np.abs(r).max() < tol:
            return y
        jac = bmat.copy()
        for j in range(m):
            yp, ym = y.copy(), y.copy()
            yp[j] += d
            ym[j] -= d
            jac[:, j] += (spec.g_value([xi], yp) -
                          spec.g_value([xi], ym)) / (2 * d)
        y = y - np.linalg.solve(jac, r)
    raise ConvergenceError(
        f"frozen-xi equilibrium Newton stalled at xi={xi:.6g}, "
        f"residual {np.abs(r).max():.3e}")


def truncated_h(spec, xi_grid, path=None):
    """First-order graph h0 + eps*h1 from the frozen-slow equilibrium.

    h0 solves B h0 + g(xi, h0) = 0; h1 = (B + d_y g)^-1 h0'(xi) (A xi +
    f(xi, h0)) is the drift correction from the slow motion of xi. The
    noise offset is not baked into the graph; evaluation sites add
    sigma*eta explicitly so one graph serves every realization.
    """
    _require_scalar_slow(spec, "truncated_h")
    xi_grid = np.asarray(xi_grid, dtype=float)
    m = spec.m_fast
    bmat, amat = spec.b_mat, spec.a_mat
    vals = np.empty((len(xi_grid), m))
    worst = 0.0
    d = 1e-7
    for i, xi in enumerate(xi_grid):
        h0 = _newton_h0(spec, xi)
        dxi = 1e-6 * max(1.0, abs(xi))
        dh0 = (_newton_h0(spec, xi + dxi) - _newton_h0(spec, xi - dxi)) / (2 * dxi)
        jac = bmat.copy()
        for j in range(m):
            yp, ym = h0.copy(), h0.copy()
            yp[j] += d
            ym[j] -= d
            jac[:, j] += (spec.g_value([xi], yp) - spec.g_value([xi], ym)) / (2 * d)
        slow_rate = float(amat[0, 0] * xi + spec.f_value([xi], h0)[0])
        h1 = np.linalg.solve(jac, dh0 * slow_rate)
        vals[i] = h0 + spec.eps * h1
        worst = max(worst, float(np.abs(bmat @ h0 +
                                        spec.g_value([xi], h0)).max()))
    seed = path.seed if path is not None else None
    return ManifoldGraph(xi=xi_grid, values=vals, eps=spec.eps, seed=seed,
                         iterations=0, residual=worst)


def _product_weights(lam, eps, du, n_ivals):
    """Node weights for (1/eps) * integral of exp(lam*u/eps) * q(u) du.

    q is piecewise linear on a uniform grid of n_ivals intervals of width
    du; the kernel factor is integrated exactly. Returns (n_ivals+1,)
    complex node weights. Exact for constant and linear q by construction.
    """
    mu = lam * du / eps
    emu = np.exp(mu)
    if abs(mu) > 1e-6:
        i0 = (emu - 1.0) / mu * du / eps          # against left value
        i1 = (mu * emu - emu + 1.0) / (mu * mu) * du / eps  # ramp part
    else:
        i0 = du / eps * (1.0 + mu / 2.0 + mu * mu / 6.0)
        i1 = du / eps * (0.5 + mu / 3.0 + mu * mu / 8.0)
    w_left = i0 - i1
    w_right = i1
    decay = emu ** np.arange(n_ivals)
    w = np.zeros(n_ivals + 1, dtype=complex)
    w[:-1] += w_left * decay
    w[1:] += w_right * decay
    return w


def lyapunov_perron_solve(spec, xi_grid, path=None, *, t_window=None,
                          tol=1e-11, max_iter=80, h_init=None):
    """Fixed point of the backward-integral representation of the graph.

    Each sweep integrates the slow equation backward from every grid
    point, slaved to the current graph (plus the sigma*eta offset), then
    re-evaluates h as the kernel-weighted integral of g along that orbit.
    Iterates to sup-residual < tol; the residual history rides along on
    the result.
    """
    _require_scalar_slow(spec, "lyapunov_perron_solve")
    xi_grid = np.asarray(xi_grid, dtype=float)
    m = spec.m_fast
    eps, sigma = spec.eps, spec.sigma
    rate = spec.decay_rate()
    if t_window is None:
        t_window = eps * math.log(1.0 / KERNEL_TAIL) / rate
    if sigma > 0 and path is None:
        raise ValidationError("sigma > 0 needs a noise path for eta")

    if path is not None:
        du = path.dt
        n_iv = int(math.ceil(t_window / du))
        eta_p = stationary_eta(spec, path)
        if eta_p.k_valid > -n_iv:
            raise ValidationError(
                f"path coverage starts at step {eta_p.k_valid} after "
                f"burn-in but the window needs step {-n_iv}")
        # eta at s = -u_j, j = 0..n_iv
        eta_neg = eta_p.window(-n_iv, 0)[::-1].copy()
    else:
        n_iv = 512
        du = t_window / n_iv
        eta_neg = np.zeros((n_iv + 1, m))

    lam, vmat = np.linalg.eig(spec.b_mat)
    if np.linalg.cond(vmat) > 1e8:
        raise ValidationError(
            "fast matrix B is too close to defective for the eigen-basis "
            "kernel quadrature")
    vinv = np.linalg.inv(vmat)
    wnode = np.stack([_product_weights(l, eps, du, n_iv) for l in lam])

    amat = spec.a_mat
    if h_init is None:
        graph = truncated_h(spec, xi_grid, path)
    else:
        graph = h_init
    h = graph.values.copy()
    K = len(xi_grid)

    def interp_h(hvals, x):
        cols = [np.interp(x, xi_grid, hvals[:, j]) for j in range(m)]
        out = np.stack(cols, axis=-1)
        lo, hi = xi_grid[0], xi_grid[-1]
        sl_lo = (hvals[1] - hvals[0]) / (xi_grid[1] - lo)
        sl_hi = (hvals[-1] - hvals[-2]) / (hi - xi_grid[-2])
        below, above = x < lo, x > hi
        out[below] = hvals[0] + (x[below] - lo)[:, None] * sl_lo
        out[above] = hvals[-1] + (x[above] - hi)[:, None] * sl_hi
        return out

    history = []
    for it in range(1, max_iter + 1):
        # backward slow orbit from every xi at once (u = -s, Heun steps)
        xs = np.empty((n_iv + 1, K))
        xs[0] = xi_grid
        x = xi_grid.copy()
        for j in range(n_iv):
            yv = interp_h(h, x) + sigma * eta_neg[j]
            k1 = -(amat[0, 0] * x + spec.f_value(x[None, :], yv.T)[0])
            xp = x + du * k1
            yv2 = interp_h(h, xp) + sigma * eta_neg[j + 1]
            k2 = -(amat[0, 0] * xp + spec.f_value(xp[None, :], yv2.T)[0])
            x = x + 0.5 * du * (k1 + k2)
            xs[j + 1] = x
        # integrand q_j = g(X(-u_j), h(X) + sigma*eta(-u_j)) in eigenbasis
        he = np.zeros((m, K), dtype=complex)
        for j in range(n_iv + 1):
            yv = interp_h(h, xs[j]) + sigma * eta_neg[j]
            q = spec.g_value(xs[j][None, :], yv.T)
            he += wnode[:, j][:, None] * (vinv @ q)
        h_new = np.real(vmat @ he).T
        res = float(np.abs(h_new - h).max())
        history.append(res)
        h = h_new
        if res < tol:
            seed = path.seed if path is not None else None
            return ManifoldGraph(xi=xi_grid, values=h, eps=eps, seed=seed,
                                 iterations=it, residual=res,
                                 residual_history=history)
    raise ConvergenceError(
        f"fixed point not below {tol:.1e} after {max_iter} sweeps; last "
        f"residuals {['%.3e' % r for r in history[-5:]]}")


def _eta_or_zero(spec, path, need_hi):
    if spec.sigma > 0:
        if path is None:
            raise ValidationError("sigma > 0 needs a noise path for eta")
        eta_p = stationary_eta(spec, path)
        if eta_p.k_valid > 0 or eta_p.k_hi < need_hi:
            raise ValidationError(
                f"eta must cover steps [0, {need_hi}]; have "
                f"[{eta_p.k_valid}, {eta_p.k_hi}]")
        return lambda k: spec.sigma * eta_p.at_step(k)
    zero = np.zeros(spec.m_fast)
    return lambda k: zero


def reduced_slow_integrate(spec, graph, x0, t_final, dt, path=None):
    """Integrate the reduced slow system dx = (A x + f(x, h(x)+off)) dt.

    sigma = 0 runs classical RK4; sigma > 0 steps explicit Euler locked to
    the path grid (dt must equal path.dt) with the eta offset of the same
    realization, so reduced and full orbits share one omega.
    """
    _require_scalar_slow(spec, "reduced_slow_integrate")
    nsteps = int(round(t_final / dt))
    if nsteps < 1:
        raise ValidationError("horizon shorter than one step")
    if spec.sigma > 0 and path is not None and \
            abs(dt - path.dt) > 1e-12 * path.dt:
        raise ValidationError("dt must match the noise path step")
    off = _eta_or_zero(spec, path, nsteps)
    lo, hi = graph.coverage
    a00 = spec.a_mat[0, 0]

    def rhs(x, k):
        hx = graph.interp(np.array([x]))[0] + off(k)
        return a00 * x + float(spec.f_value([x], hx)[0])

    xs = np.empty(nsteps + 1)
    xs[0] = x0
    x = float(x0)
    for k in range(nsteps):
        if not lo <= x <= hi:
            raise CoverageError(
                f"reduced orbit left the graph coverage [{lo:.4g}, "
                f"{hi:.4g}] at t={k * dt:.6g} (x={x:.6g})")
        if spec.sigma > 0:
            x = x + dt * rhs(x, k)
        else:
            k1 = rhs(x, k)
            k2 = rhs(x + 0.5 * dt * k1, k)
            k3 = rhs(x + 0.5 * dt * k2, k)
            k4 = rhs(x + dt * k3, k)
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        xs[k + 1] = x
    if not lo <= x <= hi:
        raise CoverageError(
            f"reduced orbit left the graph coverage [{lo:.4g}, {hi:.4g}] "
            f"at t={t_final:.6g} (x={x:.6g})")
    t = np.arange(nsteps + 1) * dt
    return Orbit(t, xs, "reduced-slow")


def full_slowfast_integrate(spec, x0, y0, t_final, dt, path=None):
    """Integrate the coupled system; the oracle for every reduction test.

    sigma = 0 runs RK4 on the coupled ODE; sigma > 0 steps Euler with the
    fast noise increments (sigma/sqrt(eps)) dW from the given path.
    """
    n, m = spec.n_slow, spec.m_fast
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if x0.shape != (n,) or y0.shape != (m,):
        raise ValidationError(f"need x0 of shape ({n},) and y0 of ({m},)")
    nsteps = int(round(t_final / dt))
    if nsteps < 1:
        raise ValidationError("horizon shorter than one step")
    amat, bmat = spec.a_mat, spec.b_mat
    eps, sigma = spec.eps, spec.sigma

    def drift(z):
        x, y = z[:n], z[n:]
        dx = amat @ x + spec.f_value(x, y)
        dy = (bmat @ y + spec.g_value(x, y)) / eps
        return np.concatenate([dx, dy])

    if sigma > 0:
        if path is None:
            raise ValidationError("sigma > 0 needs a noise path")
        if abs(dt - path.dt) > 1e-12 * path.dt:
            raise ValidationError("dt must match the noise path step")
        inc = path.increments(0, nsteps) * (sigma / math.sqrt(eps))
    z = np.concatenate([x0, y0])
    out = np.empty((nsteps + 1, n + m))
    out[0] = z
    for k in range(nsteps):
        if sigma > 0:
            z = z + dt * drift(z)
            z[n:] += inc[k]
        else:
            k1 = drift(z)
            k2 = drift(z + 0.5 * dt * k1)
            k3 = drift(z + 0.5 * dt * k2)
            k4 = drift(z + dt * k3)
            z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = z
    t = np.arange(nsteps + 1) * dt
    return Orbit(t, out, "sample")


def invariance_error(spec, graph, xi_points, t_check, dt, path=None):
    """Start on the graph, evolve the full system, measure drift off it.

    Returns one dict per point with the sup and mean of
    |y(t) - (h(x(t)) + sigma*eta(t))| over (0, t_check].
    """
    _require_scalar_slow(spec, "invariance_error")
    nsteps = int(round(t_check / dt))
    off = _eta_or_zero(spec, path, nsteps)
    lo, hi = graph.coverage
    reports = []
    for xi in np.asarray(xi_points, dtype=float):
        if not lo <= xi <= hi:
            raise CoverageError(
                f"start {xi:.4g} outside graph coverage [{lo:.4g}, {hi:.4g}]")
        y0 = graph.interp(np.array([xi]))[0] + off(0)
        orb = full_slowfast_integrate(spec, [xi], y0, t_check, dt, path)
        devs = np.empty(nsteps)
        for k in range(1, nsteps + 1):
            x_k, y_k = orb.x[k, 0], orb.x[k, 1:]
            if not lo <= x_k <= hi:
                raise CoverageError(
                    f"orbit from {xi:.4g} left graph coverage at "
                    f"t={k * dt:.6g}")
            devs[k - 1] = np.abs(
                y_k - (graph.interp(np.array([x_k]))[0] + off(k))).max()
        reports.append({"xi": float(xi), "sup": float(devs.max()),
                        "mean": float(devs.mean())})
    return reports
