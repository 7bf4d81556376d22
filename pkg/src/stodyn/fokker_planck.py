"""Density evolution on an absorbing interval: local flux plus jump arrivals.

The forward operator for dx = f dt + sigma dL splits into

  * a conservative advection-diffusion part in flux form
    J = v_eff p - d(D p)/dx, discretized finite-volume on cell centers with
    a per-face Peclet switch between central and upwind averaging;
  * for stable noise, a dense arrival matrix: jumps are quadratured over
    geometric size cells (exact power-law cell masses, nodes at cell
    centroids so linear densities are integrated exactly), each cell landing
    on two shifted diagonals via linear interpolation. Jumps that land
    outside the interval are absorbed and accounted per source column in
    `leak`, the same convention as killing a sample path at its first exit.

Small jumps below half a cell act as extra diffusion (their compensated
integrand is 1/2 w^2 p'' to leading order); the compensation drift of the
resolved cells and the increment-law drift both fold into v_eff, so the
advected flux stays conservative. Time stepping is IMEX: Crank-Nicolson on
the local part (implicit-Euler startup steps damp the delta-seeded odd-even
mode), explicit on the jump part, which bounds dt by the largest per-cell
jump rate.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .engine import _rec_layout, _rec_times
from .errors import StabilityError, ValidationError
from .expr import exec_source
from .noise import jump_coefficients, levy_drift_total

RANNACHER_STEPS = 4


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [a, b] with n cells."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ValidationError(f"empty grid interval [{self.a}, {self.b}]")
        if self.n < 16:
            raise ValidationError(f"grid needs at least 16 cells, got {self.n}")

    @property
    def h(self):
        return (self.b - self.a) / self.n

    @property
    def centers(self):
        return self.a + (np.arange(self.n) + 0.5) * self.h

    @property
    def faces(self):
        return self.a + np.arange(self.n + 1) * self.h

    def mass(self, p):
        return float(self.h * np.sum(p))


def delta_initial(grid, x0, width=None):
    """Mollified point mass: a Gaussian of std 2h (default), unit mass.

    A one-cell spike feeds the Crank-Nicolson odd-even mode; two cells of
    smoothing is the narrowest start that stays clean under refinement.
    """
    x0 = float(x0)
    if not grid.a < x0 < grid.b:
        raise ValidationError(f"x0={x0} outside the grid interval")
    w = 2.0 * grid.h if width is None else float(width)
    if w <= 0:
        raise ValidationError("width must be positive")
    p = np.exp(-0.5 * ((grid.centers - x0) / w) ** 2)
    s = grid.mass(p)
    if s <= 0:
        raise ValidationError("initial bump has no mass on the grid")
    return p / s


def _jump_cells(r_in, r_out, ratio):
    """Geometric size cells on [r_in, r_out] with a forced edge at 1."""
    def span(lo, hi):
        k = max(1, math.ceil(math.log(hi / lo) / math.log(ratio) - 1e-12))
        return lo * (hi / lo) ** (np.arange(k + 1) / k)

    if r_in < 1.0 < r_out:
        edges = np.concatenate([span(r_in, 1.0), span(1.0, r_out)[1:]])
    else:
        edges = span(r_in, r_out)
    return edges[:-1], edges[1:]


def _cell_mass(l, r, alpha):
    """Integral of w^(-1-alpha) over [l, r] (unit tail coefficient)."""
    return (l ** -alpha - r ** -alpha) / alpha


def _cell_moment(l, r, alpha):
    """Integral of w * w^(-1-alpha) over [l, r], stable near alpha = 1."""
    if alpha == 1.0:
        return np.log(r / l)
    e = 1.0 - alpha
    return l ** e * np.expm1(e * np.log(r / l)) / e


@dataclass
class Generator1D:
    """Assembled forward operator: dp/dt = (local tridiagonal + a_nl) p."""

    grid: Grid1D
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    a_nl: np.ndarray
    leak: np.ndarray
    v_face: np.ndarray
    d_cell: np.ndarray
    info: dict

    def apply_local(self, p):
        out = self.diag * p
        out[1:] += self.sub[1:] * p[:-1]
        out[:-1] += self.sup[:-1] * p[1:]
        return out

    def apply(self, p):
        out = self.apply_local(p)
        if self.a_nl is not None:
            out += self.a_nl @ p
        return out

    def column_sums(self):
        """Column sums of the full operator; -(column sum) is the rate at
        which mass leaves the interval from that cell."""
        cs = self.diag.copy()
        cs[:-1] += self.sub[1:]
        cs[1:] += self.sup[:-1]
        if self.a_nl is not None:
            cs = cs + self.a_nl.sum(axis=0)
        return cs

    @property
    def max_jump_rate(self):
        if self.a_nl is None:
            return 0.0
        return float(np.max(-np.diag(self.a_nl)))


def _eval_field(source, name, xs, params):
    fn = exec_source(source, name)
    out = np.empty((1, len(xs))) if name == "drift" else np.empty((1, 1, len(xs)))
    fn(xs[None, :], 0.0, params, out)
    return out.reshape(len(xs))


def build_adjoint_generator(system, grid, *, radius=None, quad_ratio=1.12,
                            core_cut=2.0, frozen_coefficients=False):
    """Assemble the forward operator of a scalar system on an absorbing grid.

    radius: largest resolved jump size; jumps beyond it are treated as
    leaving the interval, exact when radius >= b - a (the default). Smaller
    radii drop an in-domain arrival rate proportional to radius**(-alpha).

    core_cut: jumps below core_cut*h act as diffusion instead of explicit
    arrivals. Larger values cut the top jump rate (and with it the explicit
    dt bound and its O(dt*rate) sweep error) at a modeling error of order
    (core_cut*h)**(3-alpha); both vanish under grid refinement at fixed
    core_cut.

    State-dependent sigma with stable noise freezes the jump intensity at
    the local sigma(x)**alpha (a coefficient-frozen approximation, not the
    Marcus or Ito jump calculus); it must be requested explicitly with
    frozen_coefficients=True.
    """
    if system.dim != 1 or system.noise_dim != 1:
        raise ValidationError("density evolution is scalar only")
    for e in list(system.drift) + [e for row in system.sigma for e in row]:
        if "t" in e.free_vars:
            raise ValidationError(
                "time-dependent coefficients are not supported here")
    noise = system.noise
    par = system.param_vector
    n, h = grid.n, grid.h
    xc, xf = grid.centers, grid.faces

    f_face = _eval_field(system.drift_source, "drift", xf, par)
    s_cell = _eval_field(system.sigma_source, "sigma", xc, par)
    s_face = _eval_field(system.sigma_source, "sigma", xf, par)
    if not (np.all(np.isfinite(f_face)) and np.all(np.isfinite(s_cell))):
        raise ValidationError("coefficients are not finite on the grid")

    info = {"radius": None, "n_cells": 0, "b_drift": 0.0, "c_comp": 0.0,
            "d_core": 0.0, "tail_rate": 0.0, "nu_resolved": 0.0}
    a_nl = None
    leak = np.zeros(n)

    if noise.is_brownian or noise.alpha == 2.0:
        # alpha = 2 stable is Normal(0, 2 sigma^2 dt): twice the brownian D
        d_cell = 0.5 * s_cell ** 2 if noise.is_brownian else s_cell ** 2
        v_face = f_face
    else:
        alpha, beta = noise.alpha, noise.beta
        if np.any(s_cell <= 0) or np.any(s_face <= 0):
            raise ValidationError("stable noise needs sigma > 0 on the grid")
        multiplicative = any(
            v.startswith("x") for row in system.sigma for e in row
            for v in e.free_vars)
        if multiplicative and not frozen_coefficients:
            raise ValidationError(
                "state-dependent sigma with stable noise is a frozen-"
                "coefficient approximation; pass frozen_coefficients=True")
        radius = float(radius) if radius is not None else grid.b - grid.a
        if not core_cut >= 0.5:
            raise ValidationError("core_cut must be at least 0.5")
        delta = core_cut * h
        if not delta < 1.0 < radius:
            raise ValidationError(
                "need core_cut*h < 1 < radius to separate small and large jumps")
        # reflected measure: arrivals at x from x + v carry nu(-v)
        c2r, c1r = jump_coefficients(alpha, beta)
        lo, hi = _jump_cells(delta, radius, quad_ratio)
        m_u = _cell_mass(lo, hi, alpha)
        mu_u = _cell_moment(lo, hi, alpha)
        node = mu_u / m_u
        comp = hi <= 1.0 + 1e-12
        sc_cell = s_cell ** alpha
        sc_face = s_face ** alpha

        a_nl = np.zeros((n, n))
        nu_res_unit = (c1r + c2r) * m_u.sum()
        tail_unit = (c1r + c2r) * radius ** -alpha / alpha
        cells = 0
        for side, c_side in ((1.0, c1r), (-1.0, c2r)):
            s_idx = side * node / h
            off = np.floor(s_idx).astype(int)
            frac = s_idx - off
            for o, fr, mm in zip(off, frac, c_side * m_u):
                for oo, wgt in ((o, mm * (1.0 - fr)), (o + 1, mm * fr)):
                    if wgt == 0.0:
                        continue
                    i0, i1 = max(0, -oo), min(n - 1, n - 1 - oo)
                    if i0 <= i1:
                        rows = np.arange(i0, i1 + 1)
                        a_nl[rows, rows + oo] += wgt * sc_cell[rows + oo]
                    # arrivals that fell off the grid: source columns leak
                    if oo > 0:
                        leak[:min(oo, n)] += wgt * sc_cell[:min(oo, n)]
                    elif oo < 0:
                        leak[max(n + oo, 0):] += wgt * sc_cell[max(n + oo, 0):]
                cells += 1
        idx = np.arange(n)
        a_nl[idx, idx] -= sc_cell * (nu_res_unit + tail_unit)
        leak += sc_cell * tail_unit

        c_comp_unit = (c1r - c2r) * mu_u[comp].sum()
        d_core_unit = 0.5 * (c1r + c2r) * delta ** (2 - alpha) / (2 - alpha)
        d_cell = sc_cell * d_core_unit
        v_face = (f_face + levy_drift_total(alpha, beta, s_face)
                  + sc_face * c_comp_unit)
        info.update(radius=radius, n_cells=cells,
                    b_drift=float(np.mean(levy_drift_total(alpha, beta, s_face))),
                    c_comp=float(np.mean(sc_face * c_comp_unit)),
                    d_core=float(np.mean(d_cell)),
                    tail_rate=float(np.max(sc_cell) * tail_unit),
                    nu_resolved=float(np.max(sc_cell) * nu_res_unit))

    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    d_f = np.empty(n + 1)
    d_f[1:-1] = 0.5 * (d_cell[:-1] + d_cell[1:])
    d_f[0], d_f[-1] = d_cell[0], d_cell[-1]
    upwind_faces = 0
    for fi in range(1, n):
        j = fi - 1
        v = v_face[fi]
        df = d_f[fi]
        central = df > 0 and abs(v) * h <= 2.0 * df
        if central:
            wl, wr = 0.5, 0.5
        else:
            wl, wr = (1.0, 0.0) if v > 0 else (0.0, 1.0)
            upwind_faces += 1
        cl = v * wl + d_cell[j] / h
        cr = v * wr - d_cell[j + 1] / h
        diag[j] -= cl / h
        sup[j] -= cr / h
        sub[j + 1] += cl / h
        diag[j + 1] += cr / h
    # absorbing walls: advective outflow upwinded, wall value 0 for diffusion
    vl, vr = v_face[0], v_face[-1]
    diag[0] += ((vl if vl < 0 else 0.0) - 2.0 * d_cell[0] / h) / h
    diag[-1] -= ((vr if vr > 0 else 0.0) + 2.0 * d_cell[-1] / h) / h

    pe = np.abs(v_face[1:-1]) * h / np.where(d_f[1:-1] > 0, d_f[1:-1], np.inf)
    info.update(peclet_max=float(pe.max()) if n > 1 else 0.0,
                upwind_faces=upwind_faces)
    return Generator1D(grid=grid, sub=sub, diag=diag, sup=sup, a_nl=a_nl,
                       leak=leak, v_face=v_face, d_cell=d_cell, info=info)


@dataclass
class DensityEvolution:
    """Recorded density slices, their raw masses, and clipping bookkeeping."""

    t: np.ndarray
    p: np.ndarray
    mass: np.ndarray
    grid: Grid1D
    dt: float
    renormalize: str
    clipped_mass: float
    min_density: float

    @property
    def final(self):
        return self.p[-1]


def _banded(sub, diag, sup, scale, shift):
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = scale * sup[:-1]
    ab[1] = shift + scale * diag
    ab[2, :-1] = scale * sub[1:]
    return ab


def evolve_density(gen, p0, t_final, dt, *, out_every=None,
                   renormalize="never", positivity_tol=1e-10, scheme="cn"):
    """March dp/dt = L p with an implicit local part and explicit jump sweeps.

    renormalize: "never" keeps raw (sub-probability) mass, the right choice
    against killed-path Monte Carlo; "each" rescales every recorded slice
    to unit mass while the mass trace still reports the raw values.

    scheme: "cn" is Crank-Nicolson (second order, but it rings on sharp
    data when advection crosses cells per step); "be" is backward Euler,
    first order yet positivity-preserving at any dt, with the identical
    steady state. Long-horizon equilibrium probing wants "be".
    """
    if renormalize not in ("never", "each"):
        raise ValidationError("renormalize must be 'never' or 'each'")
    if scheme not in ("cn", "be"):
        raise ValidationError("scheme must be 'cn' or 'be'")
    p = np.asarray(p0, dtype=float).copy()
    if p.shape != (gen.grid.n,):
        raise ValidationError("initial density does not match the grid")
    if np.any(p < 0):
        raise ValidationError("initial density has negative entries")
    nsteps = int(round(t_final / dt))
    if nsteps < 1:
        raise ValidationError("horizon shorter than one step")
    rate = gen.max_jump_rate
    if rate * dt > 1.0:
        raise StabilityError(
            f"explicit jump sweep unstable: dt*max_rate = {rate * dt:.3g} > 1; "
            f"use dt <= {1.0 / rate:.3g} or a coarser grid")
    if out_every is None:
        out_every = max(1, nsteps // 200)

    n_rec, extra, r_total = _rec_layout(nsteps, out_every)
    h = gen.grid.h
    rec = np.empty((r_total, gen.grid.n))
    mass = np.empty(r_total)
    rec[0] = p
    mass[0] = gen.grid.mass(p)
    ab_be = _banded(gen.sub, gen.diag, gen.sup, -dt, 1.0)
    ab_cn = _banded(gen.sub, gen.diag, gen.sup, -0.5 * dt, 1.0)
    clipped = 0.0
    min_seen = 0.0
    for k in range(nsteps):
        theta_be = scheme == "be" or k < RANNACHER_STEPS
        rhs = p if theta_be else p + 0.5 * dt * gen.apply_local(p)
        if gen.a_nl is not None:
            rhs = rhs + dt * (gen.a_nl @ p)
        p = solve_banded((1, 1), ab_be if theta_be else ab_cn, rhs)
        pmin = float(p.min())
        if pmin < 0:
            scale = max(float(p.max()), 1e-300)
            if pmin < -positivity_tol * scale:
                raise StabilityError(
                    f"density undershoot {pmin:.3e} at t={(k + 1) * dt:.6g} "
                    "exceeds the positivity band; reduce dt or refine the grid")
            min_seen = min(min_seen, pmin)
            clipped += -h * float(p[p < 0].sum())
            p = np.maximum(p, 0.0)
        if (k + 1) % out_every == 0:
            s = (k + 1) // out_every
            rec[s] = p
            mass[s] = gen.grid.mass(p)
    if extra:
        rec[-1] = p
        mass[-1] = gen.grid.mass(p)
    if renormalize == "each":
        good = mass > 0
        rec[good] /= mass[good, None]
    t = _rec_times(nsteps, out_every, dt)
    return DensityEvolution(t=t, p=rec, mass=mass, grid=gen.grid, dt=dt,
                            renormalize=renormalize, clipped_mass=clipped,
                            min_density=min_seen)
