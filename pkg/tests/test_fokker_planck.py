"""Forward (Fokker-Planck) solver: local and jump-driven generators."""

import math

import numpy as np
import pytest

from stodyn.engine import SystemSpec, killed_density_mc
from stodyn.errors import StabilityError, ValidationError
from stodyn.fokker_planck import (DensityEvolution, Grid1D,
                                  build_adjoint_generator, delta_initial,
                                  evolve_density)
from stodyn.noise import NoiseSpec

OU = SystemSpec(drift=("0 - x1",), sigma=(("1",),))
FREE = SystemSpec(drift=("0",), sigma=(("1",),))


def stable_noise(alpha, beta=0.0):
    return NoiseSpec(family="stable", alpha=alpha, beta=beta)


def stable_pdf(x, alpha, scale=1.0, u_max=None):
    """Symmetric stable density by Gauss-Legendre Fourier inversion."""
    x = np.asarray(x, dtype=float)
    if u_max is None:
        u_max = (40.0 / scale ** alpha) ** (1.0 / alpha)
    panel = min(0.5, 6.0 / max(1.0, float(np.abs(x).max())))
    gx, gw = np.polynomial.legendre.leggauss(16)
    edges = np.arange(0.0, u_max + panel, panel)
    u = ((edges[:-1, None] + edges[1:, None]) / 2
         + (panel / 2) * gx[None, :]).ravel()
    w = np.tile((panel / 2) * gw, len(edges) - 1)
    ker = np.exp(-np.abs(scale * u) ** alpha) * w
    return (ker[None, :] * np.cos(np.outer(x, u))).sum(axis=1) / np.pi


def l1_error(grid, p, q):
    return float(grid.h * np.abs(p - q).sum())


def test_oracle_density_sanity():
    x = np.linspace(-5.0, 5.0, 41)
    gauss = np.exp(-x * x / 4.0) / math.sqrt(4.0 * math.pi)
    assert np.abs(stable_pdf(x, 2.0) - gauss).max() < 1e-12
    cauchy = 1.0 / (math.pi * (1.0 + x * x))
    assert np.abs(stable_pdf(x, 1.0) - cauchy).max() < 1e-12


# ------------------------------------------------------------------ local part

def test_heat_kernel_mass_and_variance_growth():
    grid = Grid1D(-8.0, 8.0, 256)
    gen = build_adjoint_generator(FREE, grid)
    p0 = delta_initial(grid, 0.0)
    ev = evolve_density(gen, p0, 1.0, 1e-3)
    m2 = lambda p: float(grid.h * np.sum(grid.centers ** 2 * p))
    assert abs(ev.mass[-1] - 1.0) < 1e-9
    assert abs(m2(ev.final) - m2(p0) - 1.0) < 1e-9


def test_ou_stationary_density_is_normal_half_variance():
    grid = Grid1D(-6.0, 6.0, 256)
    gen = build_adjoint_generator(OU, grid)
    ev = evolve_density(gen, delta_initial(grid, 2.0), 10.0, 0.01)
    x = grid.centers
    ref = np.exp(-x * x) / math.sqrt(math.pi)
    assert l1_error(grid, ev.final, ref) < 2e-3


def test_constant_drift_translates_the_mean_exactly():
    system = SystemSpec(drift=("1",), sigma=(("0.4",),))
    grid = Grid1D(-3.0, 6.0, 144)
    gen = build_adjoint_generator(system, grid)
    ev = evolve_density(gen, delta_initial(grid, 0.0), 2.0, 5e-3)
    means = ev.p @ grid.centers * grid.h
    assert np.abs(means - ev.t).max() < 1e-6
    assert ev.mass[-1] > 0.999


def test_local_interior_columns_conserve_exactly():
    gen = build_adjoint_generator(OU, Grid1D(-6.0, 6.0, 256))
    cs = gen.column_sums()
    assert np.all(cs[1:-1] == 0.0)
    assert cs[0] < 0.0 and cs[-1] < 0.0
    assert gen.a_nl is None
    assert gen.max_jump_rate == 0.0
    assert np.all(gen.leak == 0.0)


def test_backward_euler_reaches_the_crank_nicolson_steady_state():
    grid = Grid1D(-6.0, 6.0, 128)
    gen = build_adjoint_generator(OU, grid)
    p0 = delta_initial(grid, 1.0)
    cn = evolve_density(gen, p0, 12.0, 0.01, scheme="cn")
    be = evolve_density(gen, p0, 12.0, 0.05, scheme="be")
    assert l1_error(grid, cn.final, be.final) < 1e-4


# ------------------------------------------------------------------- jump part

def test_jump_columns_balance_recorded_leak():
    grid = Grid1D(-6.0, 6.0, 256)
    for alpha, beta in ((1.5, 0.0), (0.7, -0.6), (1.0, 0.4)):
        system = FREE.with_noise(stable_noise(alpha, beta))
        gen = build_adjoint_generator(system, grid)
        cs = gen.column_sums()
        assert np.abs(cs + gen.leak).max() < 1e-10, (alpha, beta)


def test_symmetric_jumps_build_a_palindromic_operator():
    grid = Grid1D(-6.0, 6.0, 256)
    gen = build_adjoint_generator(FREE.with_noise(stable_noise(1.5)), grid)
    a = gen.a_nl
    flip = a[::-1, ::-1]
    assert np.abs(a - flip).max() <= 1e-10 * np.abs(a).max()
    assert np.abs(gen.leak - gen.leak[::-1]).max() <= 1e-10 * gen.leak.max()
    ev = evolve_density(gen, delta_initial(grid, 0.0), 0.5, 2e-3)
    p = ev.final
    assert np.abs(p - p[::-1]).max() <= 1e-10 * p.max()


@pytest.mark.parametrize("n, dt, bound", [(512, 0.02, 2.5e-2),
                                          (1024, 0.01, 1.5e-2)])
def test_free_levy_density_matches_fourier_inversion(n, dt, bound):
    grid = Grid1D(-16.0, 16.0, n)
    gen = build_adjoint_generator(FREE.with_noise(stable_noise(1.5)), grid)
    ev = evolve_density(gen, delta_initial(grid, 0.0), 1.0, dt)
    ref = stable_pdf(grid.centers, 1.5)
    err = l1_error(grid, ev.final, ref)
    assert err < bound
    assert 0.98 < ev.mass[-1] < 1.0


def test_free_levy_error_shrinks_under_refinement():
    ref_cfg = [(512, 0.02), (1024, 0.01)]
    errs = []
    for n, dt in ref_cfg:
        grid = Grid1D(-16.0, 16.0, n)
        gen = build_adjoint_generator(FREE.with_noise(stable_noise(1.5)),
                                      grid)
        ev = evolve_density(gen, delta_initial(grid, 0.0), 1.0, dt)
        errs.append(l1_error(grid, ev.final, stable_pdf(grid.centers, 1.5)))
    assert 0.3 < errs[1] / errs[0] < 0.8


def test_heavy_tail_index_below_one():
    grid = Grid1D(-16.0, 16.0, 512)
    gen = build_adjoint_generator(FREE.with_noise(stable_noise(0.7)), grid)
    ev = evolve_density(gen, delta_initial(grid, 0.0), 1.0, 5e-3)
    ref = stable_pdf(grid.centers, 0.7, u_max=220.0)
    assert l1_error(grid, ev.final, ref) < 4e-2
    window_mass = float(grid.h * ref.sum())
    assert abs(ev.mass[-1] - window_mass) < 0.01


def test_wide_domain_keeps_levy_mass_drift_small():
    grid = Grid1D(-40.0, 40.0, 1024)
    system = SystemSpec(drift=("0 - x1",), sigma=(("0.3",),),
                        noise=stable_noise(1.5))
    gen = build_adjoint_generator(system, grid)
    ev = evolve_density(gen, delta_initial(grid, 0.0), 1.0, 1e-3)
    assert 0.0 < 1.0 - ev.mass[-1] < 1e-3


def test_backward_euler_stays_positive_near_the_rate_bound():
    grid = Grid1D(-6.0, 6.0, 256)
    gen = build_adjoint_generator(FREE.with_noise(stable_noise(1.5)), grid)
    dt = 0.95 / gen.max_jump_rate
    ev = evolve_density(gen, delta_initial(grid, 0.0), 100 * dt, dt,
                        scheme="be")
    assert ev.min_density >= -1e-12
    assert ev.clipped_mass <= 1e-12


def test_oversized_jump_step_raises():
    gen = build_adjoint_generator(FREE.with_noise(stable_noise(1.5)),
                                  Grid1D(-6.0, 6.0, 256))
    dt = 1.5 / gen.max_jump_rate
    with pytest.raises(StabilityError, match="jump sweep"):
        evolve_density(gen, delta_initial(gen.grid, 0.0), 10 * dt, dt)


def test_state_dependent_sigma_requires_explicit_freezing():
    system = SystemSpec(drift=("0",), sigma=(("0.2 + 0.1*x1^2",),),
                        noise=stable_noise(1.5))
    grid = Grid1D(-4.0, 4.0, 64)
    with pytest.raises(ValidationError, match="frozen_coefficients"):
        build_adjoint_generator(system, grid)
    gen = build_adjoint_generator(system, grid, frozen_coefficients=True)
    sig = 0.2 + 0.1 * grid.centers ** 2
    d = -np.diag(gen.a_nl)
    i, j = 5, 40
    assert d[i] / d[j] == pytest.approx((sig[i] / sig[j]) ** 1.5, rel=1e-12)


def test_stable_noise_rejects_vanishing_sigma():
    system = SystemSpec(drift=("0",), sigma=(("x1",),),
                        noise=stable_noise(1.5))
    with pytest.raises(ValidationError, match="sigma > 0"):
        build_adjoint_generator(system, Grid1D(-4.0, 4.0, 64),
                                frozen_coefficients=True)


# --------------------------------------------------- killed-path Monte Carlo

def test_killed_density_matches_monte_carlo():
    system = SystemSpec(drift=("0 - x1",), sigma=(("1",),),
                        noise=stable_noise(1.0, 0.4))
    grid = Grid1D(-6.0, 6.0, 192)
    gen = build_adjoint_generator(system, grid)
    ev = evolve_density(gen, delta_initial(grid, 0.0), 1.5, 5e-3)
    dens, surv = killed_density_mc(system, 0.0, grid.faces, 1.5, 5e-4,
                                   100_000, 5)
    assert l1_error(grid, ev.final, dens) < 5e-2
    assert abs(ev.mass[-1] - surv) < 0.01


# -------------------------------------------------------------- bookkeeping

def test_renormalize_each_rescales_slices_but_reports_raw_mass():
    system = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),),
                        noise=stable_noise(1.2, 0.3))
    grid = Grid1D(-4.0, 4.0, 64)
    gen = build_adjoint_generator(system, grid)
    p0 = delta_initial(grid, -1.0)
    ev = evolve_density(gen, p0, 2.0, 0.01, renormalize="each")
    slice_mass = grid.h * ev.p.sum(axis=1)
    assert np.abs(slice_mass - 1.0).max() < 1e-12
    assert abs(ev.mass[-1] - 0.9101) < 0.005
    raw = evolve_density(gen, p0, 2.0, 0.01)
    assert np.array_equal(raw.mass, ev.mass)


def test_evolution_validation():
    gen = build_adjoint_generator(OU, Grid1D(-6.0, 6.0, 64))
    p0 = delta_initial(gen.grid, 0.0)
    with pytest.raises(ValidationError, match="renormalize"):
        evolve_density(gen, p0, 1.0, 0.01, renormalize="sometimes")
    with pytest.raises(ValidationError, match="scheme"):
        evolve_density(gen, p0, 1.0, 0.01, scheme="rk4")
    with pytest.raises(ValidationError, match="grid"):
        evolve_density(gen, p0[:-1], 1.0, 0.01)
    with pytest.raises(ValidationError, match="negative"):
        evolve_density(gen, p0 - 1.0, 1.0, 0.01)
    with pytest.raises(ValidationError, match="one step"):
        evolve_density(gen, p0, 0.001, 0.01)


def test_time_dependent_coefficients_are_rejected():
    system = SystemSpec(drift=("cos(t)",), sigma=(("1",),))
    with pytest.raises(ValidationError, match="time-dependent"):
        build_adjoint_generator(system, Grid1D(-4.0, 4.0, 64))


def test_grid_and_initial_blob_validation():
    with pytest.raises(ValidationError):
        Grid1D(1.0, -1.0, 64)
    with pytest.raises(ValidationError):
        Grid1D(-1.0, 1.0, 8)
    grid = Grid1D(-2.0, 2.0, 64)
    p = delta_initial(grid, 0.3)
    assert grid.mass(p) == pytest.approx(1.0, abs=1e-12)
    assert abs(grid.centers[np.argmax(p)] - 0.3) <= grid.h
    with pytest.raises(ValidationError):
        delta_initial(grid, 5.0)
    with pytest.raises(ValidationError):
        delta_initial(grid, 0.0, width=-1.0)


def test_final_slice_property():
    ev = DensityEvolution(t=np.array([0.0, 1.0]),
                          p=np.array([[1.0, 0.0], [0.25, 0.75]]),
                          mass=np.array([1.0, 1.0]),
                          grid=Grid1D(0.0, 2.0, 16), dt=1.0,
                          renormalize="never", clipped_mass=0.0,
                          min_density=0.0)
    assert np.array_equal(ev.final, [0.25, 0.75])
