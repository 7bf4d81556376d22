"""Ridge extraction, portrait assembly, equilibria, and parameter scans."""
import numpy as np
import pytest

from stodyn.engine import Orbit, SystemSpec
from stodyn.errors import HorizonError, MeanUndefinedError, ValidationError
from stodyn.fokker_planck import (DensityEvolution, Grid1D,
                                  build_adjoint_generator, delta_initial,
                                  evolve_density)
from stodyn.noise import NoiseSpec
from stodyn.portraits import (BifurcationDiagram, Equilibrium, PhasePortrait,
                              bifurcation_scan, mean_equilibria, mean_orbit,
                              mean_orbit_mc, median_orbit_mc,
                              most_probable_equilibria, most_probable_orbit,
                              most_probable_portrait)

OU = SystemSpec(("0 - x1",), (("0.5",),))


def double_well(sig):
    return SystemSpec(("x1 - x1^3",), ((str(sig),),))


def fabricated(grid, t, p, renormalize="never"):
    p = np.asarray(p, dtype=float)
    return DensityEvolution(t=np.asarray(t, dtype=float), p=p,
                            mass=grid.h * p.sum(axis=1), grid=grid, dt=0.1,
                            renormalize=renormalize, clipped_mass=0.0,
                            min_density=float(p.min()))


# ---------------------------------------------------------------- ridge


def test_ou_ridge_tracks_exponential_decay():
    grid = Grid1D(-4.0, 4.0, 1024)
    gen = build_adjoint_generator(OU, grid)
    ev = evolve_density(gen, delta_initial(grid, 2.0), 2.0, 2e-3)
    orb = most_probable_orbit(ev)
    ref = 2.0 * np.exp(-orb.t)
    err = np.abs(orb.x[:, 0] - ref).max()
    assert err < grid.h


def test_ridge_invariant_under_density_scaling():
    grid = Grid1D(-2.0, 2.0, 64)
    rng = np.random.default_rng(0)
    p = rng.random((5, 64)) + 0.01
    t = np.linspace(0.0, 0.4, 5)
    base = most_probable_orbit(fabricated(grid, t, p)).x
    # powers of two rescale every intermediate exactly
    x8 = most_probable_orbit(fabricated(grid, t, 8.0 * p)).x
    assert np.array_equal(x8, base)
    x3 = most_probable_orbit(fabricated(grid, t, 3.0 * p)).x
    assert np.allclose(x3, base, rtol=0.0, atol=1e-12)


def test_tie_break_steered_by_first_slice_mass():
    grid = Grid1D(-2.0, 2.0, 64)
    c = grid.centers
    single = np.zeros(64)
    single[48] = 1.0
    twin = np.zeros(64)
    twin[16] = twin[48] = 1.0
    orb = most_probable_orbit(fabricated(grid, [0.0, 0.1], [single, twin]))
    assert orb.x[0, 0] == c[48]
    assert orb.x[1, 0] == c[48]


def test_tie_break_steered_by_x0():
    grid = Grid1D(-2.0, 2.0, 64)
    c = grid.centers
    twin = np.zeros(64)
    twin[16] = twin[48] = 1.0
    orb = most_probable_orbit(fabricated(grid, [0.0, 0.1], [twin, twin]),
                              x0=-1.0)
    assert orb.x[0, 0] == c[16]
    assert orb.x[1, 0] == c[16]


def test_all_zero_slice_rejected():
    grid = Grid1D(-2.0, 2.0, 64)
    with pytest.raises(ValidationError, match="all-zero"):
        most_probable_orbit(fabricated(grid, [0.0], [np.zeros(64)]))
    ok = np.zeros(64)
    ok[10] = 1.0
    with pytest.raises(ValidationError, match="all-zero"):
        most_probable_orbit(fabricated(grid, [0.0, 0.1], [ok, np.zeros(64)]))


def test_parabolic_refinement_recovers_off_cell_peak():
    grid = Grid1D(-1.0, 1.0, 64)
    c, h = grid.centers, grid.h
    x_star = c[30] + 0.3 * h
    p = np.maximum(0.0, 1.0 - 3.0 * (c - x_star) ** 2)
    orb = most_probable_orbit(fabricated(grid, [0.0], [p]), x0=0.0)
    assert abs(orb.x[0, 0] - x_star) < 1e-12


def test_refinement_keeps_symmetric_peak_on_center():
    grid = Grid1D(-1.0, 1.0, 64)
    p = 1.0 / (1.0 + np.abs(np.arange(64) - 20))
    orb = most_probable_orbit(fabricated(grid, [0.0], [p]), x0=0.0)
    assert orb.x[0, 0] == grid.centers[20]


# ------------------------------------------------------------ mean orbit


def test_mean_orbit_matches_mc_band_on_ou():
    grid = Grid1D(-4.0, 4.0, 512)
    gen = build_adjoint_generator(OU, grid)
    ev = evolve_density(gen, delta_initial(grid, 1.5), 2.0, 2e-3,
                        renormalize="each", out_every=5)
    pde = mean_orbit(ev)
    mc = mean_orbit_mc(OU, [1.5], 2.0, 2e-3, 20000, 31)
    assert np.array_equal(pde.t, mc.t)
    assert np.all(np.abs(pde.x - mc.x) <= mc.band + 1e-9)


def test_mean_orbit_rejects_leaky_density():
    sy = SystemSpec(("x1 - x1^3",), (("0.5",),),
                    noise=NoiseSpec("stable", 1.2, 0.3))
    grid = Grid1D(-4.0, 4.0, 64)
    gen = build_adjoint_generator(sy, grid)
    ev = evolve_density(gen, delta_initial(grid, -1.0), 2.0, 0.01)
    with pytest.raises(ValidationError, match="renormalize='each'"):
        mean_orbit(ev)


def test_mean_undefined_for_heavy_tails():
    for alpha in (0.9, 1.0):
        sy = SystemSpec(("0 - x1",), (("0.3",),),
                        noise=NoiseSpec("stable", alpha, 0.0))
        with pytest.raises(MeanUndefinedError, match="median_orbit_mc"):
            mean_orbit_mc(sy, [0.0], 0.2, 0.01, 200, 1)
    sy = SystemSpec(("0 - x1",), (("0.3",),),
                    noise=NoiseSpec("stable", 0.9, 0.0))
    orb = median_orbit_mc(sy, [0.0], 0.2, 0.01, 200, 1)
    assert orb.provenance == "median-mc"
    assert np.all(np.isfinite(orb.x))


# ------------------------------------------------------------ equilibria


def test_shallow_double_well_equilibria():
    eqs = most_probable_equilibria(double_well(0.2), (-2.0, 2.0), 25.0,
                                   grid_n=256)
    assert [e.kind for e in eqs] == ["stable", "unstable", "stable"]
    assert abs(eqs[0].location + 1.0) <= 0.02
    assert abs(eqs[1].location) <= 0.02
    assert abs(eqs[2].location - 1.0) <= 0.02


def test_wide_noise_shifts_wells_outward():
    eqs = most_probable_equilibria(double_well(0.5), (-2.0, 2.0), 25.0,
                                   grid_n=256)
    assert [e.kind for e in eqs] == ["stable", "unstable", "stable"]
    # stronger noise pushes the density peaks slightly past the drift zeros
    assert abs(eqs[0].location + 1.0) <= 0.02
    assert abs(eqs[2].location - 1.0) <= 0.02


def test_mean_equilibria_collapse_symmetric_wells():
    eqs = mean_equilibria(double_well(0.5), (-2.0, 2.0), 120.0, grid_n=256)
    assert len(eqs) == 1
    assert eqs[0].kind == "stable"
    assert abs(eqs[0].location) <= 0.02


def test_probe_count_invariance():
    sy = double_well(0.2)
    nine = most_probable_equilibria(sy, (-2.0, 2.0), 25.0, grid_n=256)
    probes = np.linspace(-1.76, 1.76, 17)
    seventeen = most_probable_equilibria(sy, (-2.0, 2.0), 25.0, probes=probes,
                                         grid_n=256)
    assert [e.kind for e in nine] == [e.kind for e in seventeen]
    for a, b in zip(nine, seventeen):
        assert abs(a.location - b.location) <= 0.05


def test_equilibria_jobs_parity():
    sy = double_well(0.2)
    one = most_probable_equilibria(sy, (-2.0, 2.0), 25.0, grid_n=128)
    four = most_probable_equilibria(sy, (-2.0, 2.0), 25.0, grid_n=128, jobs=4)
    assert [(e.location, e.kind) for e in one] == \
        [(e.location, e.kind) for e in four]


def test_probe_validation():
    sy = double_well(0.2)
    with pytest.raises(ValidationError, match="at least 8"):
        most_probable_equilibria(sy, (-2.0, 2.0), 25.0,
                                 probes=np.linspace(-1.5, 1.5, 5))
    with pytest.raises(ValidationError, match="probe"):
        most_probable_equilibria(sy, (-2.0, 2.0), 25.0,
                                 probes=np.linspace(-3.0, 3.0, 9))


def test_short_horizon_raises():
    sy = SystemSpec(("1",), (("0.8",),))
    with pytest.raises(HorizonError, match="extend the horizon"):
        most_probable_equilibria(sy, (-3.0, 3.0), 2.0, grid_n=128)


# ------------------------------------------------------------- portraits


def test_most_probable_portrait_assembly():
    po = most_probable_portrait(double_well(0.2), (-2.0, 2.0), 25.0,
                                grid_n=128)
    assert len(po.orbits) == 9
    assert all(o.provenance == "most-probable" for o in po.orbits)
    assert po.config["kind"] == "most-probable"
    assert po.config["domain"] == (-2.0, 2.0)
    assert po.config["t_final"] == 25.0
    assert po.config["grid_n"] == 128
    assert po.config["dt"] > 0
    assert [e.kind for e in po.equilibria] == ["stable", "unstable", "stable"]


def test_equilibrium_kind_validation():
    with pytest.raises(ValidationError, match="kind"):
        Equilibrium(0.0, "attracting")


def test_portrait_rejects_mixed_provenance():
    t = np.array([0.0, 1.0])
    a = Orbit(t, np.zeros(2), "most-probable")
    b = Orbit(t, np.zeros(2), "mean")
    with pytest.raises(ValidationError, match="provenance"):
        PhasePortrait(orbits=[a, b], equilibria=[])


def test_portrait_rejects_equilibrium_outside_domain():
    t = np.array([0.0, 1.0])
    a = Orbit(t, np.zeros(2), "mean")
    with pytest.raises(ValidationError, match="outside domain"):
        PhasePortrait(orbits=[a], equilibria=[Equilibrium(3.0, "stable")],
                      config={"domain": (-2.0, 2.0)})


def test_diagram_requires_increasing_values():
    with pytest.raises(ValidationError, match="increasing"):
        BifurcationDiagram(param="mu", values=np.array([0.5, 0.1]),
                           equilibria=[[], []], errors={}, change_points=[])


# ----------------------------------------------------------------- scans


def test_pitchfork_scan_finds_change_point():
    sy = SystemSpec(("mu*x1 - x1^3",), (("0.2",),), params={"mu": -0.5})
    d = bifurcation_scan(sy, "mu", [-0.5, 0.5], (-2.0, 2.0), 25.0, grid_n=128)
    assert d.param == "mu"
    assert d.errors == {}
    assert d.change_points == [(-0.5, 0.5, 1, 2)]
    assert [e.kind for e in d.equilibria[1]] == ["stable", "unstable",
                                                 "stable"]


def test_scan_jobs_parity():
    sy = SystemSpec(("mu*x1 - x1^3",), (("0.2",),), params={"mu": -0.5})
    one = bifurcation_scan(sy, "mu", [-0.5, 0.5], (-2.0, 2.0), 25.0,
                           grid_n=128)
    three = bifurcation_scan(sy, "mu", [-0.5, 0.5], (-2.0, 2.0), 25.0,
                             grid_n=128, jobs=3)
    assert one.change_points == three.change_points
    for ra, rb in zip(one.equilibria, three.equilibria):
        assert [(e.location, e.kind) for e in ra] == \
            [(e.location, e.kind) for e in rb]


def test_scan_records_per_value_errors():
    sy = SystemSpec(("x1 - x1^3",), (("sig",),),
                    noise=NoiseSpec("stable", 1.5, 0.0),
                    params={"sig": 0.3})
    d = bifurcation_scan(sy, "sig", [0.0, 0.3, 0.6], (-6.0, 6.0), 25.0,
                         grid_n=128)
    assert d.equilibria[0] is None
    assert set(d.errors) == {0.0}
    assert "sigma" in d.errors[0.0]
    assert isinstance(d.equilibria[1], list)
    assert isinstance(d.equilibria[2], list)
    assert all(0.0 not in (lo, hi) for lo, hi, _, _ in d.change_points)


def test_scan_over_noise_parameter():
    sy = SystemSpec(("0 - x1",), (("0.4",),),
                    noise=NoiseSpec("stable", 1.5, 0.0))
    with pytest.raises(ValidationError, match="neither a system parameter"):
        bifurcation_scan(sy, "zeta", [0.1, 0.2], (-2.0, 2.0), 10.0)


def test_scan_validation():
    sy = double_well(0.2)
    with pytest.raises(ValidationError, match="at least 2"):
        bifurcation_scan(sy, "alpha", [0.5], (-2.0, 2.0), 10.0)
    with pytest.raises(ValidationError, match="strictly increasing"):
        bifurcation_scan(sy, "alpha", [1.5, 0.5], (-2.0, 2.0), 10.0)
