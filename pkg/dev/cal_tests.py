"""Last calibration pass before freezing the test suite."""
import math
import time

import numpy as np

from stodyn import backend
from stodyn.engine import SystemSpec, first_passage_stats, integrate_em, simulate_ensemble
from stodyn.expr import evaluate, parse
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator, delta_initial,
                                  evolve_density)
from stodyn.kernels import cms_transform, get_em_stepper, get_passage_stepper
from stodyn.noise import NoiseSpec, make_noise_path, sample_stable
from stodyn.portraits import (mean_equilibria, most_probable_equilibria,
                              most_probable_orbit)
from stodyn.rng import derive_rng
from stodyn.slow_manifold import (SlowFastSpec, full_slowfast_integrate,
                                  invariance_error, lyapunov_perron_solve,
                                  reduced_slow_integrate, stationary_eta,
                                  truncated_h)

t0 = time.time()


def clock(label):
    print(f"    [{time.time() - t0:6.1f}s] {label}")


# 0. complex pow now raises
try:
    evaluate(parse("(0 - 8)^0.5"), {})
    print("0. complex pow: NO RAISE (bad)")
except Exception as e:
    print(f"0. complex pow raises {type(e).__name__}: {e}")

# ---- quadrature oracle for symmetric stable densities ----------------------

def stable_pdf(x, alpha, scale=1.0, u_max=None, panel=0.5, nodes=16):
    """p(x) = (1/pi) int_0^inf exp(-(scale*u)^alpha) cos(u x) du via GL panels."""
    if u_max is None:
        u_max = (40.0 / scale ** alpha) ** (1.0 / alpha)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    edges = np.arange(0.0, u_max + panel, panel)
    u = ((edges[:-1, None] + edges[1:, None]) / 2 + (panel / 2) * gx[None, :]).ravel()
    w = np.tile((panel / 2) * gw, len(edges) - 1)
    ker = np.exp(-np.abs(scale * u) ** alpha) * w
    return (ker[None, :] * np.cos(np.outer(x, u))).sum(axis=1) / np.pi


# sanity: alpha=2 gives N(0, 2)
xs = np.linspace(-5, 5, 11)
ref = np.exp(-xs ** 2 / 4) / math.sqrt(4 * math.pi)
err = np.abs(stable_pdf(xs, 2.0) - ref).max()
print(f"1. oracle alpha=2 vs N(0,2): max err {err:.2e}")
# sanity: cauchy
ref = 1 / (math.pi * (1 + xs ** 2))
print(f"   oracle alpha=1 vs cauchy: max err {np.abs(stable_pdf(xs, 1.0) - ref).max():.2e}")

# 2. free-space stable runs vs oracle
sy = SystemSpec(drift=("0",), sigma=(("1",),), noise=NoiseSpec(family="stable", alpha=1.5))
res = {}
for n, dt in ((512, 0.02), (1024, 0.01)):
    g = Grid1D(-16, 16, n)
    gen = build_adjoint_generator(sy, g)
    ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, dt)
    pref = stable_pdf(g.centers, 1.5)
    res[n] = float(np.abs(ev.final - pref).sum() * g.h)
    print(f"2. free alpha=1.5 n={n} dt={dt}: L1={res[n]:.4e} mass={ev.mass[-1]:.6f}")
print(f"   refinement ratio {res[1024] / res[512]:.3f}")
clock("free 1.5")

sy7 = SystemSpec(drift=("0",), sigma=(("1",),), noise=NoiseSpec(family="stable", alpha=0.7))
g = Grid1D(-16, 16, 512)
gen = build_adjoint_generator(sy7, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, 0.005)
pref = stable_pdf(g.centers, 0.7, u_max=220.0)
l1 = float(np.abs(ev.final - pref).sum() * g.h)
mref = float(pref.sum() * g.h)
print(f"3. free alpha=0.7: L1={l1:.4e} mass={ev.mass[-1]:.4f} ref window mass={mref:.4f}")
clock("free 0.7")

# 4. stable-OU stationary vs exact law (PDE side of criterion 3)
syou = SystemSpec(drift=("-x1",), sigma=(("1",),), noise=NoiseSpec(family="stable", alpha=1.5))
g = Grid1D(-150, 150, 1920)
gen = build_adjoint_generator(syou, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 8.0, 0.04)
s_stat = (1 / 1.5) ** (1 / 1.5)
pref = stable_pdf(g.centers, 1.5, scale=s_stat, u_max=45.0)
l1 = float(np.abs(ev.final - pref).sum() * g.h)
sel = (np.abs(g.centers) >= 10) & (np.abs(g.centers) <= 30)
xa = np.abs(g.centers[sel])
slope = -np.polyfit(np.log(xa), np.log(ev.final[sel]), 1)[0]
print(f"4. stable-OU stationary: L1={l1:.4e} slope(10,30)={slope:.4f} mass={ev.mass[-1]:.4f}")
clock("stable-OU PDE")

# 5. heat second-moment growth + mass
syh = SystemSpec(drift=("0",), sigma=(("1",),))
g = Grid1D(-8, 8, 256)
gen = build_adjoint_generator(syh, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, 1e-3)
m2 = (ev.p * g.centers ** 2).sum(axis=1) * g.h
print(f"5. heat: mass drift {np.abs(ev.mass - 1).max():.2e}, "
      f"m2 growth err {abs(m2[-1] - m2[0] - 1.0):.2e}")

# 6. mean translation invariance f=1
syt = SystemSpec(drift=("1",), sigma=(("0.4",),))
g = Grid1D(-3, 6, 144)
gen = build_adjoint_generator(syt, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 2.0, 5e-3)
m1 = (ev.p * g.centers).sum(axis=1) * g.h
print(f"6. f=1 mean translation: max|m1 - t| = {np.abs(m1 - ev.t).max():.2e}")

# 7. BE vs CN steady state
syo = SystemSpec(drift=("-x1",), sigma=(("1",),))
g = Grid1D(-6, 6, 128)
gen = build_adjoint_generator(syo, g)
e1 = evolve_density(gen, delta_initial(g, 1.5), 12.0, 0.01, scheme="cn")
e2 = evolve_density(gen, delta_initial(g, 1.5), 12.0, 0.05, scheme="be")
print(f"7. be-vs-cn steady: L1 diff {np.abs(e1.final - e2.final).sum() * g.h:.2e}")

# 8. weak OU mean band, m=20000 seed 17
syw = SystemSpec(drift=("-x1",), sigma=(("0.3",),))
st = simulate_ensemble(syw, [2.0], 1.0, 0.02, 20000, 17, out_every=10)
k = np.round(st.t / 0.02).astype(int)
exact = 2.0 * (1 - 0.02) ** k
band = 3.5 * np.sqrt(st.var / st.m_paths)
gap = np.abs(st.mean[:, 0] - exact)
print(f"8. weak OU: worst gap/band = {np.max(gap[1:] / band[1:, 0]):.3f}")
clock("weak OU")

# 9. deterministic passage: drift 1, sigma 0
syd = SystemSpec(drift=("1",), sigma=(("0",),))
ps = first_passage_stats(syd, -0.5, (-2.0, 1.0), 4.0, 0.015625, 64, 3,
                         threshold=0.0, band=0.25)
print(f"9. det passage: exits unique {np.unique(ps.exit_times)}, "
      f"trans unique {np.unique(ps.transitions)}, prob {ps.exit_probability}")

# 10. oscillation transitions f=cos(t)
syc = SystemSpec(drift=("cos(t)",), sigma=(("0",),))
ps = first_passage_stats(syc, 0.1, (-3.0, 3.0), 4 * math.pi, 0.01, 8, 3,
                         threshold=0.0, band=0.5)
print(f"10. cos(t) transitions: unique {np.unique(ps.transitions)}, "
      f"exit prob {ps.exit_probability}")

# 11. ECF at 2e5 worst error
def cf_target(u, alpha, beta):
    u = np.asarray(u, dtype=float)
    if alpha == 1.0:
        return np.exp(-np.abs(u) * (1 + 1j * beta * (2 / np.pi) * np.sign(u)
                                    * np.log(np.abs(u))))
    return np.exp(-np.abs(u) ** alpha * (1 - 1j * beta * np.sign(u)
                                         * np.tan(np.pi * alpha / 2)))

worst = 0.0
uu = np.array([0.5, 1.0, 2.0])
cases = [(a, b) for a in (0.5, 1.0, 1.5) for b in (-1.0, 0.0, 1.0)] + [(2.0, 0.0)]
for i, (a, b) in enumerate(cases):
    x = sample_stable(a, b, 1.0, derive_rng(42, i), size=200_000)
    for u in uu:
        emp = np.exp(1j * u * x).mean()
        tgt = cf_target(u, a, b)
        worst = max(worst, abs(emp.real - tgt.real), abs(emp.imag - tgt.imag))
print(f"11. ECF 2e5 worst component err {worst:.4f}")
clock("ecf")

# 12. horizon error trigger
syf = SystemSpec(drift=("1",), sigma=(("0.8",),))
try:
    most_probable_equilibria(syf, (-3, 3), 2.0, grid_n=128)
    print("12. HorizonError trigger: NO RAISE (bad)")
except Exception as e:
    print(f"12. HorizonError trigger: {type(e).__name__}: {str(e)[:70]}")
clock("horizon")

# 13. mean_equilibria dw sigma=0.5 horizon 120
sydw = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),))
eqs = mean_equilibria(sydw, (-2, 2), 120.0)
print(f"13. mean eqs dw: {[(round(e.location, 4), e.kind) for e in eqs]}")
clock("mean eqs")

# 14. slow-manifold: LP vs trunc sup diff ratio over eps halving
def nl_spec(eps, sigma=0.0):
    return SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",),
                        g=("0.4*sin(2*x1) - 0.1*tanh(y1)",), eps=eps, sigma=sigma)

xi = np.linspace(-2.5, 2.5, 65)
d = {}
for eps in (0.05, 0.025):
    lp = lyapunov_perron_solve(nl_spec(eps), xi)
    tr = truncated_h(nl_spec(eps), xi)
    d[eps] = float(np.abs(lp.values - tr.values).max())
print(f"14. LP-trunc sup: eps=0.05 {d[0.05]:.3e}, eps=0.025 {d[0.025]:.3e}, "
      f"ratio {d[0.05] / d[0.025]:.2f}")
clock("lp vs trunc")

# 15. criterion-8 ladder: reduced vs full slow orbit sup gap, bundled nonlinear
gaps = {}
for eps in (0.1, 0.05, 0.025):
    sp = nl_spec(eps)
    graph = lyapunov_perron_solve(sp, xi)
    y0 = graph.interp(np.array([2.0]))[0] + 1.0
    full = full_slowfast_integrate(sp, [2.0], y0, 5.0, 0.001)
    red = reduced_slow_integrate(sp, graph, 2.0, 5.0, 0.001)
    gaps[eps] = float(np.abs(full.x[:, 0] - red.x[:, 0]).max())
print(f"15. ladder gaps {[(e, round(gaps[e], 5)) for e in (0.1, 0.05, 0.025)]}, "
      f"ratios {gaps[0.05] / gaps[0.1]:.3f} {gaps[0.025] / gaps[0.05]:.3f}")
clock("ladder")

# 16. invariance_error on truncated graphs, monotone in eps
for eps in (0.1, 0.05):
    sp = nl_spec(eps)
    tr = truncated_h(sp, np.linspace(-2.5, 2.5, 257))
    reps = invariance_error(sp, tr, [-1.5, 0.5, 2.0], 1.0, 0.001)
    print(f"16. invariance eps={eps}: sups {[round(r['sup'], 5) for r in reps]}")
clock("invariance")

# 17. eta: shifted-frame identity and burn-in agreement
spe = SlowFastSpec(a=((-1.0,),), b=((-1.0,),), f=("0",), g=("0",), eps=0.1, sigma=1.0)
pa = make_noise_path(NoiseSpec(), 1e-3, 1000, 2000, 77)
e1 = stationary_eta(spe, pa)
e2 = stationary_eta(spe, pa.shifted(1000))
print(f"17. eta shift: arrays equal {np.array_equal(e1.eta, e2.eta)}, "
      f"k_valid {e1.k_valid} vs {e2.k_valid}")
pb = make_noise_path(NoiseSpec(), 1e-3, 3000, 2000, 77)
e3 = stationary_eta(spe, pb)
d0 = abs(e1.at_step(0)[0] - e3.at_step(0)[0])
print(f"    burn diff at step 0: {d0:.2e}")

# 18. backend parity quick checks
if backend._has_numba():
    u = math.pi * (derive_rng(1).random(4000) - 0.5)
    w = derive_rng(2).standard_exponential(4000)
    worst = 0.0
    for a, b in [(0.5, -0.7), (1.0, 0.3), (1.5, 0.0), (1.9, 1.0), (2.0, 0.0)]:
        backend._FORCED = "numpy"
        r1 = cms_transform(u, w, a, b)
        backend._FORCED = "numba"
        r2 = cms_transform(u, w, a, b)
        backend._FORCED = None
        worst = max(worst, float(np.abs((r1 - r2) / np.maximum(np.abs(r1), 1e-30)).max()))
    print(f"18. cms twin worst rel err {worst:.2e}")

    sy2 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),))
    outs = {}
    for be in ("numpy", "numba"):
        backend._FORCED = be
        st2 = simulate_ensemble(sy2, [-1.0], 0.5, 0.01, 500, 99, out_every=10)
        outs[be] = st2
        backend._FORCED = None
    same = (np.array_equal(outs["numpy"].mean, outs["numba"].mean)
            and np.array_equal(outs["numpy"].quantiles, outs["numba"].quantiles))
    print(f"18b. ensemble polynomial backend bit parity: {same}")

    outs = {}
    for be in ("numpy", "numba"):
        backend._FORCED = be
        ps2 = first_passage_stats(sy2, -1.0, (-4.0, 4.0), 2.0, 0.01, 2000, 5,
                                  threshold=0.0, band=0.1)
        outs[be] = ps2
        backend._FORCED = None
    same = (np.array_equal(outs["numpy"].exit_times, outs["numba"].exit_times, equal_nan=True)
            and np.array_equal(outs["numpy"].transitions, outs["numba"].transitions))
    print(f"18c. passage backend bit parity: {same}")

    # blow-up freeze parity
    syb = SystemSpec(drift=("x1^3",), sigma=(("0.1",),))
    outs = {}
    for be in ("numpy", "numba"):
        backend._FORCED = be
        st3 = simulate_ensemble(syb, [3.0], 2.0, 0.05, 100, 13, out_every=5)
        outs[be] = st3
        backend._FORCED = None
    same = (outs["numpy"].blowup_fraction == outs["numba"].blowup_fraction
            and np.array_equal(outs["numpy"].final_states, outs["numba"].final_states,
                               equal_nan=True))
    print(f"18d. blowup parity: {same}, fraction {outs['numpy'].blowup_fraction}")
clock("parity")

# 19. levy-0.5 exit mass below t=1
syl = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.3",),),
                 noise=NoiseSpec(family="stable", alpha=0.5))
ps = first_passage_stats(syl, -1.0, (-8.0, 0.0), 50.0, 1e-3, 4000, 1729)
frac = float((ps.exit_times[np.isfinite(ps.exit_times)] < 1.0).size) / ps.m_paths
below = float(np.nansum(ps.exit_times < 1.0)) / ps.m_paths
print(f"19. levy-0.5 exits: prob {ps.exit_probability:.4f}, below t=1 frac {below:.4f}")
clock("levy exits")

# 20. DensityEvolution t[0] check
print(f"20. ev.t[0]={ev.t[0]}, p0 returned: {np.allclose(ev.p[0].sum() * g.h, 1, atol=1e-9)}")

# 21. dt default evolve: renormalize each slice sums
g3 = Grid1D(-4, 4, 64)
sy3 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),),
                 noise=NoiseSpec(family="stable", alpha=1.2, beta=0.3))
gen3 = build_adjoint_generator(sy3, g3)
ev3 = evolve_density(gen3, delta_initial(g3, -1.0), 2.0, 0.01, renormalize="each")
print(f"21. renorm each: slice mass err {np.abs(ev3.p.sum(axis=1) * g3.h - 1).max():.2e}, "
      f"raw mass final {ev3.mass[-1]:.4f}")

print(f"total {time.time() - t0:.1f}s")
