import time

import numpy as np

from stodyn.engine import SystemSpec
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec
from stodyn.portraits import (bifurcation_scan, mean_equilibria, mean_orbit,
                              mean_orbit_mc, most_probable_equilibria,
                              most_probable_orbit)

t0 = time.time()

# 1. OU ridge: dx = -x dt + 0.3 dW from x0=2 -> ridge(t) = 2 e^{-t}
ou = SystemSpec(drift=("-x1",), sigma=(("0.3",),),
                noise=NoiseSpec(family="brownian"))
g = Grid1D(-1.0, 3.0, 512)
gen = build_adjoint_generator(ou, g)
ev = evolve_density(gen, delta_initial(g, 2.0), 2.0, 5e-4, out_every=80)
orb = most_probable_orbit(ev, x0=2.0)
ref = 2.0 * np.exp(-orb.t)
err = np.abs(orb.x[:, 0] - ref).max()
print(f"1. OU ridge max err {err:.2e}  (h={g.h:.4f})  {'OK' if err < g.h else 'FAIL'}")

# mean orbit on same evolution should match the same curve (OU mean = ridge)
mo = mean_orbit(ev)
errm = np.abs(mo.x[:, 0] - ref).max()
print(f"   OU mean  max err {errm:.2e}  {'OK' if errm < g.h else 'FAIL'}")

# 2. scale invariance of the ridge: p -> c*p leaves argmax location exact
ev2 = evolve_density(gen, delta_initial(g, 2.0), 1.0, 5e-4, out_every=200)
r1 = most_probable_orbit(ev2, x0=2.0)
from dataclasses import replace
ev2s = replace(ev2, p=ev2.p * 8.0)
r2 = most_probable_orbit(ev2s, x0=2.0)
same = np.array_equal(r1.x, r2.x)
print(f"2. ridge scale invariance (c=8): {'exact OK' if same else 'FAIL'}")
ev2c = replace(ev2, p=ev2.p * 3.0)
r3 = most_probable_orbit(ev2c, x0=2.0)
ok3 = np.allclose(r1.x, r3.x, rtol=1e-12, atol=0)
print(f"   ridge scale invariance (c=3): {'OK' if ok3 else 'FAIL'}")

# 3. double-well equilibria, sigma=0.2
dw = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.2",),),
                noise=NoiseSpec(family="brownian"))
t1 = time.time()
eqs = most_probable_equilibria(dw, (-2.0, 2.0), 8.0, grid_n=256)
print(f"3. double-well eqs [{time.time()-t1:.1f}s]:")
for e in eqs:
    print(f"   {e.kind:12s} {e.location:+.4f}")
st = sorted(e.location for e in eqs if e.kind == "stable")
un = [e.location for e in eqs if e.kind == "unstable"]
ok = (len(st) == 2 and abs(st[0] + 1) < 0.05 and abs(st[1] - 1) < 0.05
      and len(un) == 1 and abs(un[0]) < 0.05)
print(f"   {'OK' if ok else 'FAIL'}")

# 4. zero-noise fixed points (deterministic advection of the blob)
dw0 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.0",),),
                 noise=NoiseSpec(family="brownian"))
t1 = time.time()
eqs0 = most_probable_equilibria(dw0, (-2.0, 2.0), 8.0, grid_n=512)
print(f"4. zero-noise eqs [{time.time()-t1:.1f}s]:")
for e in eqs0:
    print(f"   {e.kind:12s} {e.location:+.4f}")
st0 = sorted(e.location for e in eqs0 if e.kind == "stable")
ok0 = len(st0) == 2 and abs(st0[0] + 1) < 0.02 and abs(st0[1] - 1) < 0.02
print(f"   {'OK' if ok0 else 'FAIL'}")

# 5. symmetric double-well: mean equilibrium ~0, MPPP says +-1
t1 = time.time()
meq = mean_equilibria(dw, (-2.0, 2.0), 8.0, grid_n=256)
print(f"5. mean eqs [{time.time()-t1:.1f}s]:")
for e in meq:
    print(f"   {e.kind:12s} {e.location:+.4f}")

# 6. pitchfork scan: mu in [-1,1], stable count 1 -> 2 near 0
pf = SystemSpec(drift=("mu*x1 - x1^3",), sigma=(("0.05",),),
                noise=NoiseSpec(family="brownian"), params={"mu": 0.0})
t1 = time.time()
diag = bifurcation_scan(pf, "mu", np.linspace(-1, 1, 11), (-2.0, 2.0), 25.0,
                        grid_n=128)
print(f"6. pitchfork scan [{time.time()-t1:.1f}s]: errors={diag.errors}")
for v, row in zip(diag.values, diag.equilibria):
    if row is None:
        print(f"   mu={v:+.2f}  FAILED")
    else:
        s = ", ".join(f"{e.kind[0]}{e.location:+.3f}" for e in row)
        print(f"   mu={v:+.2f}  {s}")
print(f"   change points: {diag.change_points}")

print(f"total {time.time()-t0:.1f}s")
