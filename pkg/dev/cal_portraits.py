import time

import numpy as np

from stodyn.engine import SystemSpec, killed_density_mc
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec
from stodyn.portraits import (mean_equilibria, mean_orbit, mean_orbit_mc,
                              most_probable_equilibria, most_probable_orbit)

# criterion 4 config: OU ridge vs 2 exp(-t)
t1 = time.time()
sy = SystemSpec(drift=("-x1",), sigma=(("0.5",),))
g = Grid1D(-4.0, 4.0, 1024)
gen = build_adjoint_generator(sy, g)
ev = evolve_density(gen, delta_initial(g, 2.0), 2.0, 2e-3)
orb = most_probable_orbit(ev)
err = np.max(np.abs(orb.x[:, 0] - 2.0 * np.exp(-orb.t)))
print(f"OU ridge max err: {err:.2e} vs h={g.h:.4f}  [{time.time()-t1:.1f}s]")

# criterion 4: double well sigma=0.2 stable equilibria near +-1
t1 = time.time()
dw = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.2",),))
eqs = most_probable_equilibria(dw, (-2.0, 2.0), 25.0)
print("dw mppp:", [(round(e.location, 4), e.kind) for e in eqs],
      f"[{time.time()-t1:.1f}s]")

# criterion 5: PDE mean vs MC mean band on OU and double-well
for name, sysm, x0, T in (("ou", SystemSpec(drift=("-x1",), sigma=(("0.5",),)), 1.5, 2.0),
                          ("dw", SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),)), -1.0, 4.0)):
    t1 = time.time()
    g = Grid1D(-4.0, 4.0, 512)
    gen = build_adjoint_generator(sysm, g)
    ev = evolve_density(gen, delta_initial(g, x0), T, 2e-3, renormalize="each",
                        out_every=50)
    mo = mean_orbit(ev)
    mc = mean_orbit_mc(sysm, [x0], T, 2e-3, 20000, 31)
    sel = np.searchsorted(mc.t, mo.t)
    gap = np.abs(mo.x[:, 0] - mc.x[sel, 0])
    band = mc.band[sel, 0]
    print(f"{name} mean orbit: max|pde-mc|={gap.max():.4f} min band={band.min():.4f} "
          f"ok={(gap <= band).all()}  [{time.time()-t1:.1f}s]")

# criterion 5: symmetric double-well mean equilibrium at 0, mppp at +-1
t1 = time.time()
dw5 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),))
eq_m = mean_equilibria(dw5, (-2.0, 2.0), 120.0)
eq_p = most_probable_equilibria(dw5, (-2.0, 2.0), 25.0)
print("mean eq:", [(round(e.location, 4), e.kind) for e in eq_m])
print("mppp eq:", [(round(e.location, 4), e.kind) for e in eq_p],
      f"[{time.time()-t1:.1f}s]")

# killed-vs-killed MC at reduced size (unit-test scale)
t1 = time.time()
sk = SystemSpec(drift=("-x1",), sigma=(("1",),),
                noise=NoiseSpec(family="stable", alpha=1.0, beta=0.4))
g = Grid1D(-6.0, 6.0, 192)
gen = build_adjoint_generator(sk, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 1.5, 5e-3)
dens, surv = killed_density_mc(sk, 0.0, g.faces, 1.5, 5e-4, 100_000, 5)
l1 = g.h * np.abs(ev.final - dens).sum()
print(f"killed a=1 b=0.4: L1={l1:.3e} mass pde={ev.mass[-1]:.4f} mc={surv:.4f} "
      f"[{time.time()-t1:.1f}s]")
