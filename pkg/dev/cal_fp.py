import time

import numpy as np
from scipy import stats

from stodyn.engine import SystemSpec, first_passage_stats, simulate_ensemble
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec

t0 = time.time()

# 1) heat: local mass drift over 1000 steps, far walls
sy = SystemSpec(drift=("0",), sigma=(("1",),))
g = Grid1D(-8.0, 8.0, 256)
gen = build_adjoint_generator(sy, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, 1e-3)
print(f"heat mass drift: {abs(ev.mass[-1] - 1.0):.3e}  [{time.time()-t0:.1f}s]")

# 2) OU stationary L1 vs N(0, 1/2)
t1 = time.time()
sy = SystemSpec(drift=("-x1",), sigma=(("1",),))
g = Grid1D(-6.0, 6.0, 256)
gen = build_adjoint_generator(sy, g)
ev = evolve_density(gen, delta_initial(g, 1.0), 10.0, 0.01)
ref = stats.norm.pdf(g.centers, 0.0, np.sqrt(0.5))
l1 = g.h * np.abs(ev.final - ref).sum()
print(f"OU stationary L1: {l1:.3e}  [{time.time()-t1:.1f}s]")

# 3) free-space stable vs scipy, alpha=1.5 and 0.7
for alpha, dom, n, dt in ((1.5, 16.0, 512, 0.02), (0.7, 16.0, 512, 0.005)):
    t1 = time.time()
    sy = SystemSpec(drift=("0",), sigma=(("1",),),
                    noise=NoiseSpec(family="stable", alpha=alpha))
    g = Grid1D(-dom, dom, n)
    gen = build_adjoint_generator(sy, g)
    print(f"  a={alpha}: max_rate={gen.max_jump_rate:.2f} dt_max={1/gen.max_jump_rate:.3f}")
    ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, dt)
    ref = stats.levy_stable.pdf(g.centers, alpha, 0.0)
    l1 = g.h * np.abs(ev.final - ref).sum()
    print(f"stable free a={alpha}: L1={l1:.3e} mass={ev.mass[-1]:.4f} "
          f"refmass={g.h*ref.sum():.4f}  [{time.time()-t1:.1f}s]")

# 4) nonlocal mass drift: small sigma, huge domain
t1 = time.time()
sy = SystemSpec(drift=("0",), sigma=(("0.3",),),
                noise=NoiseSpec(family="stable", alpha=1.5))
g = Grid1D(-40.0, 40.0, 1024)
gen = build_adjoint_generator(sy, g)
ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, 1e-3)
print(f"nonlocal mass drift (1e3 steps): {abs(ev.mass[-1] - 1.0):.3e}  "
      f"[{time.time()-t1:.1f}s]")
