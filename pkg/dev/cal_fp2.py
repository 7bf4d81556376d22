import time

import numpy as np
from scipy import stats

from stodyn.engine import SystemSpec, first_passage_stats, simulate_ensemble
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec

# refinement of the free-space alpha=1.5 oracle
for n, dt in ((512, 0.02), (1024, 0.01)):
    t1 = time.time()
    sy = SystemSpec(drift=("0",), sigma=(("1",),),
                    noise=NoiseSpec(family="stable", alpha=1.5))
    g = Grid1D(-16.0, 16.0, n)
    gen = build_adjoint_generator(sy, g)
    ev = evolve_density(gen, delta_initial(g, 0.0), 1.0, dt)
    ref = stats.levy_stable.pdf(g.centers, 1.5, 0.0)
    l1 = g.h * np.abs(ev.final - ref).sum()
    print(f"a=1.5 n={n} dt={dt}: L1={l1:.3e}  [{time.time()-t1:.1f}s]")

# stable-OU stationary tail exponent, PDE side
t1 = time.time()
sy = SystemSpec(drift=("-x1",), sigma=(("1",),),
                noise=NoiseSpec(family="stable", alpha=1.5))
g = Grid1D(-60.0, 60.0, 1536)
gen = build_adjoint_generator(sy, g)
print(f"tail cfg: h={g.h:.4f} rate={gen.max_jump_rate:.2f}")
ev = evolve_density(gen, delta_initial(g, 0.0), 8.0, 0.01)
xc = g.centers
win = (xc > 8.0) & (xc < 25.0)
slope_pde = np.polyfit(np.log(xc[win]), np.log(ev.final[win]), 1)[0]
print(f"PDE tail exponent: {-slope_pde:.3f} vs {1+1.5}  [{time.time()-t1:.1f}s]")

# MC side: 1e6 paths to T=8
t1 = time.time()
es = simulate_ensemble(sy, [0.0], 8.0, 0.01, 1_000_000, 2024,
                       out_every=800, retain=8)
xf = es.final_states[:, 0]
edges = np.geomspace(8.0, 25.0, 13)
cnt, _ = np.histogram(xf[np.isfinite(xf)], bins=edges)
dens = cnt / np.diff(edges) / len(xf)
ctr = np.sqrt(edges[:-1] * edges[1:])
slope_mc = np.polyfit(np.log(ctr), np.log(dens), 1)[0]
print(f"MC tail exponent: {-slope_mc:.3f} (min bin count {cnt.min()})  "
      f"[{time.time()-t1:.1f}s]")

# criterion 6: monotone exit probability, Brownian double well
t1 = time.time()
probs = []
for sig in (0.3, 0.4, 0.5):
    sy = SystemSpec(drift=("x1 - x1^3",), sigma=((repr(sig),),))
    ps = first_passage_stats(sy, -1.0, (-8.0, 0.0), 50.0, 5e-3, 10_000, 11)
    probs.append(ps.exit_probability)
print(f"exit probs sigma .3/.4/.5: {probs}  [{time.time()-t1:.1f}s]")
