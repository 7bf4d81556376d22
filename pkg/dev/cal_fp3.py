import time

import numpy as np
from scipy import stats

from stodyn.engine import SystemSpec, simulate_ensemble
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec

# stable-OU stationary: killed PDE on a wide domain vs exact law
t1 = time.time()
sy = SystemSpec(drift=("-x1",), sigma=(("1",),),
                noise=NoiseSpec(family="stable", alpha=1.5))
g = Grid1D(-150.0, 150.0, 1920)
gen = build_adjoint_generator(sy, g)
print(f"cfg: h={g.h:.4f} rate={gen.max_jump_rate:.3f}")
ev = evolve_density(gen, delta_initial(g, 0.0), 8.0, 0.04)
s = (1.0 / 1.5) ** (1 / 1.5)
ref = stats.levy_stable.pdf(g.centers, 1.5, 0.0, scale=s)
l1 = g.h * np.abs(ev.final - ref).sum()
xc = g.centers
win = (xc > 10.0) & (xc < 30.0)
slope = -np.polyfit(np.log(xc[win]), np.log(ev.final[win]), 1)[0]
print(f"PDE vs exact stationary: L1={l1:.3e} slope(10,30)={slope:.3f} "
      f"mass={ev.mass[-1]:.4f}  [{time.time()-t1:.1f}s]")

# MC histogram exponent on the (10, 30) window
t1 = time.time()
es = simulate_ensemble(sy, [0.0], 8.0, 0.01, 1_000_000, 2024,
                       out_every=800, retain=8)
xf = es.final_states[:, 0]
for lo, hi in ((8.0, 25.0), (10.0, 30.0), (12.0, 40.0)):
    edges = np.geomspace(lo, hi, 13)
    cnt, _ = np.histogram(xf[np.isfinite(xf)], bins=edges)
    dens = cnt / np.diff(edges) / len(xf)
    ctr = np.sqrt(edges[:-1] * edges[1:])
    sl = -np.polyfit(np.log(ctr), np.log(dens), 1)[0]
    print(f"MC slope ({lo},{hi}): {sl:.3f} (min bin {cnt.min()})")
print(f"[mc {time.time()-t1:.1f}s]")
