import time

import numpy as np

from stodyn.engine import SystemSpec
from stodyn.noise import NoiseSpec
from stodyn.portraits import bifurcation_scan, most_probable_equilibria

t0 = time.time()
dw = SystemSpec(drift=("x1 - x1^3",), sigma=(("sig*sqrt(1 + x1^2)",),),
                noise=NoiseSpec(family="brownian"), params={"sig": 1.0})
vals = np.array([0.6, 0.8, 0.9, 1.0, 1.1, 1.3])
diag = bifurcation_scan(dw, "sig", vals, (-4.0, 4.0), 25.0, grid_n=256)
print(f"sigma scan [{time.time()-t0:.1f}s]: errors={diag.errors}")
for v, row in zip(diag.values, diag.equilibria):
    mode = np.sqrt(max(1 - v * v, 0.0))
    s = ", ".join(f"{e.kind[:4]}{e.location:+.3f}" for e in row)
    n = sum(e.kind == "stable" for e in row)
    print(f"   sig={v:.2f}  oracle modes +-{mode:.3f}  [{n}] {s}")
print(f"   change points: {diag.change_points}")

# probe doubling invariance on the double-well
dw2 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.2",),),
                 noise=NoiseSpec(family="brownian"))
p1 = np.linspace(-1.8, 1.8, 9)
p2 = np.linspace(-1.8, 1.8, 17)
e1 = most_probable_equilibria(dw2, (-2, 2), 8.0, probes=p1, grid_n=256)
e2 = most_probable_equilibria(dw2, (-2, 2), 8.0, probes=p2, grid_n=256)
print("9 probes :", ", ".join(f"{e.kind[:4]}{e.location:+.3f}" for e in e1))
print("17 probes:", ", ".join(f"{e.kind[:4]}{e.location:+.3f}" for e in e2))

# OU single stable equilibrium at 0 within h
ou = SystemSpec(drift=("-x1",), sigma=(("1.0",),), noise=NoiseSpec(family="brownian"))
eo = most_probable_equilibria(ou, (-3, 3), 10.0, grid_n=256)
print("OU       :", ", ".join(f"{e.kind[:4]}{e.location:+.4f}" for e in eo),
      f"(h={6/256:.4f})")
print(f"total {time.time()-t0:.1f}s")
