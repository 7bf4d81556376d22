import time

import numpy as np

from stodyn.engine import SystemSpec
from stodyn.fokker_planck import (Grid1D, build_adjoint_generator,
                                  delta_initial, evolve_density)
from stodyn.noise import NoiseSpec
from stodyn.portraits import (_ProbeRunner, bifurcation_scan, mean_equilibria,
                              most_probable_equilibria)

t0 = time.time()

def show(tag, eqs):
    print(tag + "  " + ", ".join(f"{e.kind}@{e.location:+.4f}" for e in eqs))

# double-well sigma=0.2 (criterion 4)
dw2 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.2",),),
                 noise=NoiseSpec(family="brownian"))
t1 = time.time()
show("A. dw sigma=0.2 mppp:", most_probable_equilibria(dw2, (-2, 2), 8.0, grid_n=256))
print(f"   [{time.time()-t1:.1f}s]")

# criterion 5 pair at sigma=0.5
dw5 = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),),
                 noise=NoiseSpec(family="brownian"))
t1 = time.time()
show("B. dw sigma=0.5 mppp:", most_probable_equilibria(dw5, (-2, 2), 20.0, grid_n=256))
print(f"   [{time.time()-t1:.1f}s]")
t1 = time.time()
show("C. dw sigma=0.5 mean:", mean_equilibria(dw5, (-2, 2), 120.0, grid_n=256, dt=0.01))
print(f"   [{time.time()-t1:.1f}s]")

# mu=0 pitchfork endpoint debug at scenario resolution
pf0 = SystemSpec(drift=("0.0*x1 - x1^3",), sigma=(("0.05",),),
                 noise=NoiseSpec(family="brownian"))
runner = _ProbeRunner(pf0, (-2.0, 2.0), 25.0, None, 256, "most-probable")
print(f"D. mu=0 dt={runner.dt:.4g}")
probes = np.linspace(-1.76, 1.76, 9)
for x0 in probes:
    o = runner.orbit(float(x0))
    mid = o.x[len(o.t) // 2, 0]
    print(f"   x0={x0:+.2f}  mid={mid:+.5f}  end={o.x[-1,0]:+.5f}")

# full pitchfork scan, scenario resolution
pf = SystemSpec(drift=("mu*x1 - x1^3",), sigma=(("0.05",),),
                noise=NoiseSpec(family="brownian"), params={"mu": 0.0})
t1 = time.time()
diag = bifurcation_scan(pf, "mu", np.linspace(-1, 1, 21), (-2.0, 2.0), 25.0,
                        grid_n=256)
print(f"E. pitchfork scan [{time.time()-t1:.1f}s]: errors={diag.errors}")
for v, row in zip(diag.values, diag.equilibria):
    if row is None:
        print(f"   mu={v:+.2f}  FAILED")
    else:
        s = ", ".join(f"{e.kind[:4]}{e.location:+.3f}" for e in row)
        n = sum(e.kind == "stable" for e in row)
        print(f"   mu={v:+.2f}  [{n}] {s}")
print(f"   change points: {diag.change_points}")
print(f"total {time.time()-t0:.1f}s")
