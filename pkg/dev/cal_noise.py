import time

import numpy as np

from stodyn.noise import NoiseSpec, draw_increments, sample_stable, stable_tail_mass
from stodyn.rng import derive_rng

# tail-equivalence check: P(X > r) ~ C1 r^-alpha / alpha
for alpha in (0.5, 1.2, 1.5):
    for beta in (0.0, 0.7):
        rng = derive_rng(99, 3, 0)
        x = sample_stable(alpha, beta, 1.0, rng, size=1_000_000)
        for r in (10.0, 30.0):
            emp_abs = np.mean(np.abs(x) > r)
            ref = stable_tail_mass(r, alpha, beta)
            print(f"a={alpha} b={beta} r={r}: emp={emp_abs:.5g} "
                  f"ref={ref:.5g} ratio={emp_abs / ref:.4f}")
        # two-point slope on |X|
        s1, s2 = np.mean(np.abs(x) > 10.0), np.mean(np.abs(x) > 40.0)
        slope = np.log(s1 / s2) / np.log(4.0)
        print(f"  slope(10->40)={slope:.4f} vs alpha={alpha}")

# ECF at acceptance scale, timed
t0 = time.time()
worst = 0.0
for alpha, beta in [(a, b) for a in (0.5, 1.0, 1.5) for b in (-1.0, 0.0, 1.0)] + [(2.0, 0.0)]:
    rng = derive_rng(7, 3, 1)
    x = sample_stable(alpha, beta, 1.0, rng, size=1_000_000)
    for u in (0.5, 1.0, 2.0):
        ecf = np.exp(1j * u * x).mean()
        if alpha == 1.0:
            cf = np.exp(-abs(u) * (1 + 1j * beta * (2 / np.pi) * np.sign(u) * np.log(abs(u))))
        else:
            cf = np.exp(-abs(u) ** alpha * (1 - 1j * beta * np.sign(u) * np.tan(np.pi * alpha / 2)))
        err = max(abs(ecf.real - cf.real), abs(ecf.imag - cf.imag))
        worst = max(worst, err)
print(f"ECF worst component err over grid: {worst:.5f}  [{time.time() - t0:.1f}s]")
