import time

import numpy as np

from stodyn.noise import NoiseSpec, make_noise_path
from stodyn.slow_manifold import (SlowFastSpec, full_slowfast_integrate,
                                  invariance_error, lyapunov_perron_solve,
                                  reduced_slow_integrate, stationary_eta,
                                  truncated_h, validate_gap)

t0 = time.time()
xi = np.linspace(-2.5, 2.5, 65)

# 1. constant g: h = -B^-1 g0 everywhere, both pathways
sp = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",), g=("0.7",),
                  eps=0.05)
gt = truncated_h(sp, xi)
gl = lyapunov_perron_solve(sp, xi)
print(f"1. const g: trunc err {np.abs(gt.values - 0.7).max():.2e}, "
      f"LP err {np.abs(gl.values - 0.7).max():.2e}, iters {gl.iterations}")

# 2. g = g(x) only, A=0, f=0: h = -B^-1 g(xi)
sp2 = SlowFastSpec(a=((0.0,),), b=((-2.0,),), f=("0.0",),
                   g=("sin(x1)",), eps=0.05)
gl2 = lyapunov_perron_solve(sp2, xi)
ref2 = np.sin(xi) / 2.0
print(f"2. g(x) only: LP err {np.abs(gl2.values[:, 0] - ref2).max():.2e}")

# 3. linear g = C x + D y: h0 = -(B+D)^-1 C xi
sp3 = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",),
                   g=("0.3*x1 - 0.2*y1",), eps=0.05)
gt3 = truncated_h(sp3, xi)
h0_ref = 0.3 * xi / 1.2
# h1: h0' = 0.25; slow rate = -0.2 xi + 0.5 h0 = -0.2 xi + 0.125 xi = -0.075 xi
# h1 = (B+D)^-1 h0' rate = (-1.2)^-1 * 0.25 * (-0.075 xi)
h1_ref = 0.25 * (-0.075 * xi) / (-1.2)
ref3 = h0_ref + 0.05 * h1_ref
print(f"3. linear g: trunc vs algebra {np.abs(gt3.values[:, 0] - ref3).max():.2e}")
gl3 = lyapunov_perron_solve(sp3, xi)
print(f"   LP residual history: {['%.1e' % r for r in gl3.residual_history]}")

# 4. nonlinear scenario, eps ladder: reduced vs full sup gap
t1 = time.time()
gaps = {}
for eps in (0.1, 0.05, 0.025):
    spn = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",),
                       g=("0.4*sin(2*x1) - 0.1*tanh(y1)",), eps=eps)
    g_lp = lyapunov_perron_solve(spn, xi)
    x0 = 2.0
    y0 = g_lp.interp(np.array([x0]))[0] + 1.0   # off-manifold start
    full = full_slowfast_integrate(spn, [x0], y0, 5.0, 1e-3)
    red = reduced_slow_integrate(spn, g_lp, x0, 5.0, 1e-3)
    gaps[eps] = float(np.abs(full.x[:, 0] - red.x[:, 0]).max())
    if eps == 0.05:
        hist = g_lp.residual_history
        dec = all(hist[i] > hist[i + 1] for i in range(len(hist) - 5, len(hist) - 1))
        print(f"4. eps=0.05 residuals {['%.1e' % r for r in hist]} "
              f"last-5 decreasing: {dec}")
print(f"   gaps: {gaps}")
print(f"   ratios: {gaps[0.05]/gaps[0.1]:.3f}, {gaps[0.025]/gaps[0.05]:.3f} "
      f"[{time.time()-t1:.1f}s]")

# 5. truncation vs LP: sup|hat - tilde| ratio when eps halves
sup = {}
for eps in (0.1, 0.05):
    spn = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",),
                       g=("0.4*sin(2*x1) - 0.1*tanh(y1)",), eps=eps)
    d = np.abs(truncated_h(spn, xi).values -
               lyapunov_perron_solve(spn, xi).values).max()
    sup[eps] = float(d)
print(f"5. trunc-vs-LP sup: {sup}, ratio {sup[0.05]/sup[0.1]:.3f}")

# 6. eta: stationary variance 1/2 for B=-1, sigma-linearity, zero increments
spn = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",), g=("0.0",),
                   eps=0.05, sigma=0.4)
bro = NoiseSpec(family="brownian")
path = make_noise_path(bro, 1e-3, 2000, 200000, seed=7, dim=1)
ep = stationary_eta(spn, path)
var = float(np.var(ep.eta))
print(f"6. eta var {var:.4f} (target 0.5 +- 5%)")
path2 = make_noise_path(bro, 1e-3, 2000, 2000, seed=7, dim=1)
ep2 = stationary_eta(spn, path2)
from stodyn.noise import NoisePath
path2d = NoisePath(bro, 1e-3, path2.k_lo, path2.k_hi, 7, 0, path2.values * 2.0)
ep2d = stationary_eta(spn, path2d)
print(f"   doubling exact: {np.array_equal(ep2d.eta, 2.0 * ep2.eta)}")

# 7. invariance: exact constant manifold + off-manifold decay + eps-monotone
spc = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",), g=("0.7",),
                   eps=0.05)
gc = lyapunov_perron_solve(spc, xi)
rep = invariance_error(spc, gc, [-1.0, 0.5, 2.0], 2.0, 1e-3)
print(f"7. const-manifold sup dev: {max(r['sup'] for r in rep):.2e}")
devs = {}
for eps in (0.1, 0.05, 0.025):
    spn = SlowFastSpec(a=((-0.2,),), b=((-1.0,),), f=("0.5*y1",),
                       g=("0.4*sin(2*x1) - 0.1*tanh(y1)",), eps=eps)
    g_lp = lyapunov_perron_solve(spn, xi)
    rep = invariance_error(spn, g_lp, [0.5], 2.0, 1e-3)
    devs[eps] = rep[0]["sup"]
print(f"   nonlinear sup dev by eps: { {k: f'{v:.2e}' for k, v in devs.items()} }")

# 8. gap reports
print(f"8. {validate_gap(b=[[-1.0]], lip_g=0.1, eps=0.01)}")
print(f"   {validate_gap(b=[[0.5]], lip_g=0.1, eps=0.01)}")
print(f"   {validate_gap(b=[[-1.0]], lip_g=60.0, eps=0.01)}")

# 9. reduced linear oracle: sigma=0, g=g0, f=y -> xdot = Ax - B^-1 g0
spl = SlowFastSpec(a=((-0.5,),), b=((-1.0,),), f=("y1",), g=("0.7",), eps=0.01)
gll = lyapunov_perron_solve(spl, xi)
red = reduced_slow_integrate(spl, gll, 1.0, 3.0, 1e-3)
# x' = -0.5 x + 0.7 -> x(t) = 1.4 + (1 - 1.4) e^{-t/2}
ref = 1.4 - 0.4 * np.exp(-0.5 * red.t)
print(f"9. linear reduced err {np.abs(red.x[:, 0] - ref).max():.2e}")

print(f"total {time.time()-t0:.1f}s")
