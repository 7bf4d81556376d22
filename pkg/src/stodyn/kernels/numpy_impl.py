"""Pure-numpy kernels. Reference semantics for the numba twins.

State layout is component-major: x has shape (n, m) so the compiled drift
source indexes x[0], x[1], ... as whole path vectors. Increments arrive
path-major (m, block_steps, d) because that is generation order; steps
slice the middle axis.

Operation order is pinned to match numba_impl bit for bit:
    acc = f(x) * dt;  acc += sigma[:, j] * inc_j  (j ascending);  x += acc
"""

import numpy as np

from ..expr import exec_source


def cms_transform(u, w, alpha, beta):
    # +1e-300 rescues exact zeros from the exponential sampler without
    # changing any other bit pattern
    with np.errstate(all="ignore"):
        w = w + 1e-300
        if alpha == 1.0:
            pb = np.pi / 2 + beta * u
            return (2 / np.pi) * (pb * np.tan(u)
                                  - beta * np.log((np.pi / 2) * w * np.cos(u) / pb))
        ta = beta * np.tan(np.pi * alpha / 2)
        b = np.arctan(ta) / alpha
        s = (1 + ta * ta) ** (1 / (2 * alpha))
        au = alpha * (u + b)
        return (s * np.sin(au) / np.cos(u) ** (1 / alpha)
                * (np.cos(u - au) / w) ** ((1 - alpha) / alpha))


def make_em_stepper(drift_src, sigma_src, n, d):
    drift = exec_source(drift_src, "drift")
    sigma = exec_source(sigma_src, "sigma")

    def em_block(x, step0, t0, dt, par, inc, rec, rec_every, first_bad):
        """Advance one block of steps for one chunk of paths.

        x:        (n, m) states at global step `step0`, updated in place
        inc:      (m, bs, d) driving increments for steps step0..step0+bs-1
        rec:      (m, R, n) record buffer; slot s holds the state at global
                  step s*rec_every (slot 0 is pre-filled by the caller)
        first_bad:(m,) int64, -1 while finite; set to the first global step
                  at which the state went non-finite. The path freezes at
                  that non-finite state and every later record slot
                  (including the freezing step's own) repeats it.
        """
        m = x.shape[1]
        fbuf = np.empty((n, m))
        sbuf = np.empty((n, d, m))
        bs = inc.shape[1]
        alive = first_bad < 0
        with np.errstate(all="ignore"):
            for k in range(bs):
                g = step0 + k
                t = t0 + g * dt
                drift(x, t, par, fbuf)
                sigma(x, t, par, sbuf)
                acc = fbuf * dt
                for j in range(d):
                    acc += sbuf[:, j, :] * inc[:, k, j]
                if alive.all():
                    x += acc
                else:
                    x[:, alive] += acc[:, alive]
                ok = np.isfinite(x).all(axis=0)
                if not ok.all():
                    newbad = alive & ~ok
                    if newbad.any():
                        first_bad[newbad] = g + 1
                        alive = first_bad < 0
                if (g + 1) % rec_every == 0:
                    rec[:, (g + 1) // rec_every, :] = x.T

    return em_block


def make_passage_stepper(drift_src, sigma_src):
    drift = exec_source(drift_src, "drift")
    sigma = exec_source(sigma_src, "sigma")

    def passage_block(x, step0, t0, dt, par, inc, lo, hi, thr, band,
                      well, exit_step, trans):
        """Scalar first-passage scan over one block.

        x:         (m,) alive states, updated in place
        inc:       (m, bs, 1) increments
        well:      (m,) int8 hysteresis state in {-1, 0, +1}
        exit_step: (m,) int64, -1 while inside the open interval (lo, hi);
                   set to the first step index at or beyond a boundary
                   (a non-finite state also counts as having left)
        trans:     (m,) int64 full threshold crossings (hysteresis band)
        Returns the boolean mask of paths still inside after the block.
        """
        m = x.shape[0]
        xs = x.reshape(1, m)
        fbuf = np.empty((1, m))
        sbuf = np.empty((1, 1, m))
        bs = inc.shape[1]
        inside = exit_step < 0
        with np.errstate(all="ignore"):
            for k in range(bs):
                g = step0 + k
                t = t0 + g * dt
                drift(xs, t, par, fbuf)
                sigma(xs, t, par, sbuf)
                acc = fbuf[0] * dt
                acc += sbuf[0, 0] * inc[:, k, 0]
                x[inside] += acc[inside]
                hit = inside & ((x <= lo) | (x >= hi) | ~np.isfinite(x))
                if hit.any():
                    exit_step[hit] = g + 1
                    inside &= ~hit
                up = inside & (x > thr + band) & (well != 1)
                down = inside & (x < thr - band) & (well != -1)
                if up.any():
                    trans[up] += well[up] == -1
                    well[up] = 1
                if down.any():
                    trans[down] += well[down] == 1
                    well[down] = -1
        return inside

    return passage_block
