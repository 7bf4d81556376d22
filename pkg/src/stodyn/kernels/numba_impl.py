"""Numba kernels. Same contracts and operation order as numpy_impl.

Drift/sigma sources are exec'd then @njit-compiled per system; the step
kernels close over them. fastmath stays off so no multiply-add contraction
breaks cross-backend bit parity.
"""

import numba as nb
import numpy as np

from ..expr import exec_source

_JIT = dict(nopython=True, nogil=True, fastmath=False)


def cms_transform(u, w, alpha, beta):
    out = np.empty_like(u)
    flat_u = u.reshape(-1)
    flat_w = w.reshape(-1)
    flat_o = out.reshape(-1)
    if alpha == 1.0:
        _cms1(flat_u, flat_w, beta, flat_o)
    else:
        _cms(flat_u, flat_w, alpha, beta, flat_o)
    return out


@nb.jit(**_JIT)
def _cms(u, w, alpha, beta, out):
    ta = beta * np.tan(np.pi * alpha / 2)
    b = np.arctan(ta) / alpha
    s = (1 + ta * ta) ** (1 / (2 * alpha))
    ia = 1 / alpha
    ea = (1 - alpha) / alpha
    for i in range(u.shape[0]):
        wi = w[i] + 1e-300
        au = alpha * (u[i] + b)
        out[i] = (s * np.sin(au) / np.cos(u[i]) ** ia
                  * (np.cos(u[i] - au) / wi) ** ea)


@nb.jit(**_JIT)
def _cms1(u, w, beta, out):
    for i in range(u.shape[0]):
        wi = w[i] + 1e-300
        pb = np.pi / 2 + beta * u[i]
        out[i] = (2 / np.pi) * (pb * np.tan(u[i])
                                - beta * np.log((np.pi / 2) * wi * np.cos(u[i]) / pb))


def make_em_stepper(drift_src, sigma_src, n, d):
    drift = nb.njit(exec_source(drift_src, "drift"), nogil=True, fastmath=False)
    sigma = nb.njit(exec_source(sigma_src, "sigma"), nogil=True, fastmath=False)

    @nb.jit(**_JIT)
    def em_block(x, step0, t0, dt, par, inc, rec, rec_every, first_bad):
        # contract documented in numpy_impl.make_em_stepper
        m = x.shape[1]
        bs = inc.shape[1]
        xp = np.empty(n)
        fbuf = np.empty(n)
        sbuf = np.empty((n, d))
        for p in range(m):
            for i in range(n):
                xp[i] = x[i, p]
            # frozen paths still fill record slots with their frozen state
            k_live = bs if first_bad[p] < 0 else 0
            for k in range(k_live, bs):
                g = step0 + k
                if (g + 1) % rec_every == 0:
                    s = (g + 1) // rec_every
                    for i in range(n):
                        rec[p, s, i] = xp[i]
            for k in range(k_live):
                g = step0 + k
                t = t0 + g * dt
                drift(xp, t, par, fbuf)
                sigma(xp, t, par, sbuf)
                bad = False
                for i in range(n):
                    acc = fbuf[i] * dt
                    for j in range(d):
                        acc += sbuf[i, j] * inc[p, k, j]
                    xp[i] = xp[i] + acc
                    if not np.isfinite(xp[i]):
                        bad = True
                if bad:
                    first_bad[p] = g + 1
                    for kk in range(k, bs):
                        gg = step0 + kk
                        if (gg + 1) % rec_every == 0:
                            s = (gg + 1) // rec_every
                            for i in range(n):
                                rec[p, s, i] = xp[i]
                    break
                if (g + 1) % rec_every == 0:
                    s = (g + 1) // rec_every
                    for i in range(n):
                        rec[p, s, i] = xp[i]
            for i in range(n):
                x[i, p] = xp[i]

    return em_block


def make_passage_stepper(drift_src, sigma_src):
    drift = nb.njit(exec_source(drift_src, "drift"), nogil=True, fastmath=False)
    sigma = nb.njit(exec_source(sigma_src, "sigma"), nogil=True, fastmath=False)

    @nb.jit(**_JIT)
    def passage_block(x, step0, t0, dt, par, inc, lo, hi, thr, band,
                      well, exit_step, trans):
        # contract documented in numpy_impl.make_passage_stepper
        m = x.shape[0]
        bs = inc.shape[1]
        inside = np.empty(m, dtype=np.bool_)
        xp = np.empty(1)
        fbuf = np.empty(1)
        sbuf = np.empty((1, 1))
        for p in range(m):
            inside[p] = exit_step[p] < 0
            if not inside[p]:
                continue
            xp[0] = x[p]
            wp = well[p]
            tp = trans[p]
            for k in range(bs):
                g = step0 + k
                t = t0 + g * dt
                drift(xp, t, par, fbuf)
                sigma(xp, t, par, sbuf)
                acc = fbuf[0] * dt
                acc += sbuf[0, 0] * inc[p, k, 0]
                xp[0] = xp[0] + acc
                v = xp[0]
                if v <= lo or v >= hi or not np.isfinite(v):
                    exit_step[p] = g + 1
                    inside[p] = False
                    break
                if v > thr + band and wp != 1:
                    if wp == -1:
                        tp += 1
                    wp = 1
                elif v < thr - band and wp != -1:
                    if wp == 1:
                        tp += 1
                    wp = -1
            x[p] = xp[0]
            well[p] = wp
            trans[p] = tp
        return inside

    return passage_block
