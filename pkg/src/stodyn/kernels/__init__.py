"""Backend dispatch for the hot loops.

Each kernel exists twice with identical semantics and operation order:
kernels/numpy_impl.py (vectorized) and kernels/numba_impl.py (@njit).
The active implementation follows backend.active_backend(). Factories are
cached per compiled drift/sigma source so ensemble chunks reuse one
compilation.
"""

from .. import backend as _backend


def _impl():
    if _backend.active_backend() == "numba":
        from . import numba_impl
        return numba_impl
    from . import numpy_impl
    return numpy_impl


def cms_transform(u, w, alpha, beta):
    """Map uniform angles u in (-pi/2, pi/2) and exponential w > 0 to
    standard stable draws S_alpha(1, beta, 0)."""
    return _impl().cms_transform(u, w, float(alpha), float(beta))


_em_cache = {}
_passage_cache = {}


def get_em_stepper(drift_src, sigma_src, n, d):
    """Block stepper for Euler-Maruyama ensembles; see impl docstrings."""
    key = (_backend.active_backend(), drift_src, sigma_src, n, d)
    fn = _em_cache.get(key)
    if fn is None:
        fn = _impl().make_em_stepper(drift_src, sigma_src, n, d)
        _em_cache[key] = fn
    return fn


def get_passage_stepper(drift_src, sigma_src):
    """Block stepper for scalar first-passage scans; see impl docstrings."""
    key = (_backend.active_backend(), drift_src, sigma_src)
    fn = _passage_cache.get(key)
    if fn is None:
        fn = _impl().make_passage_stepper(drift_src, sigma_src)
        _passage_cache[key] = fn
    return fn
