"""The numba kernels must be bit-compatible (or provably close) twins of
the numpy reference implementations."""

import math

import numpy as np
import pytest

import stodyn.backend as backend
from stodyn import kernels
from stodyn.engine import SystemSpec, first_passage_stats, simulate_ensemble
from stodyn.kernels import numpy_impl
from stodyn.noise import NoiseSpec
from stodyn.rng import derive_rng

needs_numba = pytest.mark.skipif(not backend._has_numba(),
                                 reason="numba not importable")

CUBIC = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.5",),))


def run_em_block(force_backend, name, system, x0, inc, dt, rec_every):
    force_backend(name)
    step = kernels.get_em_stepper(system.drift_source, system.sigma_source,
                                  system.dim, system.noise_dim)
    m, bs, d = inc.shape
    x = np.tile(np.asarray(x0, dtype=float)[:, None], (1, m))
    slots = bs // rec_every + 1
    rec = np.zeros((m, slots, system.dim))
    rec[:, 0, :] = x.T
    first_bad = np.full(m, -1, dtype=np.int64)
    step(x, 0, 0.0, dt, system.param_vector, inc, rec, rec_every, first_bad)
    return x, rec, first_bad, step


@needs_numba
def test_cms_transform_twins_agree():
    from stodyn.kernels import numba_impl
    rng = derive_rng(202)
    u = math.pi * (rng.random(4096) - 0.5)
    w = rng.standard_exponential(4096)
    for alpha, beta in ((0.5, -0.7), (1.0, 0.3), (1.5, 0.0), (1.9, 1.0),
                        (2.0, 0.0)):
        a = numpy_impl.cms_transform(u, w, alpha, beta)
        b = numba_impl.cms_transform(u, w, alpha, beta)
        rel = np.abs(a - b) / np.maximum(np.abs(a), 1e-30)
        assert rel.max() < 1e-12, (alpha, beta, rel.max())


@needs_numba
def test_cms_transform_survives_exact_zero_exponential():
    from stodyn.kernels import numba_impl
    u = np.array([0.3, -0.2])
    w = np.array([0.0, 1.0])
    for impl in (numpy_impl, numba_impl):
        out = impl.cms_transform(u, w, 1.5, 0.5)
        assert np.isfinite(out).all()


@needs_numba
def test_em_block_polynomial_bit_parity(force_backend):
    dt = 0.01
    rng = derive_rng(3)
    inc = math.sqrt(dt) * rng.standard_normal((64, 32, 1))
    x0 = rng.uniform(-2.0, 2.0, 64)
    out = {}
    for name in ("numpy", "numba"):
        force_backend(name)
        step = kernels.get_em_stepper(CUBIC.drift_source, CUBIC.sigma_source,
                                      1, 1)
        x = x0[None, :].copy()
        rec = np.zeros((64, 5, 1))
        rec[:, 0, :] = x.T
        fb = np.full(64, -1, dtype=np.int64)
        step(x, 0, 0.0, dt, CUBIC.param_vector, inc, rec, 8, fb)
        out[name] = (x, rec, fb, step)
    assert np.array_equal(out["numpy"][0], out["numba"][0])
    assert np.array_equal(out["numpy"][1], out["numba"][1])
    assert np.array_equal(out["numpy"][2], out["numba"][2])
    # the two backends compile distinct callables
    assert out["numpy"][3] is not out["numba"][3]


@needs_numba
def test_em_block_transcendental_close(force_backend):
    system = SystemSpec(drift=("sin(x1) - 0.3*x1",), sigma=(("exp(-x1^2)",),))
    dt = 0.02
    rng = derive_rng(14)
    inc = math.sqrt(dt) * rng.standard_normal((48, 24, 1))
    xn, recn, _, _ = run_em_block(force_backend, "numpy", system, [0.7],
                                  inc, dt, 8)
    xb, recb, _, _ = run_em_block(force_backend, "numba", system, [0.7],
                                  inc, dt, 8)
    np.testing.assert_allclose(xn, xb, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(recn, recb, rtol=1e-12, atol=1e-15)


@needs_numba
def test_blowup_freeze_step_parity(force_backend):
    system = SystemSpec(drift=("x1^3",), sigma=(("0.1",),))
    dt = 0.05
    rng = derive_rng(31)
    inc = math.sqrt(dt) * rng.standard_normal((32, 64, 1))
    xn, recn, fbn, _ = run_em_block(force_backend, "numpy", system, [3.0],
                                    inc, dt, 8)
    xb, recb, fbb, _ = run_em_block(force_backend, "numba", system, [3.0],
                                    inc, dt, 8)
    assert (fbn >= 0).all()
    assert np.array_equal(fbn, fbb)
    assert np.array_equal(recn, recb, equal_nan=True)


@needs_numba
def test_ensemble_statistics_bit_parity(force_backend):
    out = {}
    for name in ("numpy", "numba"):
        force_backend(name)
        out[name] = simulate_ensemble(CUBIC, [0.2], 0.5, 0.01, 500, 99,
                                      out_every=10)
    a, b = out["numpy"], out["numba"]
    assert np.array_equal(a.t, b.t)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.var, b.var)
    assert np.array_equal(a.quantiles, b.quantiles)
    assert np.array_equal(a.sample_paths, b.sample_paths)


@needs_numba
def test_first_passage_bit_parity(force_backend):
    system = SystemSpec(drift=("x1 - x1^3",), sigma=(("0.4",),))
    out = {}
    for name in ("numpy", "numba"):
        force_backend(name)
        out[name] = first_passage_stats(system, -1.0, (-8.0, 8.0), 2.0, 0.01,
                                        2000, 5, threshold=0.0, band=0.1)
    a, b = out["numpy"], out["numba"]
    assert np.array_equal(a.exit_times, b.exit_times, equal_nan=True)
    assert np.array_equal(a.transitions, b.transitions)
    assert a.exit_probability == b.exit_probability
    assert np.array_equal(a.survival, b.survival)


def test_stepper_cache_reuses_compilations(force_backend):
    force_backend("numpy")
    s1 = kernels.get_em_stepper(CUBIC.drift_source, CUBIC.sigma_source, 1, 1)
    s2 = kernels.get_em_stepper(CUBIC.drift_source, CUBIC.sigma_source, 1, 1)
    assert s1 is s2
    other = SystemSpec(drift=("0 - x1",), sigma=(("1",),))
    s3 = kernels.get_em_stepper(other.drift_source, other.sigma_source, 1, 1)
    assert s3 is not s1
    p1 = kernels.get_passage_stepper(CUBIC.drift_source, CUBIC.sigma_source)
    p2 = kernels.get_passage_stepper(CUBIC.drift_source, CUBIC.sigma_source)
    assert p1 is p2
