"""Brownian and alpha-stable increment sampling plus the stable jump measure.

Stable laws use the parameterization in which the characteristic function of
a unit-scale draw is

    alpha != 1:  exp(-|u|^alpha (1 - i*beta*sign(u)*tan(pi*alpha/2)))
    alpha == 1:  exp(-|u| (1 + i*beta*(2/pi)*sign(u)*ln|u|))

so process increments over dt are S_alpha(dt^(1/alpha), beta, 0) and sums of
increments stay in the family with zero location. alpha=2 gives
Normal(0, 2*scale^2); the brownian family is normalized separately so its
increments are Normal(0, dt) exactly.

Sampling is the Chambers-Mallows-Stuck angle/exponential transform (kernel
module). The alpha=1 scale rule sigma*X + (2/pi)*beta*sigma*ln(sigma) keeps
the location at zero under scaling.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma

from .errors import ValidationError
from .kernels import numpy_impl as _cms_impl
from .rng import BLOCK_STEPS, STREAM_PATH, derive_rng


@dataclass(frozen=True)
class NoiseSpec:
    """Driving-noise family: brownian, or stable with index alpha and skew beta.

    Components of vector noise are independent (the only supported mode).
    """

    family: str = "brownian"
    alpha: float = 2.0
    beta: float = 0.0
    independent: bool = True

    def __post_init__(self):
        if self.family not in ("brownian", "stable"):
            raise ValidationError(
                f"noise.family must be 'brownian' or 'stable', got {self.family!r}")
        if self.family == "brownian" and (self.alpha, self.beta) != (2.0, 0.0):
            raise ValidationError(
                "brownian noise fixes (alpha, beta) = (2, 0); "
                f"got alpha={self.alpha}, beta={self.beta}")
        if not 0.0 < self.alpha <= 2.0:
            raise ValidationError(f"noise.alpha must lie in (0, 2], got {self.alpha}")
        if not -1.0 <= self.beta <= 1.0:
            raise ValidationError(f"noise.beta must lie in [-1, 1], got {self.beta}")
        if not self.independent:
            raise ValidationError("only independent noise components are supported")

    @property
    def is_brownian(self):
        return self.family == "brownian"


def stable_hnorm(alpha):
    """Normalization H_alpha of the stable jump measure.

    Equals alpha*(1-alpha) / (Gamma(2-alpha) * cos(pi*alpha/2)) away from
    alpha=1 and 2/pi at alpha=1; written through sinc so the removable
    singularity at alpha=1 needs no case split.
    """
    if not 0.0 < alpha < 2.0:
        raise ValidationError(f"jump measure needs alpha in (0, 2), got {alpha}")
    return (2.0 * alpha / math.pi) / (_gamma(2.0 - alpha) * np.sinc((1.0 - alpha) / 2.0))


def jump_coefficients(alpha, beta):
    """(C1, C2): intensities of the positive/negative jump tails."""
    h = stable_hnorm(alpha)
    return h * (1.0 + beta) / 2.0, h * (1.0 - beta) / 2.0


def jump_measure_density(y, alpha, beta):
    """Density of the stable jump measure at jump size y (y != 0).

    (C1 * 1_{y>0} + C2 * 1_{y<0}) / |y|^(1+alpha).
    """
    if not -1.0 <= beta <= 1.0:
        raise ValidationError(f"beta must lie in [-1, 1], got {beta}")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr == 0.0):
        raise ValidationError("jump measure is singular at y = 0")
    c1, c2 = jump_coefficients(alpha, beta)
    coeff = np.where(y_arr > 0, c1, c2)
    out = coeff / np.abs(y_arr) ** (1.0 + alpha)
    return out if out.ndim else float(out)


def stable_tail_mass(r, alpha, beta):
    """nu(|y| > r), the total jump rate beyond radius r > 0 (closed form)."""
    c1, c2 = jump_coefficients(alpha, beta)
    return (c1 + c2) * r ** (-alpha) / alpha


def levy_drift_total(alpha, beta, scale):
    """Drift of scale*L_t written with small-jump compensation cut at 1.

    The generator of x -> x + scale*dL is b*d/dx plus the jump integral
    compensated on |z| <= 1 (z the jump of x, already scaled). This returns
    that b. Both alpha < 1 and alpha > 1 reduce to the same expression;
    alpha = 1 picks up a log(scale) term from the increment location rule.
    """
    scale = np.asarray(scale, dtype=float)
    if not np.all(scale > 0):
        raise ValidationError("scale must be positive")
    if alpha == 2.0 or beta == 0.0:
        out = np.zeros_like(scale)
    elif alpha == 1.0:
        g_euler = 0.5772156649015329
        out = scale * (2.0 / math.pi) * beta * (-(1.0 - g_euler) - np.log(scale))
    else:
        out = scale ** alpha * stable_hnorm(alpha) * beta / (1.0 - alpha)
    return float(out) if out.ndim == 0 else out


def sample_stable(alpha, beta, scale, rng, size=None):
    """Draw from S_alpha(scale, beta, 0); alpha=2 gives Normal(0, 2*scale^2).

    Pure function of the generator state: same state, same draws.
    """
    if not 0.0 < alpha <= 2.0:
        raise ValidationError(f"alpha must lie in (0, 2], got {alpha}")
    if not -1.0 <= beta <= 1.0:
        raise ValidationError(f"beta must lie in [-1, 1], got {beta}")
    if not scale > 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    shape = () if size is None else size
    u = math.pi * (rng.random(shape) - 0.5)
    w = rng.standard_exponential(shape)
    # always the reference transform: increments must not depend on backend
    x = _cms_impl.cms_transform(np.atleast_1d(u), np.atleast_1d(w), alpha, beta)
    x = x * scale
    if alpha == 1.0:
        x = x + (2.0 / math.pi) * beta * scale * math.log(scale)
    return float(x[0]) if size is None else x.reshape(shape)


def stable_increment_scale(alpha, dt):
    return dt ** (1.0 / alpha)


def draw_increments(spec, dt, shape, rng):
    """Increments of the driving process over steps of length dt.

    brownian: Normal(0, dt). stable: S_alpha(dt^(1/alpha), beta, 0) with the
    alpha=1 location correction. Consumes the generator in a fixed order
    (normal | uniform then exponential), which is part of the
    reproducibility contract.
    """
    if spec.is_brownian:
        return math.sqrt(dt) * rng.standard_normal(shape)
    u = math.pi * (rng.random(shape) - 0.5)
    w = rng.standard_exponential(shape)
    x = _cms_impl.cms_transform(u, w, spec.alpha, spec.beta)
    scale = stable_increment_scale(spec.alpha, dt)
    x = x * scale
    if spec.alpha == 1.0:
        x = x + (2.0 / math.pi) * spec.beta * dt * math.log(dt)
    return x


class NoisePath:
    """Two-sided increment record of one driving-noise realization.

    Increments live on a step grid of spacing dt, indexed by integer step
    k in [k_lo, k_hi); index k holds the increment over [k*dt, (k+1)*dt).
    Generation is blocked: global block b (BLOCK_STEPS steps) comes from the
    stream (seed, STREAM_PATH, stream, b + 2^31) and is always drawn whole,
    so the same (seed, stream) lineage reproduces the same increments bit
    for bit regardless of the requested window. `shift` views the same
    realization with indices translated (the time-shift operator on paths).
    """

    def __init__(self, spec, dt, k_lo, k_hi, seed, stream, values, shift_offset=0):
        self.spec = spec
        self.dt = dt
        self.k_lo = k_lo
        self.k_hi = k_hi
        self.seed = seed
        self.stream = stream
        self.values = values
        self.shift_offset = shift_offset

    def increments(self, k0, k1):
        """Increment array for steps [k0, k1) in this path's index frame."""
        a, b = k0 + self.shift_offset, k1 + self.shift_offset
        if a < self.k_lo or b > self.k_hi:
            raise ValidationError(
                f"noise path covers steps [{self.k_lo - self.shift_offset}, "
                f"{self.k_hi - self.shift_offset}), requested [{k0}, {k1})")
        return self.values[a - self.k_lo:b - self.k_lo]

    def shifted(self, steps):
        """View of the same realization with index origin moved by `steps`."""
        return NoisePath(self.spec, self.dt, self.k_lo, self.k_hi, self.seed,
                         self.stream, self.values, self.shift_offset + steps)

    @property
    def dim(self):
        return self.values.shape[1]


def make_noise_path(spec, dt, k_minus, k_plus, seed, stream=0, dim=1):
    """Materialize a NoisePath covering steps [-k_minus, k_plus)."""
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if k_minus < 0 or k_plus < 0:
        raise ValidationError("k_minus and k_plus must be non-negative")
    k_lo, k_hi = -int(k_minus), int(k_plus)
    if k_hi <= k_lo:
        raise ValidationError("empty noise path requested")
    b_lo = math.floor(k_lo / BLOCK_STEPS)
    b_hi = math.ceil(k_hi / BLOCK_STEPS)
    chunks = []
    for b in range(b_lo, b_hi):
        rng = derive_rng(seed, STREAM_PATH, stream, b + 2 ** 31)
        block = draw_increments(spec, dt, (BLOCK_STEPS, dim), rng)
        lo = max(k_lo, b * BLOCK_STEPS) - b * BLOCK_STEPS
        hi = min(k_hi, (b + 1) * BLOCK_STEPS) - b * BLOCK_STEPS
        chunks.append(block[lo:hi])
    values = np.concatenate(chunks, axis=0)
    return NoisePath(spec, dt, k_lo, k_hi, seed, stream, values)
