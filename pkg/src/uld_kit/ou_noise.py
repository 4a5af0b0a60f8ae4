"""Exact Gaussian noise of the Ornstein-Uhlenbeck part of underdamped Langevin.

Over a segment of length ``dt`` with friction ``gamma`` the two stochastic
integrals

    xi1 = sqrt(2 gamma) int_0^dt (1 - exp(-gamma (dt - s))) / gamma dB_s
    xi2 = sqrt(2 gamma) int_0^dt exp(-gamma (dt - s)) dB_s

are jointly Gaussian, i.i.d. across coordinates, with per-coordinate moments

    var_p  = 1 - exp(-2 z)
    cov_xp = (1 - exp(-z))^2 / gamma
    var_x  = (2 / gamma^2) [z - 2 (1 - exp(-z)) + (1 - exp(-2 z)) / 2]

where ``z = gamma * dt``.  Noise over a step with intermediate times is drawn
segment by segment and composed exactly, so the full-step pair and every
prefix restriction come from one Brownian path.

Arrays follow the convention ``(..., d)``: leading axes are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Optional

import numpy as np

from scipy import integrate

from .errors import ContractViolation

# Below this value of gamma*dt the moments are evaluated by Taylor series.
SERIES_THRESHOLD = 0.1
_N_TERMS = 20

# z - (1 - e^{-z}) = sum_{n>=2} (-1)^n z^n / n!
_PHI2 = np.array([0.0, 0.0] + [(-1) ** n / factorial(n) for n in range(2, _N_TERMS)])
# z - 2(1 - e^{-z}) + (1 - e^{-2z})/2 = sum_{n>=3} (-1)^n (2 - 2^{n-1}) z^n / n!
_PHI3 = np.array(
    [0.0, 0.0, 0.0] + [(-1) ** n * (2 - 2 ** (n - 1)) / factorial(n) for n in range(3, _N_TERMS)]
)
# 1 - e^{-z} = sum_{n>=1} (-1)^{n+1} z^n / n!
_PHI1 = np.array([0.0] + [(-1) ** (n + 1) / factorial(n) for n in range(1, _N_TERMS)])


def _horner(coeffs, z):
    out = np.zeros_like(z)
    for c in coeffs[::-1]:
        out = out * z + c
    return out


def one_minus_exp(z):
    """``1 - exp(-z)`` without cancellation."""
    return -np.expm1(-np.asarray(z, dtype=float))


def phi2(z):
    """``z - (1 - exp(-z))``, accurate for small ``z``."""
    z = np.asarray(z, dtype=float)
    small = z < SERIES_THRESHOLD
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    return np.where(small, _horner(_PHI2, zs), zl + np.expm1(-zl))


def phi3(z):
    """``z - 2(1 - exp(-z)) + (1 - exp(-2z))/2``, accurate for small ``z``."""
    z = np.asarray(z, dtype=float)
    small = z < SERIES_THRESHOLD
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)
    closed = zl + 2.0 * np.expm1(-zl) - 0.5 * np.expm1(-2.0 * zl)
    return np.where(small, _horner(_PHI3, zs), closed)


def quadrature_moments(gamma, dt):
    """``(var_x, var_p, cov_xp)`` by numerical quadrature of the squared kernels.

    Independent of the closed forms; used as a self-check.
    """
    k1 = lambda r: one_minus_exp(gamma * r) / gamma  # r = dt - s
    k2 = lambda r: np.exp(-gamma * r)
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    var_x = 2 * gamma * integrate.quad(lambda r: k1(r) ** 2, 0.0, dt, **opts)[0]
    var_p = 2 * gamma * integrate.quad(lambda r: k2(r) ** 2, 0.0, dt, **opts)[0]
    cov_xp = 2 * gamma * integrate.quad(lambda r: k1(r) * k2(r), 0.0, dt, **opts)[0]
    return var_x, var_p, cov_xp


def _moments_closed(gamma, dt):
    z = gamma * dt
    var_p = -np.expm1(-2.0 * z)
    cov_xp = np.expm1(-z) ** 2 / gamma
    var_x = (2.0 / gamma**2) * (z + 2.0 * np.expm1(-z) - 0.5 * np.expm1(-2.0 * z))
    return var_x, var_p, cov_xp


def _moments_series(gamma, dt):
    z = gamma * dt
    var_p = _horner(_PHI1, 2.0 * z)
    cov_xp = _horner(_PHI1, z) ** 2 / gamma
    var_x = (2.0 / gamma**2) * _horner(_PHI3, z)
    return var_x, var_p, cov_xp


@dataclass(frozen=True, eq=False)
class NoiseBlock:
    """Per-coordinate second moments of ``(xi1, xi2)`` over one segment.

    ``dt`` may be an array; every moment field then has the same shape.
    """

    gamma: float
    dt: np.ndarray
    var_x: np.ndarray
    var_p: np.ndarray
    cov_xp: np.ndarray
    l11: np.ndarray
    l21: np.ndarray
    l22: np.ndarray

    @property
    def chol(self):
        """Lower-triangular factor, shape ``(..., 2, 2)``."""
        zero = np.zeros_like(self.l11)
        return np.stack(
            [np.stack([self.l11, zero], -1), np.stack([self.l21, self.l22], -1)], -2
        )

    @property
    def cov(self):
        return np.stack(
            [
                np.stack([self.var_x, self.cov_xp], -1),
                np.stack([self.cov_xp, self.var_p], -1),
            ],
            -2,
        )

    def sample(self, rng, shape):
        """Draw ``(xi1, xi2)`` of the given trailing shape ``(..., d)``.

        ``dt`` broadcasts against ``shape[:-1]``.
        """
        z = rng.standard_normal((2,) + tuple(shape))
        return self.transform(z[0], z[1])

    def transform(self, z1, z2):
        """Map standard normals to correlated ``(xi1, xi2)``."""
        l11 = np.expand_dims(self.l11, -1)
        l21 = np.expand_dims(self.l21, -1)
        l22 = np.expand_dims(self.l22, -1)
        return l11 * z1, l21 * z1 + l22 * z2


def noise_block(gamma, dt):
    """Exact moments and Cholesky factor of the segment noise."""
    if not np.all(np.asarray(gamma) > 0):
        raise ContractViolation(f"gamma must be positive, got {gamma}")
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ContractViolation("dt must be non-negative")
    z = gamma * dt
    small = z < SERIES_THRESHOLD
    cx, cp, cc = _moments_closed(gamma, np.where(small, 1.0 / gamma, dt))
    sx, sp, sc = _moments_series(gamma, np.where(small, dt, 0.0))
    var_x = np.where(small, sx, cx)
    var_p = np.where(small, sp, cp)
    cov_xp = np.where(small, sc, cc)

    l11 = np.sqrt(var_x)
    safe = l11 > 0
    l21 = np.where(safe, cov_xp / np.where(safe, l11, 1.0), 0.0)
    l22 = np.sqrt(np.maximum(var_p - l21**2, 0.0))
    return NoiseBlock(float(gamma), dt, var_x, var_p, cov_xp, l11, l21, l22)


def compose_noise(first, second, gamma, dt2):
    """Compose noise pairs over adjacent segments ``[0, dt1]`` and ``[dt1, dt1 + dt2]``.

    ``first`` and ``second`` are ``(xi1, xi2)`` pairs; ``dt2`` is the length of
    the second segment (it may broadcast over batch axes).
    """
    x1a, x2a = first
    x1b, x2b = second
    if np.shape(x1a) != np.shape(x1b) or np.shape(x2a) != np.shape(x2b):
        raise ContractViolation("noise pairs have mismatched shapes")
    z = np.expand_dims(gamma * np.asarray(dt2, dtype=float), -1)
    decay = np.exp(-z)
    c1 = one_minus_exp(z) / gamma
    return x1a + c1 * x2a + x1b, decay * x2a + x2b


@dataclass
class StepNoiseDraw:
    """One step's noise drawn on a single Brownian path.

    ``times`` holds the requested intermediate times, either shared ``(m,)``
    or per batch row ``(..., m)``; ``xi1_at[j]``/``xi2_at[j]`` are the prefix
    integrals up to ``times[..., j]``.  ``segments`` records every segment
    draw ``(dt, xi1, xi2)`` so the path can be replayed or recomposed.
    """

    gamma: float
    h: float
    times: np.ndarray
    xi1_full: np.ndarray
    xi2_full: np.ndarray
    xi1_at: list = field(default_factory=list)
    xi2_at: list = field(default_factory=list)
    segments: list = field(default_factory=list)
    substeps: Optional[int] = None
    richardson_gap: Optional[float] = None

    def xi1(self, t):
        """Prefix ``xi1`` on ``[0, t]`` (``t`` scalar or one value per batch row)."""
        return self._lookup(self.xi1_at, self.xi1_full, t)

    def xi2(self, t):
        """Prefix ``xi2`` on ``[0, t]``."""
        return self._lookup(self.xi2_at, self.xi2_full, t)

    def _lookup(self, store, full, t):
        times = np.asarray(self.times)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0 and float(t) == self.h:
            return full
        if times.shape[-1] == 0:
            raise ContractViolation(f"no intermediate noise recorded at t={t}")
        if times.ndim == 1:
            if t.ndim != 0:
                raise ContractViolation("shared intermediate times need a scalar query time")
            hit = np.flatnonzero(times == t)
            if hit.size == 0:
                raise ContractViolation(f"no intermediate noise recorded at t={float(t)}")
            return store[int(hit[0])]
        hits = times == np.broadcast_to(t, times.shape[:-1])[..., None]
        if not np.all(hits.any(-1)):
            raise ContractViolation("no intermediate noise recorded at the requested times")
        col = np.argmax(hits, axis=-1)
        stacked = np.stack(store, -2)  # (..., m, d)
        return np.take_along_axis(stacked, col[..., None, None], -2)[..., 0, :]


def _validate_times(times, h):
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(times < 0) or np.any(times > h)):
        raise ContractViolation("intermediate times must lie in [0, h]")
    if times.shape[-1:] and times.shape[-1] > 1 and np.any(np.diff(times, axis=-1) < 0):
        raise ContractViolation("intermediate times must be sorted")
    return times


def segment_lengths(times, h):
    """Segment lengths of the partition ``0 <= t_1 <= ... <= t_m <= h``."""
    times = np.asarray(times, dtype=float)
    zero = np.zeros(times.shape[:-1] + (1,))
    end = np.full(times.shape[:-1] + (1,), float(h))
    return np.diff(np.concatenate([zero, times, end], -1), axis=-1)


def compose_segments(gamma, h, times, segments):
    """Prefix-compose segment draws into a :class:`StepNoiseDraw`.

    ``segments`` is a list of ``(dt, xi1, xi2)`` with one entry per segment
    of the partition induced by ``times``.
    """
    times = np.asarray(times, dtype=float)
    n_seg = times.shape[-1] + 1
    if len(segments) != n_seg:
        raise ContractViolation(f"expected {n_seg} segments, got {len(segments)}")
    xi1 = np.zeros_like(segments[0][1])
    xi2 = np.zeros_like(segments[0][2])
    at1, at2 = [], []
    for j, (dt, s1, s2) in enumerate(segments):
        xi1, xi2 = compose_noise((xi1, xi2), (s1, s2), gamma, dt)
        if j < n_seg - 1:
            at1.append(xi1)
            at2.append(xi2)
    return StepNoiseDraw(gamma, float(h), times, xi1, xi2, at1, at2, list(segments))


def draw_step_noise(gamma, h, intermediate_times, d, rng, batch_shape=()):
    """Draw one step of exact OU noise with restrictions at intermediate times.

    ``intermediate_times`` is either a sorted 1-D sequence shared by every
    batch row or an array of shape ``batch_shape + (m,)``.  Repeated times
    give zero-length segments, which contribute zero noise.
    """
    if h <= 0:
        raise ContractViolation("h must be positive")
    times = _validate_times(intermediate_times if intermediate_times is not None else [], h)
    batch_shape = tuple(batch_shape)
    if times.ndim > 1 and times.shape[:-1] != batch_shape:
        raise ContractViolation("per-row times must match batch_shape")
    dts = segment_lengths(times, h)
    segments = []
    for j in range(dts.shape[-1]):
        dt = dts[..., j]
        block = noise_block(gamma, dt)
        s1, s2 = block.sample(rng, batch_shape + (d,))
        segments.append((dt, s1, s2))
    return compose_segments(gamma, h, times, segments)
