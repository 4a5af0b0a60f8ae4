"""Laws of the randomized midpoints (u, v) on [0, 1].

With ``z = gamma * h``:

    density_u(s) = h (1 - exp(-gamma (1 - s) h)) / (h - (1 - exp(-gamma h)) / gamma)
    density_v(s) = h gamma exp(-gamma (1 - s) h) / (1 - exp(-gamma h))

Both CDFs are written through ``phi2(y) = y - (1 - exp(-y))`` so that they stay
accurate when ``z`` is tiny:

    1 - CDF_u(s) = phi2(z (1 - s)) / phi2(z)
    CDF_v(s)     = (exp(-z (1 - s)) - exp(-z)) / (1 - exp(-z))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ContractViolation, NumericalFailure
from .ou_noise import one_minus_exp, phi2

MAX_NEWTON_ITER = 128
CDF_TOL = 1e-12


@dataclass(frozen=True)
class MidpointLaw:
    gamma: float
    h: float

    def __post_init__(self):
        if self.gamma <= 0 or self.h <= 0:
            raise ContractViolation("gamma and h must be positive")

    @property
    def z(self):
        return self.gamma * self.h

    @property
    def normalizer_u(self):
        """``h - (1 - exp(-gamma h)) / gamma``."""
        return float(phi2(self.z)) / self.gamma

    @property
    def normalizer_v(self):
        """``1 - exp(-gamma h)``."""
        return float(one_minus_exp(self.z))

    def density_u(self, s):
        s = np.asarray(s, dtype=float)
        return self.h * one_minus_exp(self.z * (1.0 - s)) / self.normalizer_u

    def density_v(self, s):
        s = np.asarray(s, dtype=float)
        return self.h * self.gamma * np.exp(-self.z * (1.0 - s)) / self.normalizer_v

    def cdf_u(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return 1.0 - phi2(self.z * (1.0 - s)) / phi2(self.z)

    def sf_u(self, s):
        """``1 - CDF_u(s)``, computed without cancellation."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        return phi2(self.z * (1.0 - s)) / phi2(self.z)

    def cdf_v(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        z = self.z
        # exp(-z(1-s)) - exp(-z) = exp(-z) * expm1(z s)
        return np.exp(-z) * np.expm1(z * s) / one_minus_exp(z)

    def quantile_v(self, F):
        F = np.asarray(F, dtype=float)
        z = self.z
        # 1 + log(e^{-z} + F (1 - e^{-z})) / z, written as log1p of a negative number
        return 1.0 + np.log1p(-(1.0 - F) * one_minus_exp(z)) / z

    def quantile_u(self, F):
        """Invert ``CDF_u`` by safeguarded Newton iteration on ``w = 1 - s``."""
        F = np.asarray(F, dtype=float)
        scalar = F.ndim == 0
        F = np.atleast_1d(F)
        z = self.z
        target = 1.0 - F  # phi2(z w) / phi2(z) == 1 - F
        norm = phi2(z)
        lo = np.zeros_like(F)
        hi = np.ones_like(F)
        w = np.sqrt(np.clip(target, 0.0, 1.0))  # exact in the z -> 0 limit
        for _ in range(MAX_NEWTON_ITER):
            g = phi2(z * w) / norm - target
            # g is increasing in w
            done = np.abs(g) <= CDF_TOL
            if np.all(done):
                break
            lo = np.where(g < 0, w, lo)
            hi = np.where(g > 0, w, hi)
            dg = z * one_minus_exp(z * w) / norm
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dg > 0, g / dg, np.inf)
            w_new = w - step
            bad = ~np.isfinite(w_new) | (w_new <= lo) | (w_new >= hi)
            w_new = np.where(bad, 0.5 * (lo + hi), w_new)
            w = np.where(done, w, w_new)
        else:
            g = phi2(z * w) / norm - target
            if np.any(np.abs(g) > CDF_TOL):
                raise NumericalFailure(
                    f"u-quantile did not converge in {MAX_NEWTON_ITER} iterations (gamma*h={z})"
                )
        u = 1.0 - w
        return float(u[0]) if scalar else u

    def mean_u(self):
        return integrate.quad(lambda s: s * self.density_u(s), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]

    def mean_v(self):
        return integrate.quad(lambda s: s * self.density_v(s), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]


@dataclass(frozen=True)
class MidpointPair:
    u: np.ndarray
    v: np.ndarray


def open_uniform(rng, size=None):
    """Uniform draws on the open interval (0, 1)."""
    F = rng.random(size)
    return np.where(F == 0.0, 2.0**-54, F)


def sample_u(law: MidpointLaw, rng, size=None):
    u = law.quantile_u(open_uniform(rng, size))
    return u


def sample_v(law: MidpointLaw, rng, size=None):
    return law.quantile_v(open_uniform(rng, size))


def sample_pair(law: MidpointLaw, rng, size=None) -> MidpointPair:
    """Independent ``(u, v)``; draws u first then v from the same stream."""
    u = sample_u(law, rng, size)
    v = sample_v(law, rng, size)
    return MidpointPair(u, v)


@dataclass
class UnbiasednessReport:
    lhs_u: float
    rhs_u: float
    lhs_v: float
    rhs_v: float
    tol: float

    @property
    def passed(self):
        return (
            abs(self.lhs_u - self.rhs_u) <= self.tol * abs(self.rhs_u) + 1e-300
            and abs(self.lhs_v - self.rhs_v) <= self.tol * abs(self.rhs_v) + 1e-300
        )


def _quad(f, a, b):
    val, err = integrate.quad(f, a, b, epsabs=0, epsrel=1e-13, limit=200)
    if not np.isfinite(val):
        raise NumericalFailure("quadrature did not converge")
    return val


def unbiasedness_weights_check(law: MidpointLaw, test_function, quad_tol=1e-10):
    """Check the integral identities that make the midpoint estimators unbiased.

    u pairs with the position kernel ``(1 - exp(-gamma (h - s))) / gamma``;
    v pairs with the momentum kernel ``exp(-gamma (h - s))``.
    """
    g, h, gam = test_function, law.h, law.gamma
    Eu = _quad(lambda s: law.density_u(s) * g(s), 0.0, 1.0)
    Ev = _quad(lambda s: law.density_v(s) * g(s), 0.0, 1.0)
    lhs_u = law.normalizer_u / gam * Eu
    lhs_v = law.normalizer_v / gam * Ev
    rhs_u = _quad(lambda s: float(one_minus_exp(gam * (h - s))) / gam * g(s / h), 0.0, h)
    rhs_v = _quad(lambda s: np.exp(-gam * (h - s)) * g(s / h), 0.0, h)
    return UnbiasednessReport(lhs_u, rhs_u, lhs_v, rhs_v, quad_tol)
