"""Exact law propagation of ULMC on quadratic potentials.

For ``grad V(x) = S (x - m)`` one ULMC step is affine in the phase state plus
independent Gaussian noise, so every chain law started from a Gaussian (or a
point mass) stays Gaussian and can be tracked exactly.  Phase vectors are
ordered ``(x, p)``.

Two representations are provided: dense ``2d x 2d`` maps for general
precisions, and a per-eigendirection form (``d`` independent ``2 x 2``
chains) used when the precision is diagonal and speed matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ContractViolation, InstabilityError, UnsupportedModelError
from .ou_noise import noise_block
from .potential import SpdMatrix
from .samplers import StepCoefficients

EIG_TOL = 1e-12
DIVERGENCE_FACTOR = 1e12
FIXED_POINT_RTOL = 1e-13
KRON_SOLVE_MAX_DIM = 16


def _sym(m):
    return 0.5 * (m + m.T)


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = _sym(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ContractViolation("covariance shape does not match mean")
        if mean.size:
            w = np.linalg.eigvalsh(cov)
            if w[0] < -EIG_TOL * max(1.0, abs(w[-1])):
                raise ContractViolation(f"covariance has negative eigenvalue {w[0]:.3e}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size

    @classmethod
    def point_mass(cls, x, p=None):
        x = np.asarray(x, dtype=float)
        p = np.zeros_like(x) if p is None else np.asarray(p, dtype=float)
        z = np.concatenate([x, p])
        return cls(z, np.zeros((z.size, z.size)))


@dataclass(frozen=True, eq=False)
class AffineStepMap:
    """``z -> A z + offset + N(0, noise_cov)``."""

    A: np.ndarray
    noise_cov: np.ndarray
    offset: np.ndarray

    @property
    def dim(self):
        return self.A.shape[0]

    def then(self, other: "AffineStepMap") -> "AffineStepMap":
        """Apply ``self`` first and ``other`` second."""
        A = other.A @ self.A
        Q = _sym(other.A @ self.noise_cov @ other.A.T + other.noise_cov)
        b = other.A @ self.offset + other.offset
        return AffineStepMap(A, Q, b)

    def apply(self, law: GaussianLaw) -> GaussianLaw:
        return GaussianLaw(self.A @ law.mean + self.offset, _sym(self.A @ law.cov @ self.A.T + self.noise_cov))


def _precision_dense(S, dim=None):
    if isinstance(S, SpdMatrix):
        return S.to_dense()
    S = np.asarray(S, dtype=float)
    if S.ndim == 0:
        if dim is None:
            raise ContractViolation("scalar precision needs a dimension")
        return float(S) * np.eye(dim)
    if S.ndim == 1:
        return np.diag(S)
    return S


def ulmc_affine_map(S, gamma, h, minimizer=None) -> AffineStepMap:
    """Exact affine form of one ULMC step for ``grad V(x) = S (x - minimizer)``."""
    dim = None if minimizer is None else len(minimizer)
    Sd = _precision_dense(S, dim)
    d = Sd.shape[0]
    c = StepCoefficients(gamma, h)
    I = np.eye(d)
    A = np.block([[I - c.c2 * Sd, c.c1 * I], [-c.c1 * Sd, c.e_gh * I]])
    blk = noise_block(gamma, h)
    Q = np.kron(np.array([[blk.var_x, blk.cov_xp], [blk.cov_xp, blk.var_p]]), I)
    m = np.zeros(d) if minimizer is None else np.asarray(minimizer, dtype=float)
    shift = np.concatenate([m, np.zeros(d)])
    return AffineStepMap(A, Q, shift - A @ shift)


def map_power(step: AffineStepMap, n) -> AffineStepMap:
    """``n``-fold composition by repeated squaring."""
    if n < 0:
        raise ContractViolation("n must be non-negative")
    k = step.dim
    result = AffineStepMap(np.eye(k), np.zeros((k, k)), np.zeros(k))
    base = step
    while n:
        if n & 1:
            result = result.then(base)
        n >>= 1
        if n:
            base = base.then(base)
    return result


def propagate_law(law: GaussianLaw, step: AffineStepMap, n, reference_trace=None) -> GaussianLaw:
    """Apply the affine step ``n`` times, symmetrizing the covariance each time.

    Raises :class:`InstabilityError` when the covariance trace exceeds
    ``1e12`` times ``reference_trace`` (by default the larger of the initial
    and per-step noise traces).
    """
    if law.dim != step.dim:
        raise ContractViolation("law and map dimensions differ")
    if reference_trace is None:
        reference_trace = max(np.trace(law.cov), np.trace(step.noise_cov), 1e-300)
    limit = DIVERGENCE_FACTOR * reference_trace
    mean_limit = DIVERGENCE_FACTOR * (1.0 + float(law.mean @ law.mean))
    mean, cov = law.mean.copy(), law.cov.copy()
    A, Q, b = step.A, step.noise_cov, step.offset
    for k in range(int(n)):
        mean = A @ mean + b
        cov = _sym(A @ cov @ A.T + Q)
        if not np.isfinite(np.trace(cov)) or np.trace(cov) > limit or mean @ mean > mean_limit:
            raise InstabilityError(f"law diverged after {k + 1} steps")
    return GaussianLaw(mean, cov)


def spectral_radius(A):
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def stationary_law(step: AffineStepMap, method="iterate") -> GaussianLaw:
    """Fixed point of the affine step.

    ``"iterate"`` doubles the horizon (``cov <- cov + A^k cov A^k^T``) until
    the relative change is below ``1e-13``; ``"solve"`` solves the discrete
    Lyapunov equation directly (Kronecker system for small dimension).
    """
    A, Q, b = step.A, step.noise_cov, step.offset
    k = step.dim
    if spectral_radius(A) >= 1.0:
        raise InstabilityError("step map is not contractive; no stationary law")
    mean = np.linalg.solve(np.eye(k) - A, b)
    if method == "iterate":
        cov, Ak = Q.copy(), A.copy()
        for _ in range(200):
            inc = _sym(Ak @ cov @ Ak.T)
            cov = cov + inc
            Ak = Ak @ Ak
            if np.linalg.norm(inc) <= FIXED_POINT_RTOL * np.linalg.norm(cov):
                break
        else:
            raise InstabilityError("fixed-point iteration did not converge")
        return GaussianLaw(mean, _sym(cov))
    if method == "solve":
        if k <= 2 * KRON_SOLVE_MAX_DIM:
            # vec(cov) = (I - A (x) A)^{-1} vec(Q)
            M = np.eye(k * k) - np.kron(A, A)
            cov = np.linalg.solve(M, Q.reshape(-1)).reshape(k, k)
        else:
            cov = linalg.solve_discrete_lyapunov(A, Q)
        return GaussianLaw(mean, _sym(cov))
    raise ContractViolation(f"unknown method {method!r}")


def target_law(model) -> GaussianLaw:
    """``pi(x, p)`` for a quadratic potential: ``N(m, S^{-1}) x N(0, I)``."""
    if not getattr(model, "is_quadratic", False):
        raise UnsupportedModelError("exact target law needs a quadratic potential")
    d = model.dim
    S = model.precision.to_dense()
    cov = np.zeros((2 * d, 2 * d))
    cov[:d, :d] = np.linalg.inv(S)
    cov[d:, d:] = np.eye(d)
    return GaussianLaw(np.concatenate([model.minimizer, np.zeros(d)]), cov)


def kl_gaussian(p: GaussianLaw, q: GaussianLaw) -> float:
    """``KL(p || q)`` computed from the eigenvalues of ``L^{-1} cov_p L^{-T}``."""
    if p.dim != q.dim:
        raise ContractViolation("dimension mismatch")
    try:
        L = np.linalg.cholesky(q.cov)
    except np.linalg.LinAlgError as exc:
        raise ContractViolation("q covariance is singular") from exc
    Linv_cp = linalg.solve_triangular(L, p.cov, lower=True)
    M = linalg.solve_triangular(L, Linv_cp.T, lower=True)
    lam = np.linalg.eigvalsh(_sym(M))
    if lam[0] <= 0:
        return float("inf")
    delta = linalg.solve_triangular(L, p.mean - q.mean, lower=True)
    t = lam - 1.0
    # sum(lam - 1 - log lam) without cancellation near lam = 1
    return float(0.5 * (np.sum(t - np.log1p(t)) + delta @ delta))


def psd_sqrt(m):
    w, v = np.linalg.eigh(_sym(m))
    if w[0] < -EIG_TOL * max(1.0, abs(w[-1])):
        raise ContractViolation(f"matrix square root of indefinite matrix (eigenvalue {w[0]:.3e})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def w2_gaussian(p: GaussianLaw, q: GaussianLaw) -> float:
    """Bures-Wasserstein distance between two Gaussian laws."""
    if p.dim != q.dim:
        raise ContractViolation("dimension mismatch")
    rq = psd_sqrt(q.cov)
    cross = psd_sqrt(rq @ p.cov @ rq)
    diff = p.mean - q.mean
    val = diff @ diff + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross)
    return float(np.sqrt(max(val, 0.0)))


# ---------------------------------------------------------------------------
# Per-eigendirection form for diagonal precisions


@dataclass(frozen=True, eq=False)
class CoordinateMaps:
    """``d`` independent 2x2 affine steps, one per precision eigenvalue.

    ``A`` and ``Q`` have shape ``(d, 2, 2)``; the offset is zero (centred
    coordinates).
    """

    eigs: np.ndarray
    A: np.ndarray
    Q: np.ndarray

    def then(self, other):
        A = other.A @ self.A
        Q = other.A @ self.Q @ np.swapaxes(other.A, -1, -2) + other.Q
        return CoordinateMaps(self.eigs, A, 0.5 * (Q + np.swapaxes(Q, -1, -2)))

    def power(self, n):
        d = self.eigs.size
        result = CoordinateMaps(self.eigs, np.broadcast_to(np.eye(2), (d, 2, 2)).copy(), np.zeros((d, 2, 2)))
        base = self
        while n:
            if n & 1:
                result = result.then(base)
            n >>= 1
            if n:
                base = base.then(base)
        return result

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))


def coordinate_maps(eigs, gamma, h) -> CoordinateMaps:
    eigs = np.asarray(eigs, dtype=float)
    c = StepCoefficients(gamma, h)
    A = np.empty((eigs.size, 2, 2))
    A[:, 0, 0] = 1.0 - c.c2 * eigs
    A[:, 0, 1] = c.c1
    A[:, 1, 0] = -c.c1 * eigs
    A[:, 1, 1] = c.e_gh
    blk = noise_block(gamma, h)
    Q = np.broadcast_to(np.array([[blk.var_x, blk.cov_xp], [blk.cov_xp, blk.var_p]]), A.shape).copy()
    return CoordinateMaps(eigs, A, Q)


def coordinate_kl(mean, cov, eigs):
    """KL of per-coordinate laws ``(mean (d,2), cov (d,2,2))`` to ``N(0, diag(1/eig)) x N(0, I)``."""
    eigs = np.asarray(eigs, dtype=float)
    # whiten by the target: x-scale sqrt(eig), p-scale 1
    s = np.stack([np.sqrt(eigs), np.ones_like(eigs)], -1)
    M = cov * s[:, :, None] * s[:, None, :]
    mu = mean * s
    tr = M[:, 0, 0] + M[:, 1, 1]
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2
    if np.any(det <= 0):
        return float("inf")
    disc = np.sqrt(np.maximum((tr / 2) ** 2 - det, 0.0))
    lam = np.stack([tr / 2 - disc, tr / 2 + disc], -1)
    lam_small = det / lam[:, 1]  # product is exact; avoids cancellation in the smaller root
    lam = np.stack([lam_small, lam[:, 1]], -1)
    t = lam - 1.0
    return float(0.5 * (np.sum(t - np.log1p(t)) + np.sum(mu * mu)))


def coordinate_stationary_cov(maps: CoordinateMaps):
    """Fixed-point covariances of the per-coordinate chains (doubling iteration)."""
    if maps.spectral_radius() >= 1.0:
        raise InstabilityError("per-coordinate step map is not contractive")
    cov, Ak = maps.Q.copy(), maps.A.copy()
    for _ in range(200):
        inc = Ak @ cov @ np.swapaxes(Ak, -1, -2)
        cov = cov + inc
        Ak = Ak @ Ak
        if np.max(np.abs(inc)) <= FIXED_POINT_RTOL * np.max(np.abs(cov)):
            break
    else:
        raise InstabilityError("fixed-point iteration did not converge")
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))
