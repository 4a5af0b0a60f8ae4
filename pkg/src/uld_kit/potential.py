"""Potentials V with gradients, curvature bounds and a declared Hessian bound H.

Every model satisfies ``alpha I <= hess V(x) <= H <= beta I``.  The matrix H is
a declared input and enters the error bounds only through ``tr(H)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

PSD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric PSD matrix stored as dense, diagonal, or scalar * identity."""

    form: str
    data: np.ndarray
    dim: int

    @classmethod
    def dense(cls, m):
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ContractViolation("dense SPD matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise ContractViolation("matrix is not symmetric")
        return cls("dense", 0.5 * (m + m.T), m.shape[0])

    @classmethod
    def diagonal(cls, diag):
        diag = np.asarray(diag, dtype=float)
        if diag.ndim != 1:
            raise ContractViolation("diagonal must be a vector")
        return cls("diagonal", diag, diag.size)

    @classmethod
    def scalar(cls, c, dim):
        return cls("scalar", np.asarray(float(c)), int(dim))

    def to_dense(self):
        if self.form == "dense":
            return self.data.copy()
        if self.form == "diagonal":
            return np.diag(self.data)
        return float(self.data) * np.eye(self.dim)

    def matvec(self, v):
        """``M v`` for ``v`` of shape ``(..., d)``."""
        v = np.asarray(v, dtype=float)
        if self.form == "dense":
            return v @ self.data  # symmetric, so v M == (M v)^T
        if self.form == "diagonal":
            return v * self.data
        return float(self.data) * v

    def quad_form(self, v):
        return np.sum(v * self.matvec(v), axis=-1)

    def trace(self):
        if self.form == "dense":
            return float(np.trace(self.data))
        if self.form == "diagonal":
            return float(self.data.sum())
        return float(self.data) * self.dim

    def eigenvalues(self):
        if self.form == "dense":
            return np.linalg.eigvalsh(self.data)
        if self.form == "diagonal":
            return np.sort(self.data)
        return np.full(self.dim, float(self.data))

    def min_eig(self):
        return float(self.eigenvalues()[0])

    def max_eig(self):
        return float(self.eigenvalues()[-1])

    def is_psd(self, tol=PSD_TOL):
        scale = max(1.0, float(np.max(np.abs(self.data)))) if self.data.size else 1.0
        return self.min_eig() >= -tol * scale


def _as_spd(m, dim=None):
    if isinstance(m, SpdMatrix):
        return m
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        if dim is None:
            raise ContractViolation("scalar matrix needs a dimension")
        return SpdMatrix.scalar(m, dim)
    if m.ndim == 1:
        return SpdMatrix.diagonal(m)
    return SpdMatrix.dense(m)


@dataclass(frozen=True, eq=False)
class PotentialModel:
    """Base class: subclasses implement ``value`` and ``gradient``."""

    dim: int
    alpha: float
    beta: float
    hessian_bound: SpdMatrix
    minimizer: np.ndarray

    def __post_init__(self):
        if self.dim <= 0:
            raise ContractViolation("dimension must be positive")
        if self.alpha < 0 or self.beta <= 0:
            raise ContractViolation("need alpha >= 0 and beta > 0")
        if self.hessian_bound.dim != self.dim or np.shape(self.minimizer) != (self.dim,):
            raise ContractViolation("hessian bound / minimizer dimension mismatch")

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ContractViolation(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return x

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    @property
    def is_quadratic(self):
        return False


@dataclass(frozen=True, eq=False)
class QuadraticPotential(PotentialModel):
    """``V(x) = (x - m)^T S (x - m) / 2`` with precision ``S``."""

    precision: SpdMatrix = field(default=None)

    def value(self, x):
        x = self._check(x)
        return 0.5 * self.precision.quad_form(x - self.minimizer)

    def gradient(self, x):
        x = self._check(x)
        return self.precision.matvec(x - self.minimizer)

    @property
    def is_quadratic(self):
        return True

    def sample_gibbs(self, rng, n):
        """Exact draws ``x ~ N(m, S^{-1})`` from the position marginal of pi."""
        evals = self.precision.eigenvalues()
        if evals[0] <= 0:
            raise ContractViolation("precision is singular; Gibbs measure is improper")
        z = rng.standard_normal((n, self.dim))
        if self.precision.form == "dense":
            w, v = np.linalg.eigh(self.precision.data)
            return self.minimizer + (z / np.sqrt(w)) @ v.T
        if self.precision.form == "diagonal":
            return self.minimizer + z / np.sqrt(self.precision.data)
        return self.minimizer + z / np.sqrt(float(self.precision.data))


def quadratic(precision, minimizer=None, hessian_bound=None, alpha=None, beta=None):
    """Quadratic potential; H defaults to the precision itself."""
    dim = None if minimizer is None else len(minimizer)
    S = _as_spd(precision, dim)
    dim = S.dim
    m = np.zeros(dim) if minimizer is None else np.asarray(minimizer, dtype=float)
    H = S if hessian_bound is None else _as_spd(hessian_bound, dim)
    evals = S.eigenvalues()
    a = max(float(evals[0]), 0.0) if alpha is None else float(alpha)
    b = H.max_eig() if beta is None else float(beta)
    return QuadraticPotential(dim, a, b, H, m, precision=S)


@dataclass(frozen=True, eq=False)
class RidgeSeparableSpec:
    """Unit directions ``a_i``, curvatures ``c_i`` and shifts ``b_i``."""

    directions: np.ndarray
    ridge_curvatures: np.ndarray
    anchor_shifts: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.directions, dtype=float))
        norms = np.linalg.norm(a, axis=1)
        if not np.allclose(norms, 1.0, rtol=0, atol=1e-12):
            raise ContractViolation("ridge directions must be unit vectors")
        if np.any(np.asarray(self.ridge_curvatures) <= 0):
            raise ContractViolation("ridge curvatures must be positive")
        object.__setattr__(self, "directions", a)
        object.__setattr__(self, "ridge_curvatures", np.asarray(self.ridge_curvatures, dtype=float))
        object.__setattr__(self, "anchor_shifts", np.asarray(self.anchor_shifts, dtype=float))


@dataclass(frozen=True, eq=False)
class RidgePotential(QuadraticPotential):
    """``V(x) = sum_i c_i (a_i . x - b_i)^2 / 2``; Hessian constant and equal to H."""

    ridge: RidgeSeparableSpec = field(default=None)

    def value(self, x):
        x = self._check(x)
        r = x @ self.ridge.directions.T - self.ridge.anchor_shifts
        return 0.5 * np.sum(self.ridge.ridge_curvatures * r**2, axis=-1)

    def gradient(self, x):
        x = self._check(x)
        r = x @ self.ridge.directions.T - self.ridge.anchor_shifts
        return (self.ridge.ridge_curvatures * r) @ self.ridge.directions


def ridge_separable(spec: RidgeSeparableSpec, alpha=None):
    a, c, b = spec.directions, spec.ridge_curvatures, spec.anchor_shifts
    d = a.shape[1]
    H = (a.T * c) @ a
    H = 0.5 * (H + H.T)
    # least-norm minimizer of sum c_i (a_i.x - b_i)^2
    w = np.sqrt(c)
    m = np.linalg.lstsq(a * w[:, None], w * b, rcond=None)[0]
    evals = np.linalg.eigvalsh(H)
    lam_min = max(float(evals[0]), 0.0)
    if lam_min < 1e-12 * max(1.0, float(evals[-1])):
        lam_min = 0.0
    Hs = SpdMatrix.dense(H)
    return RidgePotential(
        d,
        lam_min if alpha is None else float(alpha),
        float(evals[-1]),
        Hs,
        m,
        precision=Hs,
        ridge=spec,
    )


@dataclass(frozen=True, eq=False)
class LogisticSmokePotential(PotentialModel):
    """Symmetric logistic ridges plus an L2 term; for sampler smoke tests only.

    ``V(x) = sum_i w_i [log(1 + e^{t_i}) + log(1 + e^{-t_i})] + lam |x - m|^2 / 2``
    with ``t_i = a_i . (x - m)``; the minimizer is ``m`` by symmetry.
    """

    directions: np.ndarray = field(default=None)
    weights: np.ndarray = field(default=None)
    l2: float = 0.0

    def value(self, x):
        x = self._check(x)
        y = x - self.minimizer
        t = y @ self.directions.T
        ridge = np.logaddexp(0.0, t) + np.logaddexp(0.0, -t)
        return np.sum(self.weights * ridge, axis=-1) + 0.5 * self.l2 * np.sum(y * y, axis=-1)

    def gradient(self, x):
        x = self._check(x)
        y = x - self.minimizer
        t = y @ self.directions.T
        s = np.tanh(0.5 * t)  # sigmoid(t) - sigmoid(-t)
        return (self.weights * s) @ self.directions + self.l2 * y


def logistic_smoke(directions, weights, l2, minimizer=None):
    a = np.atleast_2d(np.asarray(directions, dtype=float))
    a = a / np.linalg.norm(a, axis=1, keepdims=True)
    w = np.asarray(weights, dtype=float)
    d = a.shape[1]
    m = np.zeros(d) if minimizer is None else np.asarray(minimizer, dtype=float)
    # second derivative of each ridge is 2 sigmoid'(t) <= 1/2
    H = 0.5 * (a.T * w) @ a + l2 * np.eye(d)
    H = 0.5 * (H + H.T)
    beta = float(np.linalg.eigvalsh(H)[-1])
    return LogisticSmokePotential(
        d, float(l2), beta, SpdMatrix.dense(H), m, directions=a, weights=w, l2=float(l2)
    )


def potential_value(model: PotentialModel, x):
    return model.value(x)


def potential_gradient(model: PotentialModel, x):
    return model.gradient(x)


def hessian_trace(model: PotentialModel):
    return model.hessian_bound.trace()


def fd_step(x):
    return 1e-5 * (1.0 + np.linalg.norm(x))


def fd_gradient(model, x):
    """Central-difference gradient of ``model.value`` at a single point."""
    x = np.asarray(x, dtype=float)
    eps = fd_step(x)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = eps
        g[j] = (model.value(x + e) - model.value(x - e)) / (2 * eps)
    return g


def fd_hessian(model, x):
    """Central-difference Hessian from the analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    eps = fd_step(x)
    d = x.size
    E = eps * np.eye(d)
    cols = (model.gradient(x + E) - model.gradient(x - E)) / (2 * eps)
    return 0.5 * (cols + cols.T)


@dataclass
class CurvatureReport:
    passed: bool
    h_psd: bool
    lower_gap: list  # min eig(hess - alpha I) per probe
    upper_gap: list  # min eig(H - hess) per probe
    beta_gap: float  # min eig(beta I - H)
    tol: float

    @property
    def worst_violation(self):
        gaps = list(self.lower_gap) + list(self.upper_gap) + [self.beta_gap]
        return max(0.0, -min(gaps)) if gaps else 0.0


def check_curvature_sandwich(model: PotentialModel, probe_points, tol=1e-6):
    """Spot-check ``alpha I <= hess V(x) <= H <= beta I`` at the probe points."""
    H = model.hessian_bound
    h_psd = H.is_psd()
    Hd = H.to_dense()
    beta_gap = float(model.beta - H.max_eig())
    lower, upper = [], []
    for x in probe_points:
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ContractViolation("probe points must be finite")
        hess = fd_hessian(model, x)
        lower.append(float(np.linalg.eigvalsh(hess)[0] - model.alpha))
        upper.append(float(np.linalg.eigvalsh(Hd - hess)[0]))
    ok = h_psd and beta_gap >= -tol and all(g >= -tol for g in lower + upper)
    return CurvatureReport(ok, h_psd, lower, upper, beta_gap, tol)


def potential_from_spec(spec: dict) -> PotentialModel:
    """Build a potential from a flat config mapping (keys without the ``potential.`` prefix).

    kind = quadratic: ``precision`` (dense rows) or ``precision_diag``; optional
    ``minimizer``, ``hessian_bound``/``hessian_bound_diag``, ``alpha``, ``beta``.
    kind = ridge: ``directions``, ``curvatures``, optional ``shifts``.
    kind = logistic-smoke: ``directions``, ``weights``, ``l2``.
    """
    kind = spec.get("kind", "quadratic")
    if kind == "quadratic":
        if "precision" in spec:
            S = SpdMatrix.dense(spec["precision"])
        elif "precision_diag" in spec:
            S = SpdMatrix.diagonal(spec["precision_diag"])
        elif "identity_dim" in spec:
            S = SpdMatrix.scalar(spec.get("scale", 1.0), spec["identity_dim"])
        else:
            raise ContractViolation("quadratic potential needs precision or precision_diag")
        Hb = None
        if "hessian_bound" in spec:
            Hb = SpdMatrix.dense(spec["hessian_bound"])
        elif "hessian_bound_diag" in spec:
            Hb = SpdMatrix.diagonal(spec["hessian_bound_diag"])
        m = spec.get("minimizer")
        model = quadratic(S, m, Hb, spec.get("alpha"), spec.get("beta"))
    elif kind == "ridge":
        dirs = np.atleast_2d(np.asarray(spec["directions"], dtype=float))
        c = np.asarray(spec["curvatures"], dtype=float)
        b = np.asarray(spec.get("shifts", np.zeros(len(c))), dtype=float)
        model = ridge_separable(RidgeSeparableSpec(dirs, c, b), spec.get("alpha"))
    elif kind == "logistic-smoke":
        model = logistic_smoke(spec["directions"], spec["weights"], spec.get("l2", 1.0), spec.get("minimizer"))
    else:
        raise ContractViolation(f"unknown potential kind {kind!r}")
    if not model.hessian_bound.is_psd():
        raise ContractViolation("declared Hessian bound is not PSD")
    return model
