"""Error-order measurement, slope fits, concentration checks and dimension sweeps.

Local errors are measured under synchronous coupling: each repetition draws
one fine reference path, composes the coarse-step noise from it and runs the
coarse scheme on exactly that noise.  Two optional variance reductions are
available for the weak (mean) error:

* antithetic paths: rows ``i`` and ``i + B/2`` share the midpoints and use
  negated Brownian increments;
* a control variate for RMD: the gradient at the noise-free predictor, whose
  expectation over the midpoint law is computed by quadrature, is subtracted
  from the gradient at the random predictor.

Both leave the estimator unbiased.  On quadratic targets their combination
removes all Monte Carlo variance (the scheme is then linear in the noise and
the control variate is exact), so only reference-integrator error remains.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, stats

from .errors import ContractViolation, UnsupportedModelError
from .gaussian_oracle import coordinate_maps
from .midpoint import MidpointLaw, MidpointPair, sample_u, sample_v
from .rng import stream_pair
from .samplers import (
    DEFAULT_REF_SUBSTEPS,
    PhaseState,
    Scheme,
    StepCoefficients,
    reference_uld_step,
    rmd_step,
    ulmc_step,
)

SE_EXCLUDE_FRACTION = 0.3
WEAK_TARGET_REL_SE = 0.2
MAX_REPS = 10**7
N_BOOT = 1000

CSV_COLUMNS = [
    "h",
    "scheme",
    "strong_x",
    "strong_x_se",
    "strong_p",
    "strong_p_se",
    "weak_x",
    "weak_x_se",
    "weak_p",
    "weak_p_se",
    "strong_x_normalized",
    "strong_p_normalized",
    "weak_x_normalized",
    "weak_p_normalized",
    "n_reps",
    "ref_substeps",
    "ref_gap",
    "flag_ref_gap",
]
CSV_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Slope fitting


def fit_loglog_slope(points, exclude_fraction=SE_EXCLUDE_FRACTION):
    """OLS slope of ``log value`` on ``log h``.

    ``points`` is a sequence of ``(h, value, se)``; points with
    ``se > exclude_fraction * value`` (or non-positive values) are dropped.
    Returns ``(slope, half_width)`` with half-width twice the slope's
    standard error.
    """
    usable = [
        (h, v)
        for h, v, se in points
        if np.isfinite(v) and v > 0 and h > 0 and (se is None or se <= exclude_fraction * v)
    ]
    if len(usable) < 3:
        raise ContractViolation(f"need at least 3 usable points for a slope fit, got {len(usable)}")
    lh = np.log([u[0] for u in usable])
    lv = np.log([u[1] for u in usable])
    res = stats.linregress(lh, lv)
    return float(res.slope), 2.0 * float(res.stderr)


# ---------------------------------------------------------------------------
# Local error measurement


class _Accumulator:
    """Associative sums for one error component (x or p)."""

    def __init__(self, d):
        self.n = 0
        self.sum_a = np.zeros(d)
        self.sum_aa = np.zeros((d, d))
        self.sum_s = 0.0
        self.sum_ss = 0.0

    def add(self, a, s):
        self.n += a.shape[0]
        self.sum_a += a.sum(0)
        self.sum_aa += a.T @ a
        self.sum_s += float(s.sum())
        self.sum_ss += float(s @ s)

    def strong(self):
        """RMS error and its delta-method standard error."""
        n = self.n
        ms = self.sum_s / n
        var_s = max(self.sum_ss / n - ms**2, 0.0) * n / max(n - 1, 1)
        rms = np.sqrt(ms)
        se = np.sqrt(var_s / n) / (2 * rms) if rms > 0 else 0.0
        return float(rms), float(se)

    def weak(self):
        """Norm of the mean error and its delta-method standard error."""
        n = self.n
        mean = self.sum_a / n
        cov = (self.sum_aa / n - np.outer(mean, mean)) * n / max(n - 1, 1)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            return 0.0, float(np.sqrt(max(np.trace(cov), 0.0) / n))
        u = mean / norm
        return norm, float(np.sqrt(max(u @ cov @ u, 0.0) / n))


@dataclass
class LocalErrorReport:
    scheme: str
    h_grid: np.ndarray
    strong_x: np.ndarray
    strong_x_se: np.ndarray
    strong_p: np.ndarray
    strong_p_se: np.ndarray
    weak_x: np.ndarray
    weak_x_se: np.ndarray
    weak_p: np.ndarray
    weak_p_se: np.ndarray
    n_reps: np.ndarray
    ref_substeps: int
    ref_gap: np.ndarray
    fitted_slopes: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def normalized(self, name):
        """Error divided by ``h`` (the per-unit-time normalization)."""
        return getattr(self, name) / self.h_grid

    @property
    def ref_gap_flags(self):
        """Reference unresolved relative to the measured strong error."""
        return self.ref_gap > 0.1 * np.maximum(self.strong_x, 1e-300)

    def points(self, name):
        return list(zip(self.h_grid, getattr(self, name), getattr(self, name + "_se")))

    def flagged(self, name):
        v, se = getattr(self, name), getattr(self, name + "_se")
        return se > SE_EXCLUDE_FRACTION * v

    def rows(self):
        out = []
        for i, h in enumerate(self.h_grid):
            row = {"h": float(h), "scheme": self.scheme}
            for name in ("strong_x", "strong_p", "weak_x", "weak_p"):
                row[name] = float(getattr(self, name)[i])
                row[name + "_se"] = float(getattr(self, name + "_se")[i])
            for name in ("strong_x", "strong_p", "weak_x", "weak_p"):
                row[name + "_normalized"] = float(getattr(self, name)[i] / h)
            row["n_reps"] = int(self.n_reps[i])
            row["ref_substeps"] = int(self.ref_substeps)
            row["ref_gap"] = float(self.ref_gap[i])
            row["flag_ref_gap"] = bool(self.ref_gap_flags[i])
            out.append(row)
        return out

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: _fmt(v) for k, v in row.items()})

    def summary(self):
        return {
            "scheme": self.scheme,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "fitted_slopes": {k: {"slope": s, "half_width": hw} for k, (s, hw) in self.fitted_slopes.items()},
            "settings": self.settings,
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _predictor_mean_gradient(model, start: PhaseState, coeffs, law: MidpointLaw, which, predictor):
    """``E[grad V(noise-free predictor at s h)]`` under the u or v law, by quadrature."""
    g0 = model.gradient(start.x)
    h = coeffs.h

    def integrand(s):
        _, c1t, c2t = coeffs.partial(s * h)
        cp = c1t if predictor == "partial" else coeffs.c1
        xs = start.x + cp * start.p - c2t * g0
        dens = law.density_u(s) if which == "u" else law.density_v(s)
        return dens * model.gradient(xs)

    val, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=400)
    return val


def _noise_free_gradient(model, start, coeffs, s, predictor):
    """Gradient at the noise-free predictor for per-row midpoints ``s``."""
    g0 = model.gradient(start.x)
    _, c1t, c2t = coeffs.partial(s * coeffs.h)
    cp = c1t if predictor == "partial" else np.full_like(c1t, coeffs.c1)
    xs = start.x + cp[:, None] * start.p - c2t[:, None] * g0
    return model.gradient(xs)


def _local_chunk(model, gamma, h, start, scheme, units, K, seed, key, antithetic, n_mid, predictor, cv, extrapolate):
    """One batch of coupled repetitions; returns per-unit (a_x, s_x, a_p, s_p, weak_x, weak_p, gap)."""
    noise_rng, mid_rng = stream_pair(seed, *key)
    rows = units * (2 if antithetic else 1)
    st = start.broadcast(rows)
    coeffs = StepCoefficients(gamma, h)
    times = None
    if scheme is Scheme.RMD:
        law = MidpointLaw(gamma, h)
        u = sample_u(law, mid_rng, (units, n_mid))
        v = sample_v(law, mid_rng, (units, n_mid))
        if antithetic:
            u = np.concatenate([u, u])
            v = np.concatenate([v, v])
        times = np.sort(np.concatenate([u, v], -1) * h, axis=-1)
    ref, noise = reference_uld_step(
        st, model, gamma, h, K, noise_rng, times, antithetic=antithetic, extrapolate=extrapolate
    )
    gap = noise.richardson_gap or 0.0

    if scheme is Scheme.REFERENCE:
        dxs = [np.zeros_like(ref.x)]
        dps = [np.zeros_like(ref.p)]
        cvx = cvp = [np.zeros_like(ref.x)]
    elif scheme is Scheme.ULMC:
        out = ulmc_step(st, model, coeffs, noise)
        dxs, dps = [out.x - ref.x], [out.p - ref.p]
        cvx = cvp = [np.zeros_like(ref.x)]
    elif scheme is Scheme.RMD:
        dxs, dps, cvx, cvp = [], [], [], []
        for j in range(n_mid):
            pair = MidpointPair(u[:, j], v[:, j])
            out = rmd_step(st, model, coeffs, pair, noise, predictor)
            dxs.append(out.x - ref.x)
            dps.append(out.p - ref.p)
            if cv is not None:
                cvx.append(coeffs.c2 * (_noise_free_gradient(model, start, coeffs, u[:, j], predictor) - cv[0]))
                cvp.append(coeffs.c1 * (_noise_free_gradient(model, start, coeffs, v[:, j], predictor) - cv[1]))
            else:
                cvx.append(np.zeros_like(ref.x))
                cvp.append(np.zeros_like(ref.x))
    else:
        raise ContractViolation(f"local error is not defined for scheme {scheme.value}")

    def per_unit(diffs, cvs):
        a = np.mean(diffs, axis=0)
        s = np.mean([np.sum(dd * dd, -1) for dd in diffs], axis=0)
        w = a + np.mean(cvs, axis=0)
        if antithetic:
            a = 0.5 * (a[:units] + a[units:])
            s = 0.5 * (s[:units] + s[units:])
            w = 0.5 * (w[:units] + w[units:])
        return a, s, w

    ax, sx, wx = per_unit(dxs, cvx)
    ap, sp, wp = per_unit(dps, cvp)
    return ax, sx, wx, ap, sp, wp, gap


def measure_local_error(
    model,
    gamma,
    h_grid,
    start: PhaseState,
    n_reps,
    seed=0,
    scheme=Scheme.ULMC,
    ref_substeps=DEFAULT_REF_SUBSTEPS,
    predictor="partial",
    antithetic=False,
    control_variate=False,
    midpoints_per_path=1,
    adaptive=False,
    weak_target_rel_se=WEAK_TARGET_REL_SE,
    max_reps=MAX_REPS,
    chunk_units=4096,
    fit=True,
    extrapolate=True,
    threads=1,
):
    """Strong and weak one-step errors of ``scheme`` against the fine reference.

    Repetition units are paths (or antithetic path pairs); each unit may carry
    several RMD midpoint draws.  Unit ``r`` of grid point ``i`` always uses
    substream ``(i, chunk)``, so results do not depend on scheduling.  With
    ``adaptive=True`` the repetition count doubles until the weak-error SE
    of each component is below ``weak_target_rel_se`` of its value or
    ``max_reps`` is reached.  By default the reference endpoint is the
    Richardson-extrapolated combination of ``K`` and ``K/2`` substeps.
    """
    scheme = Scheme(scheme)
    h_grid = np.asarray(h_grid, dtype=float)
    if start.x.ndim != 1:
        raise ContractViolation("start must be a single unbatched state")
    if np.any(h_grid <= 0):
        raise ContractViolation("step sizes must be positive")
    if model.beta > 0 and np.any(h_grid > 1.0 / np.sqrt(model.beta) * (1 + 1e-12)):
        raise ContractViolation("step sizes must lie in (0, 1/sqrt(beta)]")
    if scheme is not Scheme.RMD:
        midpoints_per_path = 1
    d = start.dim
    n = len(h_grid)
    res = {k: np.zeros(n) for k in ("sx", "sxe", "sp", "spe", "wx", "wxe", "wp", "wpe", "gap")}
    reps = np.zeros(n, dtype=np.int64)

    def one_point(i):
        h = h_grid[i]
        coeffs = StepCoefficients(gamma, h)
        cv = None
        if control_variate and scheme is Scheme.RMD:
            law = MidpointLaw(gamma, h)
            cv = (
                _predictor_mean_gradient(model, start, coeffs, law, "u", predictor),
                _predictor_mean_gradient(model, start, coeffs, law, "v", predictor),
            )
        acc = {k: _Accumulator(d) for k in ("x", "p", "wx", "wp")}
        done, chunk, target, gap = 0, 0, int(n_reps), 0.0
        while True:
            while done < target:
                m = min(chunk_units, target - done)
                ax, sx, wx, ap, sp, wp, g = _local_chunk(
                    model, gamma, h, start, scheme, m, ref_substeps, seed, (i, chunk),
                    antithetic, midpoints_per_path, predictor, cv, extrapolate,
                )
                acc["x"].add(ax, sx)
                acc["p"].add(ap, sp)
                acc["wx"].add(wx, sx)
                acc["wp"].add(wp, sp)
                gap = max(gap, g)
                done += m
                chunk += 1
            if not adaptive or target >= max_reps:
                break
            if all(acc[k].weak()[1] <= weak_target_rel_se * acc[k].weak()[0] for k in ("wx", "wp")):
                break
            target = min(2 * target, max_reps)
        return acc, gap, done

    if threads > 1 and n > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one_point, range(n)))
    else:
        outcomes = [one_point(i) for i in range(n)]

    for i, (acc, gap, done) in enumerate(outcomes):
        res["sx"][i], res["sxe"][i] = acc["x"].strong()
        res["sp"][i], res["spe"][i] = acc["p"].strong()
        res["wx"][i], res["wxe"][i] = acc["wx"].weak()
        res["wp"][i], res["wpe"][i] = acc["wp"].weak()
        res["gap"][i] = gap
        reps[i] = done

    report = LocalErrorReport(
        scheme=scheme.value,
        h_grid=h_grid,
        strong_x=res["sx"],
        strong_x_se=res["sxe"],
        strong_p=res["sp"],
        strong_p_se=res["spe"],
        weak_x=res["wx"],
        weak_x_se=res["wxe"],
        weak_p=res["wp"],
        weak_p_se=res["wpe"],
        n_reps=reps,
        ref_substeps=int(ref_substeps),
        ref_gap=res["gap"],
        settings={
            "gamma": float(gamma),
            "seed": int(seed),
            "antithetic": bool(antithetic),
            "control_variate": bool(control_variate),
            "midpoints_per_path": int(midpoints_per_path),
            "predictor": predictor,
            "adaptive": bool(adaptive),
            "extrapolate": bool(extrapolate),
        },
    )
    if fit:
        for name in ("strong_x", "strong_p", "weak_x", "weak_p"):
            try:
                report.fitted_slopes[name] = fit_loglog_slope(report.points(name))
            except ContractViolation:
                pass
    return report


# ---------------------------------------------------------------------------
# Concentration of the gradient and momentum norms


@dataclass
class ConcentrationReport:
    kind: str
    lam: float
    mc_log_mgf: float
    ci_low: float
    ci_high: float
    bootstrap_se: float
    bound: float
    exact_log_mgf: float
    exact_z: float
    n_samples: int

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)

    @property
    def passed(self):
        return self.ci_high <= self.bound + 3.0 * self.half_width

    @property
    def exact_agrees(self):
        return abs(self.exact_z) <= 5.0

    def as_dict(self):
        out = dict(self.__dict__)
        out["passed"] = self.passed
        out["exact_agrees"] = self.exact_agrees
        return out


def _log_mean_exp(v):
    c = np.max(v) if v.size else 0.0
    return float(c + np.log(np.mean(np.exp(v - c))))


def bootstrap_log_mean_exp(v, rng, n_boot=N_BOOT, n_blocks=1000, level=0.95):
    """Percentile bootstrap for ``log mean exp(v)``.

    Samples are grouped into ``n_blocks`` equal blocks of i.i.d. draws and
    the blocks are resampled, so the cost does not grow with the sample size.
    Returns ``(estimate, low, high, se)``.
    """
    v = np.asarray(v, dtype=float)
    est = _log_mean_exp(v)
    n_blocks = min(n_blocks, v.size)
    usable = (v.size // n_blocks) * n_blocks
    c = np.max(v) if v.size else 0.0
    block = np.exp(v[:usable] - c).reshape(n_blocks, -1).mean(1)
    idx = rng.integers(0, n_blocks, size=(n_boot, n_blocks))
    boot = c + np.log(block[idx].mean(1))
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    return est, float(lo), float(hi), float(np.std(boot, ddof=1))


def _exact_log_mgf(eigs, lam):
    eigs = np.asarray(eigs, dtype=float)
    return float(-0.5 * np.sum(np.log1p(-2.0 * lam * eigs)))


def _concentration(kind, z, lam, bound, exact, rng):
    est, lo, hi, se = bootstrap_log_mean_exp(lam * z, rng)
    if se > 0:
        zscore = (est - exact) / se
    else:
        zscore = 0.0 if abs(est - exact) <= 1e-12 * max(1.0, abs(exact)) else np.inf
    return ConcentrationReport(kind, float(lam), est, lo, hi, se, float(bound), exact, float(zscore), int(z.size))


def check_gradient_concentration(model, lam, n_samples, rng):
    """Monte Carlo check of ``log E exp(lam |grad V|^2) <= 2 lam tr(H)`` under ``x ~ pi``."""
    if not getattr(model, "is_quadratic", False):
        raise UnsupportedModelError("gradient concentration needs an exact sampler from pi")
    if not 0 < lam <= 1.0 / (4.0 * model.beta) * (1 + 1e-12):
        raise ContractViolation("lambda must lie in (0, 1/(4 beta)]")
    eigs = model.precision.eigenvalues()
    if 2.0 * lam * eigs[-1] >= 1.0:
        raise ContractViolation("moment generating function diverges at this lambda")
    x = model.sample_gibbs(rng, n_samples)
    g = model.gradient(x)
    z = np.sum(g * g, -1)
    # grad V = S (x - m) ~ N(0, S): a weighted chi-square with weights eig(S)
    exact = _exact_log_mgf(eigs, lam)
    return _concentration("gradient", z, lam, 2.0 * lam * model.hessian_bound.trace(), exact, rng)


def check_momentum_concentration(model, lam, n_samples, rng):
    """Monte Carlo check of ``log E exp(lam p^T H p) <= 2 lam tr(H)`` for ``p ~ N(0, I)``."""
    H = model.hessian_bound
    if not 0 < lam <= 1.0 / (4.0 * model.beta) * (1 + 1e-12):
        raise ContractViolation("lambda must lie in (0, 1/(4 beta)]")
    eigs = H.eigenvalues()
    if eigs.size and 2.0 * lam * eigs[-1] >= 1.0:
        raise ContractViolation("moment generating function diverges at this lambda")
    p = rng.standard_normal((n_samples, model.dim))
    z = np.sum(p * H.matvec(p), -1)
    exact = _exact_log_mgf(eigs, lam)
    return _concentration("momentum", z, lam, 2.0 * lam * H.trace(), exact, rng)


# ---------------------------------------------------------------------------
# Dimension sweep


H_RULES = ("ulmc-sc", "rmd-sc", "fixed")


@dataclass
class SweepRow:
    d: int
    h: float
    N: Optional[int]
    kl: float
    trace: float
    alpha: float
    beta: float
    eps_in_range: bool
    status: str


def _grouped_kl(maps, counts, n):
    """KL after ``n`` steps from the point mass at ``(minimizer, 0)``."""
    P = maps.power(n)
    cov = P.Q
    eigs = maps.eigs
    s = np.stack([np.sqrt(eigs), np.ones_like(eigs)], -1)
    M = cov * s[:, :, None] * s[:, None, :]
    tr = M[:, 0, 0] + M[:, 1, 1]
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2
    if np.any(det <= 0):
        return float("inf")
    disc = np.sqrt(np.maximum((tr / 2) ** 2 - det, 0.0))
    big = tr / 2 + disc
    small = det / big
    t = np.stack([small, big], -1) - 1.0
    per = 0.5 * np.sum(t - np.log1p(t), -1)
    return float(np.sum(counts * per))


def smallest_steps(eigs, gamma, h, target_kl, max_steps=2**40):
    """Smallest ``N`` with ``KL(law_N || pi) <= target`` by doubling then bisection.

    Returns ``(N, kl)``; ``N`` is None when the target is not reached by
    ``max_steps`` (for instance when the stationary bias exceeds it).
    """
    vals, counts = np.unique(np.asarray(eigs, dtype=float), return_counts=True)
    if vals[0] <= 0:
        raise ContractViolation("sweep needs a positive definite precision")
    maps = coordinate_maps(vals, gamma, h)
    if maps.spectral_radius() >= 1.0:
        return None, float("inf")
    n = 1
    kl = _grouped_kl(maps, counts, n)
    while kl > target_kl:
        n *= 2
        if n > max_steps:
            return None, kl
        kl = _grouped_kl(maps, counts, n)
    lo, hi, kl_hi = n // 2, n, kl
    while hi - lo > 1:
        mid = (lo + hi) // 2
        km = _grouped_kl(maps, counts, mid)
        if km <= target_kl:
            hi, kl_hi = mid, km
        else:
            lo = mid
    return hi, kl_hi


def rule_step_size(rule, model, eps, prefactor=1.0, h_fixed=None):
    trace = model.hessian_bound.trace()
    if rule == "ulmc-sc":
        kappa = model.beta / model.alpha
        return prefactor * eps / (kappa * np.sqrt(trace))
    if rule == "rmd-sc":
        return prefactor * model.beta ** (-1 / 6) * trace ** (-1 / 3) * eps ** (2 / 3)
    if rule == "fixed":
        if h_fixed is None:
            raise ContractViolation("fixed rule needs h_fixed")
        return float(h_fixed)
    raise ContractViolation(f"unknown h rule {rule!r}; expected one of {H_RULES}")


def _eps_in_range(rule, model, eps):
    trace = model.hessian_bound.trace()
    kappa = model.beta / model.alpha
    if rule == "ulmc-sc":
        return eps <= np.sqrt(trace) * model.beta ** -0.5 * kappa ** -0.5
    if rule == "rmd-sc":
        return eps <= np.sqrt(trace) * model.beta ** -1.5 * kappa ** -0.75
    return True


def dimension_free_sweep(
    family, target_kl, gamma=None, h_rule="ulmc-sc", prefactor=1.0, h_fixed=None, check_family=True
):
    """Oracle-computed step counts across a family of quadratic targets.

    The chain starts from the point mass at ``(minimizer, 0)`` and runs ULMC
    with the rule's step size; the returned table has one row per model.
    The "rmd-sc" rule uses that step size with the ULMC oracle, since
    randomized-midpoint laws are not Gaussian.
    """
    if h_rule not in H_RULES:
        raise ContractViolation(f"unknown h rule {h_rule!r}")
    family = list(family)
    if not family:
        raise ContractViolation("empty family")
    for m in family:
        if not getattr(m, "is_quadratic", False):
            raise UnsupportedModelError("sweep needs quadratic targets")
        if h_rule != "fixed" and not m.alpha > 0:
            raise ContractViolation("strongly convex rule needs alpha > 0")
    if check_family:
        ref = family[0]
        for m in family[1:]:
            same = (
                np.isclose(m.hessian_bound.trace(), ref.hessian_bound.trace(), rtol=1e-9)
                and np.isclose(m.alpha, ref.alpha, rtol=1e-9)
                and np.isclose(m.beta, ref.beta, rtol=1e-9)
            )
            if not same:
                raise ContractViolation("family members must share tr(H), alpha and beta")
    eps = float(np.sqrt(target_kl))
    rows = []
    for m in family:
        g = float(np.sqrt(32.0 * m.beta)) if gamma is None else float(gamma)
        h = rule_step_size(h_rule, m, eps, prefactor, h_fixed)
        eigs = m.precision.eigenvalues()
        N, kl = smallest_steps(eigs, g, h, target_kl)
        if N is None:
            status = "unstable" if not np.isfinite(kl) else "unreached"
        else:
            status = "ok"
        rows.append(
            SweepRow(m.dim, float(h), N, float(kl), float(m.hessian_bound.trace()), float(m.alpha),
                     float(m.beta), bool(_eps_in_range(h_rule, m, eps)), status)
        )
    return rows


def fixed_trace_spectrum(d, trace, alpha, beta):
    """Eigenvalues in ``[alpha, beta]`` with the given sum, containing both extremes.

    Every entry starts at ``alpha``; the remaining mass is poured into
    entries one at a time up to ``beta``.
    """
    extra = trace - d * alpha
    if extra < beta - alpha or trace > d * beta:
        raise ContractViolation(f"trace {trace} not attainable in dimension {d} with [{alpha}, {beta}]")
    s = np.full(d, float(alpha))
    k = int(np.floor(extra / (beta - alpha)))
    s[:k] = beta
    if k < d:
        s[k] += extra - k * (beta - alpha)
    return s
