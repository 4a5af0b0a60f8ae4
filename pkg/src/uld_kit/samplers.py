"""One-step and multi-step samplers for underdamped Langevin dynamics.

Schemes
-------
ULMC
    Exponential Euler: the OU part is integrated exactly and the gradient is
    frozen at the start of the step.
RMD
    Randomized midpoint: the two gradient integrals are replaced by single
    evaluations at ULMC-style predictors placed at random times ``u h`` and
    ``v h``.
OLMC
    Euler-Maruyama for the overdamped dynamics (baseline).
REFERENCE
    ``K`` ULMC substeps of length ``h / K`` driven by the same Brownian path
    that the coarse noise is composed from.  Used as the exact-flow surrogate
    when measuring local errors.

States carry arbitrary leading batch axes: ``x.shape == p.shape == (..., d)``.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, PoisonedStateError, ReferenceResolutionError
from .midpoint import MidpointLaw, MidpointPair, sample_pair
from .ou_noise import (
    StepNoiseDraw,
    compose_noise,
    draw_step_noise,
    noise_block,
    one_minus_exp,
    phi2,
)
from .rng import stream_pair

K_MAX = 2**16
DEFAULT_REF_SUBSTEPS = 1024
CHUNK_ROWS = 4096
OUTSIDE_REGIME_TAG = "outside-lemma-regime"


class Scheme(str, Enum):
    ULMC = "ULMC"
    RMD = "RMD"
    OLMC = "OLMC"
    REFERENCE = "REFERENCE"


@dataclass(frozen=True, eq=False)
class PhaseState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != p.shape:
            raise ContractViolation(f"x and p shapes differ: {x.shape} vs {p.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ContractViolation("phase state must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self):
        return self.x.shape[-1]

    @property
    def batch_shape(self):
        return self.x.shape[:-1]

    @classmethod
    def at_rest(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros_like(x))

    def broadcast(self, n):
        """Replicate an unbatched state into ``n`` rows."""
        return PhaseState(
            np.broadcast_to(self.x, (n,) + self.x.shape[-1:]).copy(),
            np.broadcast_to(self.p, (n,) + self.p.shape[-1:]).copy(),
        )


@dataclass(frozen=True)
class StepCoefficients:
    """Deterministic drift coefficients of one exponential-Euler step."""

    gamma: float
    h: float

    def __post_init__(self):
        if not (self.gamma > 0 and self.h > 0):
            raise ContractViolation("gamma and h must be positive")

    @property
    def e_gh(self):
        return float(np.exp(-self.gamma * self.h))

    @property
    def c1(self):
        return float(one_minus_exp(self.gamma * self.h)) / self.gamma

    @property
    def c2(self):
        return float(phi2(self.gamma * self.h)) / self.gamma**2

    def partial(self, t):
        """``(exp(-gamma t), c1(t), c2(t))`` for ``t`` in ``[0, h]`` (vectorized)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.h * (1 + 1e-12)):
            raise ContractViolation("partial time outside [0, h]")
        z = self.gamma * t
        return np.exp(-z), one_minus_exp(z) / self.gamma, phi2(z) / self.gamma**2


def _gradient(model, x, step):
    g = model.gradient(x)
    if not np.all(np.isfinite(g)):
        raise PoisonedStateError(step)
    return g


def _col(a):
    """Append a trailing axis so per-row scalars broadcast against ``(..., d)``."""
    return np.expand_dims(np.asarray(a, dtype=float), -1)


def ulmc_step(state: PhaseState, model, coeffs: StepCoefficients, noise: StepNoiseDraw, step=None):
    g = _gradient(model, state.x, step)
    c1, c2, e = coeffs.c1, coeffs.c2, coeffs.e_gh
    x = state.x + c1 * state.p + noise.xi1_full - c2 * g
    p = e * state.p + noise.xi2_full - c1 * g
    return _checked(x, p, step)


def _checked(x, p, step):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise PoisonedStateError(step, "non-finite state")
    return PhaseState(x, p)


def rmd_predictor(state, grad0, coeffs: StepCoefficients, t, xi1_t, predictor="partial"):
    """ULMC-form position predictor at time ``t`` inside the step.

    ``predictor="partial"`` uses the momentum coefficient ``c1(t)``;
    ``"full"`` uses the full-step ``c1(h)``.
    """
    _, c1t, c2t = coeffs.partial(t)
    if predictor == "partial":
        cp = c1t
    elif predictor == "full":
        cp = np.full_like(np.asarray(c1t, dtype=float), coeffs.c1)
    else:
        raise ContractViolation(f"unknown predictor {predictor!r}")
    return state.x + _col(cp) * state.p + xi1_t - _col(c2t) * grad0


def rmd_step(
    state: PhaseState,
    model,
    coeffs: StepCoefficients,
    midpoint: MidpointPair,
    noise: StepNoiseDraw,
    predictor="partial",
    step=None,
):
    h = coeffs.h
    uh = np.asarray(midpoint.u, dtype=float) * h
    vh = np.asarray(midpoint.v, dtype=float) * h
    g0 = _gradient(model, state.x, step)
    x_u = rmd_predictor(state, g0, coeffs, uh, noise.xi1(uh), predictor)
    x_v = rmd_predictor(state, g0, coeffs, vh, noise.xi1(vh), predictor)
    g_u = _gradient(model, x_u, step)
    g_v = _gradient(model, x_v, step)
    c1, c2, e = coeffs.c1, coeffs.c2, coeffs.e_gh
    x = state.x + c1 * state.p + noise.xi1_full - c2 * g_u
    p = e * state.p + noise.xi2_full - c1 * g_v
    return _checked(x, p, step)


def olmc_step(x, model, h, z, step=None):
    """Euler-Maruyama step ``x - h grad V(x) + sqrt(2h) z``."""
    x = np.asarray(x, dtype=float)
    g = _gradient(model, x, step)
    out = x - h * g + np.sqrt(2.0 * h) * np.asarray(z, dtype=float)
    if not np.all(np.isfinite(out)):
        raise PoisonedStateError(step, "non-finite state")
    return out


def midpoint_times(midpoint: MidpointPair, h):
    """Sorted intermediate times ``(u h, v h)`` per row, as needed by the noise drawer."""
    uh = np.asarray(midpoint.u, dtype=float) * h
    vh = np.asarray(midpoint.v, dtype=float) * h
    return np.sort(np.stack([uh, vh], -1), axis=-1)


# ---------------------------------------------------------------------------
# Fine-substep reference integrator


def _is_power_of_two(k):
    return isinstance(k, (int, np.integer)) and k >= 1 and (k & (k - 1)) == 0


@dataclass
class ReferenceOutcome:
    state: PhaseState
    noise: StepNoiseDraw
    half_state: Optional[PhaseState]


def _reference_path(state, model, gamma, h, K, rng, times, antithetic):
    """Integrate one step with ``K`` substeps on a freshly drawn path.

    Also integrates the same path with ``K/2`` substeps (for the Richardson
    check) and records the composed noise at the coarse intermediate times.
    """
    batch = state.batch_shape
    d = state.dim
    B = int(np.prod(batch)) if batch else 1
    x = state.x.reshape(B, d).copy()
    p = state.p.reshape(B, d).copy()
    if antithetic and B % 2:
        raise ContractViolation("antithetic pairing needs an even number of rows")
    half = B // 2 if antithetic else B

    if times is None:
        times = np.zeros(0)
    times = np.asarray(times, dtype=float)
    if times.size and (np.any(times < 0) or np.any(times > h)):
        raise ContractViolation("intermediate times must lie in [0, h]")
    shared = times.ndim == 1
    m = times.shape[-1]
    fine = h * np.arange(1, K + 1) / K
    fine[-1] = h
    if shared:
        allt = np.concatenate([times, fine])
        order = np.argsort(allt, kind="stable")
        ends = allt[order]
    else:
        tb = times.reshape(B, m)
        allt = np.concatenate([tb, np.broadcast_to(fine, (B, K))], -1)
        order = np.argsort(allt, axis=-1, kind="stable")
        ends = np.take_along_axis(allt, order, -1)

    fc = StepCoefficients(gamma, h / K)
    cc = StepCoefficients(gamma, 2 * h / K) if K >= 2 else None
    xc, pc = (x.copy(), p.copy()) if cc else (None, None)

    zeros = np.zeros((B, d))
    run = (zeros, zeros)
    sub = (zeros, zeros)
    co = (zeros, zeros)
    at = np.zeros((B, m, d)) if m else None
    at2 = np.zeros((B, m, d)) if m else None
    n_fine = np.zeros(B, dtype=np.int64)
    prev = 0.0 if shared else np.zeros(B)
    rows = np.arange(B)

    def substep(xx, pp, noise_pair, coeffs):
        g = model.gradient(xx)
        if not np.all(np.isfinite(g)):
            raise PoisonedStateError(None, "non-finite gradient in reference substep")
        return (
            xx + coeffs.c1 * pp + noise_pair[0] - coeffs.c2 * g,
            coeffs.e_gh * pp + noise_pair[1] - coeffs.c1 * g,
        )

    for j in range(ends.shape[-1]):
        end = ends[..., j]
        dt = np.maximum(end - prev, 0.0)
        prev = end
        blk = noise_block(gamma, dt if shared else dt)
        zz = rng.standard_normal((2, half, d))
        if antithetic:
            zz = np.concatenate([zz, -zz], axis=1)
        l11 = blk.l11 if shared else blk.l11[:, None]
        l21 = blk.l21 if shared else blk.l21[:, None]
        l22 = blk.l22 if shared else blk.l22[:, None]
        seg = (l11 * zz[0], l21 * zz[0] + l22 * zz[1])
        run = compose_noise(run, seg, gamma, dt)
        sub = compose_noise(sub, seg, gamma, dt)
        if cc is not None:
            co = compose_noise(co, seg, gamma, dt)

        idx = order[..., j]
        if shared:
            if idx >= m:
                x, p = substep(x, p, sub, fc)
                sub = (zeros, zeros)
                n_fine += 1
                if cc is not None and n_fine[0] % 2 == 0:
                    xc, pc = substep(xc, pc, co, cc)
                    co = (zeros, zeros)
            else:
                at[:, idx] = run[0]
                at2[:, idx] = run[1]
            continue

        fmask = idx >= m
        if np.any(fmask):
            xn, pn = substep(x, p, sub, fc)
            fm = fmask[:, None]
            x = np.where(fm, xn, x)
            p = np.where(fm, pn, p)
            sub = (np.where(fm, 0.0, sub[0]), np.where(fm, 0.0, sub[1]))
            n_fine += fmask
            if cc is not None:
                cmask = fmask & (n_fine % 2 == 0)
                if np.any(cmask):
                    xn, pn = substep(xc, pc, co, cc)
                    cm = cmask[:, None]
                    xc = np.where(cm, xn, xc)
                    pc = np.where(cm, pn, pc)
                    co = (np.where(cm, 0.0, co[0]), np.where(cm, 0.0, co[1]))
        tmask = ~fmask
        if np.any(tmask):
            r = rows[tmask]
            at[r, idx[tmask]] = run[0][r]
            at2[r, idx[tmask]] = run[1][r]

    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise PoisonedStateError(None, "non-finite reference endpoint")

    def shape_back(a):
        return a.reshape(batch + (d,))

    xi1_at = [shape_back(at[:, k]) for k in range(m)]
    xi2_at = [shape_back(at2[:, k]) for k in range(m)]
    out_times = times if shared else times.reshape(batch + (m,))
    gap = None
    half_state = None
    if cc is not None:
        gap = float(max(np.max(np.abs(x - xc)), np.max(np.abs(p - pc))))
        half_state = PhaseState(shape_back(xc), shape_back(pc))
    noise = StepNoiseDraw(
        gamma=float(gamma),
        h=float(h),
        times=out_times,
        xi1_full=shape_back(run[0]),
        xi2_full=shape_back(run[1]),
        xi1_at=xi1_at,
        xi2_at=xi2_at,
        segments=[],
        substeps=K,
        richardson_gap=gap,
    )
    return ReferenceOutcome(PhaseState(shape_back(x), shape_back(p)), noise, half_state)


def reference_uld_step(
    state: PhaseState,
    model,
    gamma,
    h,
    K=DEFAULT_REF_SUBSTEPS,
    rng=None,
    intermediate_times=None,
    richardson_tol=None,
    K_max=K_MAX,
    antithetic=False,
    return_half=False,
    extrapolate=False,
):
    """Fine-substep reference step plus the composed coarse noise.

    Returns ``(endpoint, noise)`` where ``noise`` is a :class:`StepNoiseDraw`
    holding the full-step pair and the restrictions at ``intermediate_times``
    (shared ``(m,)`` or per row ``batch + (m,)``), all composed from the path
    that drove the substeps.  With ``richardson_tol`` set, ``K`` doubles until
    the endpoint moves by at most the tolerance when the substep count is
    halved on the same path.  ``antithetic=True`` pairs row ``i`` with row
    ``i + B/2`` on the negated path.  ``extrapolate=True`` returns the
    Richardson combination ``2 z_K - z_{K/2}`` of the two endpoints on the
    same path, which cancels the leading first-order bias of the substeps.
    """
    if not _is_power_of_two(K):
        raise ContractViolation(f"substep count must be a power of two, got {K}")
    if extrapolate and K < 2:
        raise ContractViolation("extrapolation needs at least two substeps")
    if h <= 0 or gamma <= 0:
        raise ContractViolation("gamma and h must be positive")
    if rng is None:
        raise ContractViolation("an explicit random generator is required")
    while True:
        out = _reference_path(state, model, gamma, h, K, rng, intermediate_times, antithetic)
        gap = out.noise.richardson_gap
        if richardson_tol is None or (gap is not None and gap <= richardson_tol):
            break
        if 2 * K > K_max:
            raise ReferenceResolutionError(
                f"Richardson gap {gap:.3e} above tolerance {richardson_tol:.3e} at K={K}"
            )
        K *= 2
    if extrapolate:
        half = out.half_state
        state_out = PhaseState(2.0 * out.state.x - half.x, 2.0 * out.state.p - half.p)
        out = ReferenceOutcome(state_out, out.noise, half)
    if return_half:
        return out.state, out.noise, out.half_state
    return out.state, out.noise


# ---------------------------------------------------------------------------
# Chains


@dataclass
class ChainConfig:
    h: float
    n_steps: int
    scheme: Scheme = Scheme.ULMC
    gamma: Optional[float] = None  # None -> sqrt(32 beta)
    ref_substeps: int = DEFAULT_REF_SUBSTEPS
    seed: int = 0
    init: Optional[PhaseState] = None  # None -> (minimizer, 0)
    final_ulmc_step: bool = False
    predictor: str = "partial"
    n_chains: Optional[int] = None  # None -> one unbatched chain

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        if not self.h > 0:
            raise ContractViolation("h must be positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ContractViolation("n_steps must be a non-negative integer")
        if self.gamma is not None and not self.gamma > 0:
            raise ContractViolation("gamma must be positive")
        if self.scheme is Scheme.REFERENCE and not _is_power_of_two(self.ref_substeps):
            raise ContractViolation("ref_substeps must be a power of two")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")
        if self.predictor not in ("partial", "full"):
            raise ContractViolation(f"unknown predictor {self.predictor!r}")
        if self.n_chains is not None and self.n_chains < 1:
            raise ContractViolation("n_chains must be positive")

    @property
    def gamma_overridden(self):
        return self.gamma is not None

    def resolved_gamma(self, model):
        if self.gamma is not None:
            return float(self.gamma)
        if not model.beta > 0:
            raise ContractViolation("default friction needs beta > 0")
        return float(np.sqrt(32.0 * model.beta))


class Recorder:
    """Observer interface: sees the initial state (step 0) and every post-step state."""

    def fresh(self):
        """Empty recorder of the same kind, used per chunk of chains."""
        raise NotImplementedError

    def observe(self, step, scheme, state):
        raise NotImplementedError

    def merge(self, other):
        raise NotImplementedError

    def payload(self):
        raise NotImplementedError


class SchemeLog(Recorder):
    def __init__(self):
        self.entries = []

    def fresh(self):
        return SchemeLog()

    def observe(self, step, scheme, state):
        self.entries.append((step, scheme))

    def merge(self, other):
        if not self.entries:
            self.entries = list(other.entries)

    def payload(self):
        return [s for k, s in self.entries if k > 0]


class NormRecorder(Recorder):
    """Per-step mean position and momentum norms (averaged over chains).

    With ``verbose=True`` and a single unbatched chain the full state is kept.
    """

    def __init__(self, verbose=False):
        self.verbose = verbose
        self.rows = {}

    def fresh(self):
        return NormRecorder(self.verbose)

    def observe(self, step, scheme, state):
        xn = np.linalg.norm(state.x, axis=-1)
        pn = np.linalg.norm(state.p, axis=-1)
        row = {"scheme": scheme, "x_sum": float(np.sum(xn)), "p_sum": float(np.sum(pn)), "n": int(np.size(xn))}
        if self.verbose and state.x.ndim == 1:
            row["x"] = state.x.tolist()
            row["p"] = state.p.tolist()
        self.rows[step] = row

    def merge(self, other):
        for k, r in other.rows.items():
            if k in self.rows:
                mine = self.rows[k]
                mine["x_sum"] += r["x_sum"]
                mine["p_sum"] += r["p_sum"]
                mine["n"] += r["n"]
                mine.pop("x", None)
                mine.pop("p", None)
            else:
                self.rows[k] = dict(r)

    def payload(self):
        out = []
        for k in sorted(self.rows):
            r = self.rows[k]
            rec = {"step": k, "scheme": r["scheme"], "x_norm": r["x_sum"] / r["n"], "p_norm": r["p_sum"] / r["n"]}
            if "x" in r:
                rec["x"] = r["x"]
                rec["p"] = r["p"]
            out.append(rec)
        return out

    def write_jsonl(self, path):
        import json

        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.payload():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


class MomentRecorder(Recorder):
    """Running sums for the joint mean and covariance of ``(x, p)`` at chosen steps."""

    def __init__(self, steps):
        self.steps = tuple(int(s) for s in steps)
        self.sums = {}

    def fresh(self):
        return MomentRecorder(self.steps)

    def observe(self, step, scheme, state):
        if step not in self.steps:
            return
        z = np.concatenate([state.x, state.p], -1).reshape(-1, 2 * state.dim)
        s1 = z.sum(0)
        s2 = z.T @ z
        if step in self.sums:
            a, b, n = self.sums[step]
            self.sums[step] = (a + s1, b + s2, n + z.shape[0])
        else:
            self.sums[step] = (s1, s2, z.shape[0])

    def merge(self, other):
        for k, (a, b, n) in other.sums.items():
            if k in self.sums:
                a0, b0, n0 = self.sums[k]
                self.sums[k] = (a0 + a, b0 + b, n0 + n)
            else:
                self.sums[k] = (a, b, n)

    def payload(self):
        out = {}
        for k, (a, b, n) in self.sums.items():
            mean = a / n
            cov = (b - n * np.outer(mean, mean)) / (n - 1) if n > 1 else np.zeros_like(b)
            out[k] = {"mean": mean, "cov": cov, "n": n}
        return out


@dataclass
class ChainResult:
    final: PhaseState
    wall_time: float
    schemes: list
    payloads: list
    tags: list = field(default_factory=list)
    gamma: float = float("nan")


def _step_scheme(cfg: ChainConfig, k):
    if cfg.scheme is Scheme.RMD and cfg.final_ulmc_step and k == cfg.n_steps:
        return Scheme.ULMC
    return cfg.scheme


def _advance(state, model, cfg, gamma, coeffs, law, k, noise_rng, mid_rng):
    scheme = _step_scheme(cfg, k)
    batch = state.batch_shape
    d = state.dim
    if scheme is Scheme.ULMC:
        noise = draw_step_noise(gamma, cfg.h, None, d, noise_rng, batch)
        return scheme, ulmc_step(state, model, coeffs, noise, step=k)
    if scheme is Scheme.RMD:
        pair = sample_pair(law, mid_rng, batch if batch else None)
        noise = draw_step_noise(gamma, cfg.h, midpoint_times(pair, cfg.h), d, noise_rng, batch)
        return scheme, rmd_step(state, model, coeffs, pair, noise, cfg.predictor, step=k)
    if scheme is Scheme.OLMC:
        z = noise_rng.standard_normal(batch + (d,))
        x = olmc_step(state.x, model, cfg.h, z, step=k)
        return scheme, PhaseState(x, np.zeros_like(x))
    try:
        new, _ = reference_uld_step(state, model, gamma, cfg.h, cfg.ref_substeps, noise_rng)
    except PoisonedStateError as exc:
        raise PoisonedStateError(k, "non-finite reference substep") from exc
    return scheme, new


def _run_unit(cfg, model, gamma, init, recorders, seed_key):
    noise_rng, mid_rng = stream_pair(cfg.seed, *seed_key)
    coeffs = StepCoefficients(gamma, cfg.h)
    law = MidpointLaw(gamma, cfg.h)
    state = init
    schemes = []
    for r in recorders:
        r.observe(0, "init", state)
    for k in range(1, cfg.n_steps + 1):
        scheme, state = _advance(state, model, cfg, gamma, coeffs, law, k, noise_rng, mid_rng)
        schemes.append(scheme.value)
        for r in recorders:
            r.observe(k, scheme.value, state)
    return state, schemes


def run_chain(cfg: ChainConfig, model, recorders: Sequence[Recorder] = (), threads=1):
    """Run ``cfg.n_steps`` steps of the configured scheme.

    Batched runs (``cfg.n_chains`` set) are split into fixed chunks of
    ``CHUNK_ROWS`` chains; chunk ``c`` draws from substream ``(c,)``, so the
    output does not depend on ``threads``.  Recorders are cloned per chunk and
    merged back in chunk order.
    """
    gamma = cfg.resolved_gamma(model)
    tags = []
    if model.beta > 0 and cfg.h > 1.0 / np.sqrt(model.beta):
        warnings.warn(f"h={cfg.h} exceeds 1/sqrt(beta); {OUTSIDE_REGIME_TAG}", stacklevel=2)
        tags.append(OUTSIDE_REGIME_TAG)
    if cfg.gamma_overridden:
        tags.append("gamma-override")
    init = cfg.init
    if init is None:
        init = PhaseState.at_rest(np.asarray(model.minimizer, dtype=float))
    if init.dim != model.dim:
        raise ContractViolation("initial state dimension does not match the model")

    t0 = time.perf_counter()
    if cfg.n_chains is None:
        final, schemes = _run_unit(cfg, model, gamma, init, list(recorders), ())
        return ChainResult(final, time.perf_counter() - t0, schemes, [r.payload() for r in recorders], tags, gamma)

    if init.x.ndim == 1:
        init = init.broadcast(cfg.n_chains)
    elif init.batch_shape != (cfg.n_chains,):
        raise ContractViolation("batched init must have n_chains rows")
    bounds = list(range(0, cfg.n_chains, CHUNK_ROWS)) + [cfg.n_chains]
    jobs = []
    for c in range(len(bounds) - 1):
        lo, hi = bounds[c], bounds[c + 1]
        jobs.append((c, PhaseState(init.x[lo:hi], init.p[lo:hi]), [r.fresh() for r in recorders]))

    def work(job):
        c, st, recs = job
        return _run_unit(cfg, model, gamma, st, recs, (c,))

    if threads > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    for (_, _, recs), _ in zip(jobs, results):
        for r, rc in zip(recorders, recs):
            r.merge(rc)
    final = PhaseState(
        np.concatenate([res[0].x for res in results]), np.concatenate([res[0].p for res in results])
    )
    schemes = results[0][1]
    return ChainResult(final, time.perf_counter() - t0, schemes, [r.payload() for r in recorders], tags, gamma)
