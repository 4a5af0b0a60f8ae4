"""Step size and step count schedules from the complexity theorems.

Hidden constants and logarithmic factors are not known, so every schedule is
``prefactor * formula``; prefactors default to 1 and the optional log factor
is a plain user-supplied multiplier on ``N`` (default 1, i.e. off).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import ContractViolation

THEOREMS = ("ulmc-sc", "ulmc-gc", "rmd-sc", "rmd-gc")


@dataclass(frozen=True)
class Schedule:
    theorem: str
    epsilon: float
    h: float
    n_exact: float
    eps_max: float
    quantities: dict = field(default_factory=dict)

    @property
    def N(self):
        return max(1, math.ceil(self.n_exact - 1e-9))

    @property
    def eps_in_range(self):
        return 0 < self.epsilon <= self.eps_max * (1 + 1e-12)


def schedule_from_theorem(
    theorem,
    model,
    epsilon,
    h_prefactor=1.0,
    n_prefactor=1.0,
    log_factor=1.0,
    w2_bound=None,
):
    """``(h, N)`` for one of ``ulmc-sc``, ``ulmc-gc``, ``rmd-sc``, ``rmd-gc``.

    ``model`` supplies ``alpha``, ``beta`` and ``tr(H)``; the general-convex
    schedules also need ``w2_bound``, a declared bound on the initial
    Wasserstein-2 distance to the target.  An ``epsilon`` outside the
    theorem's stated range triggers a warning, not an error.
    """
    if theorem not in THEOREMS:
        raise ContractViolation(f"unknown theorem {theorem!r}; expected one of {THEOREMS}")
    if not epsilon > 0:
        raise ContractViolation("epsilon must be positive")
    beta = float(model.beta)
    alpha = float(model.alpha)
    tr = float(model.hessian_bound.trace())
    eps = float(epsilon)
    q = {"alpha": alpha, "beta": beta, "trace_H": tr}

    if theorem.endswith("-sc"):
        if not alpha > 0:
            raise ContractViolation(f"{theorem} needs a strongly convex model (alpha > 0)")
        kappa = beta / alpha
        q["kappa"] = kappa
        if theorem == "ulmc-sc":
            h = eps / (kappa * math.sqrt(tr))
            n = kappa**1.5 * beta**-0.5 * math.sqrt(tr) / eps
            eps_max = math.sqrt(tr) * beta**-0.5 * kappa**-0.5
        else:
            h = beta ** (-1 / 6) * tr ** (-1 / 3) * eps ** (2 / 3)
            n = kappa * (tr / beta) ** (1 / 3) * eps ** (-2 / 3)
            eps_max = math.sqrt(tr) * beta**-1.5 * kappa**-0.75
    else:
        if w2_bound is None or not w2_bound > 0:
            raise ContractViolation(f"{theorem} needs a positive initial W2 bound")
        W = float(w2_bound)
        q["W"] = W
        if theorem == "ulmc-gc":
            h = min(eps**2 / (beta**0.5 * math.sqrt(tr) * W), eps**2 / (beta**1.5 * W**2))
            n = max(beta * math.sqrt(tr) * W / eps**4, beta**2 * W**4 / eps**4)
            eps_max = beta**0.5 * W
        else:
            h = eps / (beta**0.5 * tr**0.25 * W**0.5)
            n = beta * tr**0.25 * W**2.5 / eps**3
            eps_max = min(math.sqrt(beta) * W, tr**0.75 / beta / math.sqrt(W))

    sched = Schedule(theorem, eps, h_prefactor * h, n_prefactor * log_factor * n, eps_max, q)
    if not sched.eps_in_range:
        warnings.warn(
            f"epsilon={eps} is outside the range (0, {eps_max:.4g}] required by {theorem}", stacklevel=2
        )
    return sched
