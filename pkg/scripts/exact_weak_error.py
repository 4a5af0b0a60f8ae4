"""Exact one-step mean (weak) error of ULMC and RMD on a quadratic target.

No Monte Carlo: for V(x) = x^T S x / 2 the schemes are affine in the noise,
so their one-step means follow from the drift coefficients and, for RMD, the
expectation over the midpoint law.  The exact mean is expm of the drift
matrix.  Used to pick the step grids and to compare the two RMD predictor
forms.
"""

import argparse
import sys

import numpy as np
from scipy import integrate
from scipy.linalg import expm

from uld_kit.diagnostics import fit_loglog_slope
from uld_kit.midpoint import MidpointLaw
from uld_kit.samplers import StepCoefficients


def exact_mean(S, gamma, h, x, p):
    d = len(x)
    M = np.block([[np.zeros((d, d)), np.eye(d)], [-S, -gamma * np.eye(d)]])
    z = expm(M * h) @ np.concatenate([x, p])
    return z[:d], z[d:]


def rmd_mean(S, gamma, h, x, p, predictor):
    c = StepCoefficients(gamma, h)
    law = MidpointLaw(gamma, h)

    def coef(s):
        _, c1t, c2t = c.partial(s * h)
        return np.array([c1t if predictor == "partial" else c.c1, c2t])

    def expect(dens):
        return integrate.quad_vec(lambda s: dens(s) * coef(s), 0.0, 1.0, epsabs=0, epsrel=1e-13)[0]

    cu, cv = expect(law.density_u), expect(law.density_v)
    xu = x + cu[0] * p - cu[1] * (S @ x)
    xv = x + cv[0] * p - cv[1] * (S @ x)
    return x + c.c1 * p - c.c2 * (S @ xu), c.e_gh * p - c.c1 * (S @ xv)


def ulmc_mean(S, gamma, h, x, p):
    c = StepCoefficients(gamma, h)
    g = S @ x
    return x + c.c1 * p - c.c2 * g, c.e_gh * p - c.c1 * g


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hmin", type=float, default=0.025)
    ap.add_argument("--hmax", type=float, default=0.1)
    ap.add_argument("--points", type=int, default=5)
    ap.add_argument("--dim", type=int, default=8)
    ap.add_argument("--start-p", type=float, default=1.0)
    args = ap.parse_args()

    S = np.diag(np.linspace(0.25, 1.0, args.dim))
    gamma = float(np.sqrt(32.0))
    x, p = np.zeros(args.dim), np.full(args.dim, args.start_p)
    hs = np.geomspace(args.hmin, args.hmax, args.points)
    table = {"ULMC": [], "RMD partial": [], "RMD full": []}
    for h in hs:
        ex, _ = exact_mean(S, gamma, h, x, p)
        table["ULMC"].append(np.linalg.norm(ulmc_mean(S, gamma, h, x, p)[0] - ex))
        table["RMD partial"].append(np.linalg.norm(rmd_mean(S, gamma, h, x, p, "partial")[0] - ex))
        table["RMD full"].append(np.linalg.norm(rmd_mean(S, gamma, h, x, p, "full")[0] - ex))
    print("h           " + "  ".join(f"{k:>12s}" for k in table))
    for i, h in enumerate(hs):
        print(f"{h:<10.5g}  " + "  ".join(f"{table[k][i]:12.4e}" for k in table))
    for k, v in table.items():
        slope, _ = fit_loglog_slope([(h, e, 0.0) for h, e in zip(hs, v)])
        print(f"{k:12s} weak slope {slope:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
