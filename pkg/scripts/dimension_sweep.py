"""Oracle step counts N(eps) across dimension for three quadratic families."""

import argparse
import sys

import numpy as np

from uld_kit.diagnostics import dimension_free_sweep
from uld_kit.experiments import sweep_family


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--trace", type=float, default=8.0)
    ap.add_argument("--alpha", type=float, default=1 / 64)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--eps-contrast", type=float, default=0.03)
    args = ap.parse_args()

    runs = [
        ("fixed-trace", args.eps, dict(trace=args.trace, alpha=args.alpha)),
        ("isotropic-beta", args.eps_contrast, {}),
        ("isotropic-trace", args.eps, dict(trace=args.trace)),
    ]
    for kind, eps, kw in runs:
        fam = sweep_family(kind, args.dims, **kw)
        rows = dimension_free_sweep(fam, eps**2, check_family=(kind == "fixed-trace"))
        Ns = [r.N for r in rows]
        print(f"{kind} (eps={eps}):")
        for r in rows:
            print(f"  d={r.d:4d}  h={r.h:.3e}  N={r.N}  KL={r.kl:.3e}  eps in range={r.eps_in_range}")
        if None not in Ns:
            slope = np.polyfit(np.log(args.dims), np.log(Ns), 1)[0]
            print(f"  N ratio {max(Ns) / min(Ns):.2f}, log N vs log d slope {slope:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
