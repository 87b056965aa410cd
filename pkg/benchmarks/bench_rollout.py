"""Rollout throughput: numba kernels against the pure-numpy path.

Run with ``python3 benchmarks/bench_rollout.py [--steps N] [--batch B]``.
"""
import argparse
import time

import numpy as np

from liesrnn.evalcli.systems import toy_two_body, trappist_like
from liesrnn.integrators import StepContext, rollout_arrays
from liesrnn.potentials import truth_potential
from liesrnn.rigidbody import Phase


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'system':<14}{'scheme':<10}{'numba s':>10}{'numpy s':>10}{'speedup':>10}{'max |diff|':>13}")
    for name, (params, state), h in (("toy_two_body", toy_two_body(), 0.025), ("trappist_like", trappist_like(), 1e-4)):
        x = Phase(*(np.broadcast_to(a, (args.batch,) + a.shape).copy() for a in state.phase()))
        ctx = StepContext(params, truth_potential(params), h=h)
        for scheme in ("rk4", "lie_t2"):
            rollout_arrays(x, ctx, 2, scheme, backend="numba")  # compile / load cache
            tn = _time(lambda: rollout_arrays(x, ctx, args.steps, scheme, backend="numba"), args.repeat)
            tp = _time(lambda: rollout_arrays(x, ctx, args.steps, scheme, backend="numpy"), args.repeat)
            a, _ = rollout_arrays(x, ctx, args.steps, scheme, stride=args.steps, backend="numba")
            b, _ = rollout_arrays(x, ctx, args.steps, scheme, stride=args.steps, backend="numpy")
            diff = max(float(np.max(np.abs(u - v))) for u, v in zip(a, b))
            print(f"{name:<14}{scheme:<10}{tn:>10.3f}{tp:>10.3f}{tp / tn:>10.1f}{diff:>13.2e}")


if __name__ == "__main__":
    main()
