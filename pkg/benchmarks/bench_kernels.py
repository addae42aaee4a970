"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat 3]

Each workload runs on both backends with identical inputs; results are
checked for equality before timings are printed.
"""
import argparse
import time

import numpy as np

from symcomp import _pykernels as pure
from symcomp import kernels
from symcomp.models import MicrogridParams, laplacian
from symcomp.product import ProductSystem
from symcomp.ts import FiniteTransitionSystem


def _random_system(rng, n, n_ext, density):
    T = np.argwhere(rng.random((n, n_ext, 1, n)) < density)
    return FiniteTransitionSystem(n, np.arange(n), T, rng.integers(0, 4, n).astype(float).reshape(-1, 1),
                                  np.arange(n_ext, dtype=float).reshape(-1, 1))


def _chain_product(rng, N, n):
    """N components in a ring, each with n states and two exact internal symbols."""
    comps = []
    for _ in range(N):
        T = [(x, e, v, int(rng.integers(n))) for x in range(n) for e in range(2) for v in range(n)
             if rng.random() < 0.9]
        from symcomp.metrics import linf, neighbor_max
        comps.append(FiniteTransitionSystem(n, range(n), T, np.arange(n, dtype=float).reshape(-1, 1),
                                            np.arange(2.0).reshape(-1, 1), np.arange(n, dtype=float).reshape(-1, 1),
                                            int_input_space=neighbor_max([linf(1)], [0])))
    nbm = [[(i - 1) % N] for i in range(N)]
    return ProductSystem(comps, nbm, [0.0] * N)


def workloads(rng):
    S = _random_system(rng, 3000, 4, 0.002)
    safe = (rng.random(S.n_states) < 0.9).astype(np.uint8)

    def csr(k):
        a = safe.copy()
        k.csr_fixpoint(S.key_ptr, S.succ, a, S.n_states, S.n_ext, 0)
        return a

    P = _chain_product(rng, 4, 8)
    spec = P.kernel_spec()
    psafe = (rng.random(P.n_states) < 0.95).astype(np.uint8)

    def prod(k):
        a = psafe.copy()
        k.product_fixpoint(spec, a, np.zeros(P.n_states, np.uint16), 0)
        return a

    v0 = rng.uniform(440, 460, 2000)
    h = rng.uniform(6000, 7000, 2000)
    s = rng.uniform(-1000, 8000, 2000)

    def rk4(k):
        return k.rk4_scalar(v0.copy(), 14.3, h, s, 2e-6, 1e-4, 2000)

    L = laplacian()
    V = rng.uniform(440, 460, (50, 5))
    Sw = rng.uniform(-1000, 8000, (50, 5))
    C = np.array(MicrogridParams().C)

    def rk4n(k):
        return k.rk4_network(V.copy(), L, Sw.copy(), C, 1e-4, 2000)

    return {
        f"csr_fixpoint ({S.n_states} states, {S.n_transitions} transitions)": csr,
        f"product_fixpoint ({P.n_states} implicit states)": prod,
        "rk4_scalar (2000 corners x 2000 steps)": rk4,
        "rk4_network (50 x 5 units x 2000 steps)": rk4n,
    }


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with pip install -e . --no-build-isolation")
    rng = np.random.default_rng(args.seed)
    print(f"{'workload':58s} {'pure (s)':>10s} {'cython (s)':>11s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        tp, a = _time(lambda: fn(pure), args.repeat)
        tc, b = _time(lambda: fn(kernels.compiled), args.repeat)
        if not np.allclose(np.asarray(a, float), np.asarray(b, float), rtol=1e-12, atol=1e-9):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:58s} {tp:10.4f} {tc:11.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
