"""Compare the numba and numpy kernels on random graphs and on the fixture corpus.

    python3 benchmarks/bench_kernels.py [--sizes 64 256 1024] [--repeat 5]

Both backends must agree bit for bit; timings exclude the first (compiling) numba call.
"""

import argparse
from pathlib import Path
import time

import numpy as np

from evmfix import kernels
from evmfix.analysis import analyze_bundle
from evmfix.cfg import post_dominators
from evmfix.program import load_bundle

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def random_graph(n, degree, rng):
    """Chain-backbone DAG plus random back edges, so every node reaches the sink."""
    succ = {}
    for v in range(n - 1):
        extra = rng.integers(0, n, size=degree - 1)
        succ[v] = sorted({v + 1, *map(int, extra)} - {v})
    succ[n - 1] = []
    return kernels.to_csr(n, succ)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_random(sizes, repeat, seed=0):
    rng = np.random.default_rng(seed)
    print(f"{'n':>6} {'kernel':>9} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for n in sizes:
        indptr, indices = random_graph(n, 3, rng)
        order = kernels.postorder(n, indptr, indices)
        for name, fn in (("postdom", kernels.postdom_bits), ("closure", kernels.closure_bits)):
            fn(indptr, indices, order, use_numba=True)  # warm the jit cache
            t_np, r_np = best_of(lambda: fn(indptr, indices, order, use_numba=False), repeat)
            t_nb, r_nb = best_of(lambda: fn(indptr, indices, order, use_numba=True), repeat)
            assert np.array_equal(r_np, r_nb), f"{name} backends disagree at n={n}"
            print(f"{n:>6} {name:>9} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")


def bench_corpus(repeat):
    print("\nfixture post-dominators (trace CFG)")
    for path in sorted(FIXTURES.glob("*.json")):
        if path.stem == "explode":
            continue
        res = analyze_bundle(load_bundle(path), timeout=30)
        if res.cfg is None:
            continue
        t_np, a = best_of(lambda: post_dominators(res.cfg, use_numba=False), repeat)
        t_nb, b = best_of(lambda: post_dominators(res.cfg, use_numba=True), repeat)
        assert a == b
        print(f"  {path.stem:<28} {len(res.cfg.nodes):>5} nodes  numpy {t_np * 1e3:7.2f} ms"
              f"  numba {t_nb * 1e3:7.2f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 256, 1024, 2048])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-corpus", action="store_true")
    args = ap.parse_args(argv)
    if kernels.njit is None:
        raise SystemExit("numba is not installed; nothing to compare")
    bench_random(args.sizes, args.repeat)
    if not args.skip_corpus:
        bench_corpus(args.repeat)


if __name__ == "__main__":
    main()
