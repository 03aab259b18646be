"""Time the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--episodes N] [--evals N]
"""
import argparse
import time

import numpy as np

from slblab import _backend
from slblab.ballsim import SimConfig, episode_seed, simulate_episode
from slblab.dslab import CoupledSystem

X2, Y1 = 100.0, 10.0


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_episodes(n, repeats):
    cfg = SimConfig(wind_magnitude=0.5)
    seeds = [episode_seed(0, 900, i) for i in range(n)]
    out = {}
    for label, force in (("compiled", False), ("python", True)):
        if label == "compiled" and not _backend.COMPILED:
            continue
        out[label] = _best(lambda: [simulate_episode(cfg, s, force_python=force) for s in seeds],
                           repeats)
    if len(out) == 2:
        a = simulate_episode(cfg, seeds[0]).states
        b = simulate_episode(cfg, seeds[0], force_python=True).states
        assert np.array_equal(a, b), "backends disagree"
    return out


def bench_mappings(n, repeats):
    xs = np.linspace(5.0, 99.0, n)
    out = {}
    for label, force in (("compiled", False), ("python", True)):
        if label == "compiled" and not _backend.COMPILED:
            continue
        core = CoupledSystem.identity(force_python=force).core
        out[label] = _best(lambda: [core.y2_slb(x, X2, Y1, 1.0, 1.0) for x in xs], repeats)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episodes", type=int, default=50)
    parser.add_argument("--evals", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    print(f"backend at import: {_backend.NAME}")
    for name, result in (("two-ball episodes", bench_episodes(args.episodes, args.repeats)),
                         ("SLB mapping evals", bench_mappings(args.evals, args.repeats))):
        line = ", ".join(f"{k} {v:.3f} s" for k, v in result.items())
        if len(result) == 2:
            line += f", speedup {result['python'] / result['compiled']:.1f}x"
        print(f"{name}: {line}")


if __name__ == "__main__":
    main()
