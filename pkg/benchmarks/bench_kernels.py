"""Compare the compiled environment kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints microseconds per call for each kernel and the speedup.
"""
import argparse
import timeit

import numpy as np

from manet import _kernels_py
from manet.envs.combat import CombatEnv
from manet.envs.nav import nav_reset

try:
    from manet import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def cases():
    nav = nav_reset(np.random.default_rng(0))
    env = CombatEnv(np.random.default_rng(0))
    env.reset()
    for _ in range(10):  # move the teams a little so views are not trivial
        env.step(np.random.default_rng(1).integers(4, size=5))
    s = env.state
    return {
        "render_nav": lambda m: m.render_nav(nav.agent[0], nav.agent[1], nav.waypoints, 2),
        "encode_views": lambda m: m.encode_views(s.rows, s.cols, s.team, s.index, s.health,
                                                 s.cooldown, np.arange(5), 15, True),
        "spot_targets": lambda m: m.spot_targets(s.rows, s.cols, s.team, s.health, 1),
    }


def per_call_us(fn, module, repeat):
    timer = timeit.Timer(lambda: fn(module))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number * 1e6


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<14}{'python us':>12}{'compiled us':>14}{'speedup':>10}")
    for name, fn in cases().items():
        py = per_call_us(fn, _kernels_py, args.repeat)
        if _compiled is None:
            print(f"{name:<14}{py:>12.2f}{'-':>14}{'-':>10}")
            continue
        cy = per_call_us(fn, _compiled, args.repeat)
        print(f"{name:<14}{py:>12.2f}{cy:>14.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
