"""Time the numba and numpy simulation backends on the same scenarios.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from scalefree_sync import _kernels
from scalefree_sync import fixtures as fx
from scalefree_sync import graphs as g
from scalefree_sync import protocols as pr
from scalefree_sync.netsim import Scenario, simulate


def cases():
    ct = pr.synth_ct_partial(fx.ct_agent(), fx.ct_precompensator())
    dt = pr.synth_dt_partial(fx.dt_agent())
    return [
        ("ct_partial cycle(60) 10k RK4 steps", Scenario(ct, g.cycle(60), horizon=10.0, dt=1e-3, seed=0)),
        ("ct_partial tree(200) 2k RK4 steps", Scenario(ct, g.random_tree(200, seed=0), horizon=2.0, dt=1e-3, seed=0)),
        ("dt_partial cycle(60) 100k steps", Scenario(dt, g.cycle(60), horizon=100_000, record_every=100, seed=0)),
    ]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.numba_available() else [])
    if "numba" in backends:
        simulate(cases()[0][1], backend="numba")  # JIT warm-up, excluded from timings
    print(f"{'scenario':40s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}  max |diff|")
    for name, scen in cases():
        res = {b: best_of(lambda b=b: simulate(scen, backend=b), args.repeat) for b in backends}
        row = f"{name:40s}" + "".join(f"{res[b][0]:11.3f}s" for b in backends)
        if len(backends) == 2:
            diff = np.abs(res["numba"][1].states - res["numpy"][1].states).max()
            row += f"{res['numpy'][0] / res['numba'][0]:9.1f}x  {diff:.1e}"
        print(row)


if __name__ == "__main__":
    main()
