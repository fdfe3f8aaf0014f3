"""Time the numba kernels against their pure-numpy fallbacks on a 512x512 slide.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Both variants are called directly, so LEUKOSEG_JIT does not matter here.
Each result is also checked for equality before timing.
"""

import argparse
import json
import time

import numpy as np

from leukoseg import kernels
from leukoseg.pipeline import run_stages
from leukoseg.synth import SynthConfig, generate_slide


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()

    img, _ = generate_slide(SynthConfig(seed=42, n_cells=10, overlap_pairs=1))
    run = run_stages(img)
    semantic = np.ascontiguousarray(run.stage1["semantic"])
    padded = np.pad(semantic, 1)
    seeds = run.stage3["seeds"].astype(np.int32)
    surface = -run.stage3["distance"]
    offsets = kernels.neighbor_offsets(4)
    bg_cost = np.where(padded, kernels._INF, 0.0)

    cases = {
        "components (8-conn)": (
            lambda: kernels._label_components_jit(semantic, True),
            lambda: kernels._label_components_numpy(semantic, True),
        ),
        "distance transform": (
            lambda: kernels._edt_squared_jit(bg_cost),
            lambda: kernels._edt_squared_numpy(padded),
        ),
        "priority flood": (
            lambda: kernels._priority_flood_jit(surface, seeds.copy(), semantic, offsets),
            lambda: kernels._priority_flood_numpy(surface, seeds.copy(), semantic, offsets),
        ),
    }
    rows = []
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speed-up':>10}")
    for name, (jit_fn, np_fn) in cases.items():
        a, b = jit_fn(), np_fn()  # also warms up the compiled variant
        same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
        if not same:
            raise SystemExit(f"{name}: variants disagree")
        tj, tn = best_of(jit_fn, args.repeat), best_of(np_fn, args.repeat)
        rows.append({"kernel": name, "numba_ms": tj * 1e3, "numpy_ms": tn * 1e3, "speedup": tn / tj})
        print(f"{name:<22}{tj * 1e3:>10.2f}{tn * 1e3:>10.2f}{tn / tj:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"shape": list(semantic.shape), "repeat": args.repeat, "results": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
