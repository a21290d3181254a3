"""Compare the compiled and pure-Python field kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from mirrortrap import _kernels_py

try:
    from mirrortrap import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def workloads(rng):
    from mirrortrap.layout import load_example
    lay = load_example()
    rf = lay.electrode("rf").polygons[0]
    pts = np.column_stack([rng.uniform(-100, 100, 2000), rng.uniform(-100, 100, 2000),
                           rng.uniform(20, 150, 2000)])
    src = np.column_stack([rng.uniform(-60, 60, 800), rng.uniform(-60, 60, 800),
                           rng.uniform(-15, 0, 800)])
    q = rng.normal(size=800)
    field_pts = pts[:, [0, 2, 1]]
    corners = rng.uniform(-10, 10, (400, 3, 3))
    return {
        f"polygon order 2 ({len(rf)} vertices x 2000 points)":
            lambda k: k.polygon_eval(rf, pts, 2),
        "charges order 2 (800 sources x 2000 points)":
            lambda k: k.charge_eval(src, q, field_pts, 2),
        "triangle integrals (400 panels x 400 points)":
            lambda k: k.triangle_integral(corners, corners.mean(axis=1) + 5.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)]
    if _ckernels is not None:
        backends.append(("cython", _ckernels))
    print(f"{'kernel':52s} " + " ".join(f"{name:>10s}" for name, _ in backends) + "   speed-up")
    for label, fn in workloads(rng).items():
        times = [min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
                 for _, mod in backends]
        speed = f"{times[0] / times[-1]:9.1f}x" if len(times) > 1 else "        -"
        print(f"{label:52s} " + " ".join(f"{t * 1e3:8.1f}ms" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
