"""Time the numba and numpy paths of the hot kernels and check they agree.

    python3 benchmarks/bench_kernels.py [--points 4096] [--resolution 256] [--repeat 5]

The first numba call of each kernel compiles (or loads the on-disk cache); it
is run once before timing and reported separately.
"""
import argparse
import time

import numpy as np

from meshstyle import _accel
from meshstyle.kernels import nearest
from meshstyle.renderer import camera_ring, rasterize
from meshstyle.synthetic import icosphere


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_nearest(n, repeat, backends):
    rng = np.random.default_rng(0)
    q = rng.normal(size=(n, 3))
    r = rng.normal(size=(n, 3))
    rows = []
    results = {}
    for metric in ("l1", "l2"):
        for backend in backends:
            t0 = time.perf_counter()
            nearest(q[:8], r[:8], metric, backend=backend)
            warm = time.perf_counter() - t0
            t, out = best_of(lambda: nearest(q, r, metric, backend=backend), repeat)
            results[(metric, backend)] = out
            rows.append((f"nearest {metric} {n}x{n}", backend, warm, t))
    return rows, results


def bench_raster(res, subdiv, repeat, backends):
    mesh = icosphere(subdiv, 1.0)
    cam = camera_ring(mesh, 1, 0.0, res)[0]
    rows = []
    results = {}
    for backend in backends:
        t0 = time.perf_counter()
        rasterize(mesh, None, cam, backend=backend)
        warm = time.perf_counter() - t0
        t, out = best_of(lambda: rasterize(mesh, None, cam, backend=backend), repeat)
        results[backend] = out
        rows.append((f"raster {len(mesh.faces)} tris @ {res}^2", backend, warm, t))
    return rows, results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--resolution", type=int, default=256)
    ap.add_argument("--subdivisions", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"threads: {_accel.configure_threads()}  backends: {', '.join(backends)}")

    rows, nn = bench_nearest(args.points, args.repeat, backends)
    r_rows, rast = bench_raster(args.resolution, args.subdivisions, args.repeat, backends)
    rows += r_rows

    print(f"{'kernel':<34}{'backend':<8}{'first call':>12}{'best':>12}")
    for name, backend, warm, t in rows:
        print(f"{name:<34}{backend:<8}{warm:>11.4f}s{t:>11.4f}s")

    if "numba" in backends:
        for metric in ("l1", "l2"):
            a, b = nn[(metric, "numpy")], nn[(metric, "numba")]
            same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            print(f"nearest {metric}: backends identical = {same}")
        a, b = rast["numpy"], rast["numba"]
        same = np.array_equal(a.face, b.face) and np.array_equal(a.bary, b.bary)
        print(f"raster: backends identical = {same}")
        for name in sorted({r[0] for r in rows}):
            t = {r[1]: r[3] for r in rows if r[0] == name}
            print(f"{name}: numba speedup x{t['numpy'] / t['numba']:.1f}")


if __name__ == "__main__":
    main()
