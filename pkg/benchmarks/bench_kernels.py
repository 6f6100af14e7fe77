"""Compare the numba kernels with their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  Both implementations are
called directly, so the ``POLYTOEP_DISABLE_NUMBA`` flag does not matter here.
"""

import argparse
import timeit

import numpy as np

from polytoep import _kernels
from polytoep.lattice_geometry import build_triangle, lattice_point_array


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lambdas", type=int, nargs="+", default=[8, 16, 24, 32])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba unavailable; only the numpy timings are shown")
    print(f"{'kernel':<10} {'lambda':>6} {'size':>8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for lam in args.lambdas:
        t = build_triangle((-1, 1), 2, lam)
        pts = lattice_point_array(t)
        R = t.extent
        kernel = rng.normal(size=(2 * R + 1, 2 * R + 1)) + 1j * rng.normal(size=(2 * R + 1, 2 * R + 1))
        out = np.empty((len(pts), len(pts)), dtype=complex)
        t_np = best_of(lambda: _kernels.toeplitz_gather_numpy(kernel, R, pts, pts, out), args.repeat)
        row = f"{'gather':<10} {lam:>6} {len(pts):>8} {1e3 * t_np:>10.2f}"
        if _kernels.HAVE_NUMBA:
            _kernels._gather_nb(kernel, R, pts, pts, out)  # compile outside the timing
            t_nb = best_of(lambda: _kernels._gather_nb(kernel, R, pts, pts, out), args.repeat)
            row += f" {1e3 * t_nb:>10.2f} {t_np / t_nb:>8.1f}"
        print(row)

        hs = t.halfspaces
        normals = np.array(hs.normals, dtype=np.int64)
        offsets = np.array(hs.offsets, dtype=np.int64)
        box = (0, 2 * lam, -lam, lam)
        t_np = best_of(lambda: _kernels.lattice_points_numpy(normals, offsets, *box), args.repeat)
        row = f"{'points':<10} {lam:>6} {len(pts):>8} {1e3 * t_np:>10.3f}"
        if _kernels.HAVE_NUMBA:
            _kernels._points_nb(normals, offsets, *box)
            t_nb = best_of(lambda: _kernels._points_nb(normals, offsets, *box), args.repeat)
            row += f" {1e3 * t_nb:>10.3f} {t_np / t_nb:>8.1f}"
        print(row)


if __name__ == "__main__":
    main()
