"""Hot loops with a numba implementation and a pure-numpy fallback.

Set ``POLYTOEP_DISABLE_NUMBA=1`` to force the numpy versions (also used
automatically when numba is not importable).  Both versions produce
bit-identical results; ``tests/test_kernels.py`` checks this.
"""

import os

import numpy as np

_DISABLED = os.environ.get("POLYTOEP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

# Rows of the gathered matrix produced per numpy chunk; bounds temporaries.
_CHUNK_ENTRIES = 1 << 22


def toeplitz_gather_numpy(kernel, radius, rows, cols, out):
    """Fill ``out[i, j] = kernel[rows[i] - cols[j] + radius]``.

    ``kernel`` is a centered 2-D coefficient array of half-width ``radius``;
    ``rows`` and ``cols`` are integer point arrays of shape (n, 2).
    """
    n_cols = cols.shape[0]
    step = max(1, _CHUNK_ENTRIES // max(n_cols, 1))
    for start in range(0, rows.shape[0], step):
        r = rows[start:start + step]
        du = r[:, 0, None] - cols[None, :, 0] + radius
        dv = r[:, 1, None] - cols[None, :, 1] + radius
        out[start:start + step] = kernel[du, dv]
    return out


def lattice_points_numpy(normals, offsets, xmin, xmax, ymin, ymax):
    """Integer points of a bounding box satisfying ``normals @ p <= offsets``.

    Points come out in lexicographic order (x first, then y).
    """
    xs = np.arange(xmin, xmax + 1, dtype=np.int64)
    ys = np.arange(ymin, ymax + 1, dtype=np.int64)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    keep = np.ones(X.shape, dtype=bool)
    for (nx, ny), c in zip(normals, offsets):
        keep &= nx * X + ny * Y <= c
    return np.stack([X[keep], Y[keep]], axis=1)


if HAVE_NUMBA:

    @njit(cache=True)
    def _gather_nb(kernel, radius, rows, cols, out):
        for i in range(rows.shape[0]):
            ru = rows[i, 0] + radius
            rv = rows[i, 1] + radius
            for j in range(cols.shape[0]):
                out[i, j] = kernel[ru - cols[j, 0], rv - cols[j, 1]]
        return out

    @njit(cache=True)
    def _points_nb(normals, offsets, xmin, xmax, ymin, ymax):
        n = 0
        buf = np.empty(((xmax - xmin + 1) * (ymax - ymin + 1), 2), dtype=np.int64)
        for x in range(xmin, xmax + 1):
            for y in range(ymin, ymax + 1):
                ok = True
                for s in range(normals.shape[0]):
                    if normals[s, 0] * x + normals[s, 1] * y > offsets[s]:
                        ok = False
                        break
                if ok:
                    buf[n, 0] = x
                    buf[n, 1] = y
                    n += 1
        return buf[:n].copy()


def toeplitz_gather(kernel, radius, rows, cols, out=None):
    """Dispatching wrapper around the gather kernel."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    if out is None:
        out = np.empty((rows.shape[0], cols.shape[0]), dtype=kernel.dtype)
    if HAVE_NUMBA:
        return _gather_nb(np.ascontiguousarray(kernel), radius, rows, cols, out)
    return toeplitz_gather_numpy(kernel, radius, rows, cols, out)


def lattice_points(normals, offsets, xmin, xmax, ymin, ymax):
    """Dispatching wrapper around the lattice enumeration kernel."""
    normals = np.ascontiguousarray(normals, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if HAVE_NUMBA:
        return _points_nb(normals, offsets, int(xmin), int(xmax), int(ymin), int(ymax))
    return lattice_points_numpy(normals, offsets, xmin, xmax, ymin, ymax)
