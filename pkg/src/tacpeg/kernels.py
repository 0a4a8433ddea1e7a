"""Numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it imports
cleanly, unless the environment variable ``TACPEG_DISABLE_NUMBA`` is set to
``1``/``true``/``yes``/``on``, in which case the numpy implementations run.
``BACKEND`` reports which path is active.

Both implementations of each kernel follow the same arithmetic expression
step for step. ``max_violation`` and ``bilinear_resize`` are bit-identical
across backends; ``gauss_ellipse`` and ``block_mean`` may differ in the last
ulp (vectorized exp, pairwise summation) and are treated as equal to 1e-12.
"""

import os

import numpy as np

_flag = os.environ.get("TACPEG_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

numba = None
if not NUMBA_DISABLED:
    try:
        import numba
    except ImportError:
        numba = None

BACKEND = "numba" if numba is not None else "numpy"


def _max_violation_numpy(px, py, nx, ny, rhs):
    """For each point, the largest value of nx*px + ny*py - rhs over edges.

    A point satisfies every half-plane constraint n . p <= rhs iff its
    returned value is <= 0 (up to whatever tolerance the caller applies).
    """
    terms = px[:, None] * nx[None, :] + py[:, None] * ny[None, :] - rhs[None, :]
    return terms.max(axis=1)


def _gauss_ellipse_numpy(h, w, cx, cy, rot_deg, rx, ry, amp):
    """Anisotropic Gaussian bump with center (cx, cy), axes (rx, ry), rotated."""
    th = rot_deg * (np.pi / 180.0)
    ct = np.cos(th)
    st = np.sin(th)
    ys = np.arange(h, dtype=np.float64)[:, None] - cy
    xs = np.arange(w, dtype=np.float64)[None, :] - cx
    u = xs * ct + ys * st
    v = -xs * st + ys * ct
    return amp * np.exp(-0.5 * ((u / rx) ** 2 + (v / ry) ** 2))


def _bilinear_resize_numpy(src, iy0, iy1, fy, ix0, ix1, fx):
    a = src[np.ix_(iy0, ix0)]
    b = src[np.ix_(iy0, ix1)]
    c = src[np.ix_(iy1, ix0)]
    d = src[np.ix_(iy1, ix1)]
    top = a + (b - a) * fx[None, :]
    bot = c + (d - c) * fx[None, :]
    return top + (bot - top) * fy[:, None]


def _block_mean_numpy(img, row_bounds, col_bounds):
    gh = row_bounds.shape[0] - 1
    gw = col_bounds.shape[0] - 1
    out = np.empty((gh, gw), dtype=np.float64)
    for r in range(gh):
        r0, r1 = row_bounds[r], row_bounds[r + 1]
        for c in range(gw):
            c0, c1 = col_bounds[c], col_bounds[c + 1]
            block = img[r0:r1, c0:c1]
            out[r, c] = block.sum() / block.size
    return out


if numba is not None:

    @numba.njit(cache=True)
    def _max_violation_numba(px, py, nx, ny, rhs):
        n = px.shape[0]
        m = nx.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            best = -np.inf
            for e in range(m):
                v = px[i] * nx[e] + py[i] * ny[e] - rhs[e]
                if v > best:
                    best = v
            out[i] = best
        return out

    @numba.njit(cache=True)
    def _gauss_ellipse_numba(h, w, cx, cy, rot_deg, rx, ry, amp):
        th = rot_deg * (np.pi / 180.0)
        ct = np.cos(th)
        st = np.sin(th)
        out = np.empty((h, w), dtype=np.float64)
        for i in range(h):
            dy = i - cy
            for j in range(w):
                dx = j - cx
                u = dx * ct + dy * st
                v = -dx * st + dy * ct
                out[i, j] = amp * np.exp(-0.5 * ((u / rx) ** 2 + (v / ry) ** 2))
        return out

    @numba.njit(cache=True)
    def _bilinear_resize_numba(src, iy0, iy1, fy, ix0, ix1, fx):
        oh = iy0.shape[0]
        ow = ix0.shape[0]
        out = np.empty((oh, ow), dtype=np.float64)
        for i in range(oh):
            y0 = iy0[i]
            y1 = iy1[i]
            g = fy[i]
            for j in range(ow):
                a = src[y0, ix0[j]]
                b = src[y0, ix1[j]]
                c = src[y1, ix0[j]]
                d = src[y1, ix1[j]]
                top = a + (b - a) * fx[j]
                bot = c + (d - c) * fx[j]
                out[i, j] = top + (bot - top) * g
        return out

    @numba.njit(cache=True)
    def _block_mean_numba(img, row_bounds, col_bounds):
        gh = row_bounds.shape[0] - 1
        gw = col_bounds.shape[0] - 1
        out = np.empty((gh, gw), dtype=np.float64)
        for r in range(gh):
            for c in range(gw):
                acc = 0.0
                cnt = 0
                for i in range(row_bounds[r], row_bounds[r + 1]):
                    row_acc = 0.0
                    for j in range(col_bounds[c], col_bounds[c + 1]):
                        row_acc += img[i, j]
                        cnt += 1
                    acc += row_acc
                out[r, c] = acc / cnt
        return out

    _max_violation = _max_violation_numba
    _gauss_ellipse = _gauss_ellipse_numba
    _bilinear_resize = _bilinear_resize_numba
    _block_mean = _block_mean_numba
else:
    _max_violation = _max_violation_numpy
    _gauss_ellipse = _gauss_ellipse_numpy
    _bilinear_resize = _bilinear_resize_numpy
    _block_mean = _block_mean_numpy


def max_violation(px, py, nx, ny, rhs):
    px = np.ascontiguousarray(px, dtype=np.float64)
    py = np.ascontiguousarray(py, dtype=np.float64)
    nx = np.ascontiguousarray(nx, dtype=np.float64)
    ny = np.ascontiguousarray(ny, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    return _max_violation(px, py, nx, ny, rhs)


def gauss_ellipse(h, w, cx, cy, rot_deg, rx, ry, amp):
    return _gauss_ellipse(int(h), int(w), float(cx), float(cy),
                          float(rot_deg), float(rx), float(ry), float(amp))


def _resize_grid(src_len, out_len):
    # Half-pixel-center mapping; shared by both backends so their inputs match.
    scale = src_len / out_len
    pos = (np.arange(out_len, dtype=np.float64) + 0.5) * scale - 0.5
    pos = np.clip(pos, 0.0, src_len - 1.0)
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = np.minimum(i0 + 1, src_len - 1)
    return i0, i1, frac


def bilinear_resize(src, out_h, out_w):
    src = np.ascontiguousarray(src, dtype=np.float64)
    iy0, iy1, fy = _resize_grid(src.shape[0], int(out_h))
    ix0, ix1, fx = _resize_grid(src.shape[1], int(out_w))
    return _bilinear_resize(src, iy0, iy1, fy, ix0, ix1, fx)


def _partition_bounds(total, parts):
    # Largest-remainder partition: bounds at round(i * total / parts).
    idx = np.arange(parts + 1, dtype=np.int64)
    return (idx * total) // parts


def block_mean(img, grid_h, grid_w):
    img = np.ascontiguousarray(img, dtype=np.float64)
    rb = _partition_bounds(img.shape[0], int(grid_h))
    cb = _partition_bounds(img.shape[1], int(grid_w))
    return _block_mean(img, rb, cb)
