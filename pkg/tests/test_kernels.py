import numpy as np
import pytest

from tacpeg import kernels


def test_backend_flag_reports_numba_or_numpy():
    assert kernels.BACKEND in ("numba", "numpy")
    if kernels.NUMBA_DISABLED:
        assert kernels.BACKEND == "numpy"


def test_max_violation_known_halfplanes():
    # unit square: |x| <= 1, |y| <= 1
    nx = np.array([1.0, -1.0, 0.0, 0.0])
    ny = np.array([0.0, 0.0, 1.0, -1.0])
    rhs = np.ones(4)
    px = np.array([0.0, 1.0, 1.5, -2.0])
    py = np.array([0.0, 1.0, 0.0, 0.5])
    out = kernels.max_violation(px, py, nx, ny, rhs)
    assert out[0] == -1.0
    assert out[1] == 0.0
    assert out[2] == 0.5
    assert out[3] == 1.0


def test_resize_grid_identity_when_sizes_match():
    i0, i1, frac = kernels._resize_grid(224, 224)
    assert np.array_equal(i0, np.arange(224))
    assert np.all(frac == 0.0)


def test_bilinear_resize_preserves_constant_images_exactly():
    img = np.full((224, 224), 0.37)
    out = kernels.bilinear_resize(img, 205, 206)
    assert out.shape == (205, 206)
    assert np.all(out == 0.37)


def test_bilinear_resize_matches_manual_interpolation():
    rng = np.random.default_rng(7)
    src = rng.random((5, 4))
    out = kernels.bilinear_resize(src, 9, 7)
    iy0, iy1, fy = kernels._resize_grid(5, 9)
    ix0, ix1, fx = kernels._resize_grid(4, 7)
    for i in range(9):
        for j in range(7):
            a = src[iy0[i], ix0[j]]
            b = src[iy0[i], ix1[j]]
            c = src[iy1[i], ix0[j]]
            d = src[iy1[i], ix1[j]]
            top = a + (b - a) * fx[j]
            bot = c + (d - c) * fx[j]
            assert out[i, j] == top + (bot - top) * fy[i]


def test_partition_bounds_616_into_3_and_28():
    assert tuple(kernels._partition_bounds(616, 3)) == (0, 205, 410, 616)
    b28 = kernels._partition_bounds(616, 28)
    widths = np.diff(b28)
    assert b28[0] == 0 and b28[-1] == 616
    assert np.all(widths == 22)


def test_block_mean_averages_each_block():
    img = np.zeros((6, 6))
    img[0:3, 0:3] = 1.0
    img[3:6, 3:6] = 0.5
    out = kernels.block_mean(img, 2, 2)
    assert out.shape == (2, 2)
    assert np.allclose(out, [[1.0, 0.0], [0.0, 0.5]], atol=1e-15)


def test_gauss_ellipse_peak_at_center_and_decay():
    img = kernels.gauss_ellipse(224, 224, 111.5, 111.5, 0.0, 70.0, 45.0, 0.5)
    assert img.shape == (224, 224)
    assert abs(img.max() - 0.5) < 0.001
    assert img.min() > 0.0
    # wider along x than y: equal offsets decay less along x
    assert img[111, 111 + 40] > img[111 + 40, 111]


needs_numba = pytest.mark.skipif(kernels.numba is None,
                                 reason="numba backend not active")


@needs_numba
def test_parity_max_violation_bit_identical():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(1, 2000))
        m = int(rng.integers(3, 65))
        px = rng.uniform(-30, 30, n)
        py = rng.uniform(-30, 30, n)
        ang = rng.uniform(0, 2 * np.pi, m)
        nx, ny = np.cos(ang), np.sin(ang)
        rhs = rng.uniform(5, 20, m)
        a = kernels._max_violation_numba(px, py, nx, ny, rhs)
        b = kernels._max_violation_numpy(px, py, nx, ny, rhs)
        assert np.array_equal(a, b)


@needs_numba
def test_parity_bilinear_resize_bit_identical():
    rng = np.random.default_rng(1)
    for _ in range(10):
        src = rng.random((int(rng.integers(2, 300)), int(rng.integers(2, 300))))
        oh = int(rng.integers(1, 300))
        ow = int(rng.integers(1, 300))
        iy0, iy1, fy = kernels._resize_grid(src.shape[0], oh)
        ix0, ix1, fx = kernels._resize_grid(src.shape[1], ow)
        a = kernels._bilinear_resize_numba(src, iy0, iy1, fy, ix0, ix1, fx)
        b = kernels._bilinear_resize_numpy(src, iy0, iy1, fy, ix0, ix1, fx)
        assert np.array_equal(a, b)


@needs_numba
def test_parity_gauss_ellipse_within_1e12():
    rng = np.random.default_rng(2)
    for _ in range(10):
        cx, cy = rng.uniform(50, 170, 2)
        rot = rng.uniform(-30, 30)
        amp = rng.uniform(0.1, 1.0)
        a = kernels._gauss_ellipse_numba(224, 224, cx, cy, rot, 70.0, 45.0, amp)
        b = kernels._gauss_ellipse_numpy(224, 224, cx, cy, rot, 70.0, 45.0, amp)
        assert np.max(np.abs(a - b)) <= 1e-12


@needs_numba
def test_parity_block_mean_within_1e12():
    rng = np.random.default_rng(3)
    for _ in range(10):
        img = rng.random((616, 616))
        rb = kernels._partition_bounds(616, 28)
        cb = kernels._partition_bounds(616, 28)
        a = kernels._block_mean_numba(img, rb, cb)
        b = kernels._block_mean_numpy(img, rb, cb)
        assert np.max(np.abs(a - b)) <= 1e-12
