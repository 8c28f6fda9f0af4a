"""Backend parity: the compiled core must match the NumPy fallback bit for bit."""

import numpy as np
import pytest

from cmbench import kernels
from cmbench.kernels import _reference

native = pytest.importorskip(
    "cmbench.kernels._core", reason="compiled extension not built")

RNG = np.random.default_rng(20240817)


def _pts(n, lo=-50.0, hi=700.0):
    return RNG.uniform(lo, hi, size=(n, 2))


def _h():
    h = np.eye(3) + RNG.normal(0, 0.05, size=(3, 3))
    h[2, 2] = 1.0
    return h


def test_dispatch_reports_native_backend():
    assert kernels.BACKEND == "native"


@pytest.mark.parametrize("n", [0, 1, 7, 256, 4096])
def test_transfer_sq_bit_identical(n):
    h = _h()
    h_inv = np.linalg.inv(h)
    a, b = _pts(n), _pts(n)
    got = native.transfer_sq(h, h_inv, a, b)
    want = _reference.transfer_sq(h, h_inv, a, b)
    assert got.dtype == want.dtype == np.float64
    assert np.array_equal(got, want)


def test_transfer_sq_degenerate_w_rows_match():
    # Rows that project to w ~ 0 must be flagged invalid by both backends.
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0 / 64.0, 0.0, 1.0]])
    h_inv = np.linalg.inv(h)
    a = np.array([[64.0, 10.0], [63.999999999, 10.0], [10.0, 10.0]])
    b = np.array([[5.0, 5.0], [5.0, 5.0], [5.0, 5.0]])
    got = native.transfer_sq(h, h_inv, a, b)
    want = _reference.transfer_sq(h, h_inv, a, b)
    assert np.array_equal(got, want)
    assert got[0] == np.inf


def test_transfer_sq_nan_inputs_match():
    h = _h()
    h_inv = np.linalg.inv(h)
    a = np.array([[np.nan, 1.0], [2.0, 3.0]])
    b = np.array([[1.0, 1.0], [np.nan, 3.0]])
    got = native.transfer_sq(h, h_inv, a, b)
    want = _reference.transfer_sq(h, h_inv, a, b)
    # NaN coordinates must never produce a finite distance on either backend.
    assert not np.isfinite(got).any()
    assert np.array_equal(np.isinf(got), np.isinf(want))
    assert np.array_equal(np.isnan(got), np.isnan(want))


@pytest.mark.parametrize("n", [0, 1, 9, 512])
def test_sampson_sq_bit_identical(n):
    e = RNG.normal(size=(3, 3))
    a, b = _pts(n, -1.0, 1.0), _pts(n, -1.0, 1.0)
    got = native.sampson_sq(e, a, b)
    want = _reference.sampson_sq(e, a, b)
    assert np.array_equal(got, want)


def test_sampson_sq_zero_gradient_rows_match():
    e = np.zeros((3, 3))
    a, b = _pts(4, -1.0, 1.0), _pts(4, -1.0, 1.0)
    got = native.sampson_sq(e, a, b)
    want = _reference.sampson_sq(e, a, b)
    assert np.array_equal(got, want)
    assert (got == np.inf).all()


@pytest.mark.parametrize("shape,ksize", [((8, 8), 3), ((13, 17), 3), ((32, 9), 5), ((1, 1), 3)])
def test_conv2d_bit_identical(shape, ksize):
    out_h, out_w = shape
    pad = ksize // 2
    padded = RNG.uniform(0, 255, size=(out_h + 2 * pad, out_w + 2 * pad))
    kernel = RNG.normal(size=(ksize, ksize))
    got = native.conv2d(padded, kernel, out_h, out_w)
    want = _reference.conv2d(padded, kernel, out_h, out_w)
    assert np.array_equal(got, want)


@pytest.mark.parametrize("shape,radius", [((8, 8), 1), ((13, 17), 7), ((5, 5), 2), ((1, 1), 1)])
def test_window_mean_var_bit_identical(shape, radius):
    out_h, out_w = shape
    padded = RNG.uniform(0, 255, size=(out_h + 2 * radius, out_w + 2 * radius))
    gm, gv = native.window_mean_var(padded, radius, out_h, out_w)
    wm, wv = _reference.window_mean_var(padded, radius, out_h, out_w)
    assert np.array_equal(gm, wm)
    assert np.array_equal(gv, wv)
    assert (gv >= 0).all()


@pytest.mark.parametrize("shape,radius", [((8, 8), 1), ((13, 17), 3), ((1, 2), 1)])
def test_window_min_max_bit_identical(shape, radius):
    out_h, out_w = shape
    padded = RNG.uniform(0, 255, size=(out_h + 2 * radius, out_w + 2 * radius))
    gmin, gmax = native.window_min_max(padded, radius, out_h, out_w)
    wmin, wmax = _reference.window_min_max(padded, radius, out_h, out_w)
    assert np.array_equal(gmin, wmin)
    assert np.array_equal(gmax, wmax)
    assert (gmax >= gmin).all()


def test_native_accepts_read_only_arrays():
    h = _h()
    h.setflags(write=False)
    h_inv = np.linalg.inv(h)
    h_inv.setflags(write=False)
    a, b = _pts(16), _pts(16)
    a.setflags(write=False)
    b.setflags(write=False)
    got = native.transfer_sq(h, h_inv, a, b)
    assert np.array_equal(got, _reference.transfer_sq(h, h_inv, a, b))


def test_dispatch_coerces_non_contiguous_input():
    h = _h()
    h_inv = np.linalg.inv(h)
    wide = _pts(64)
    a = wide[::2]  # strided view
    b = _pts(32)
    got = kernels.transfer_sq(h, h_inv, a, b)
    want = _reference.transfer_sq(h, h_inv, np.ascontiguousarray(a), b)
    assert np.array_equal(got, want)


def test_pure_python_env_forces_reference(tmp_path):
    import subprocess
    import sys

    code = "import cmbench.kernels as k; print(k.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "CMBENCH_PURE_PYTHON": "1"},
        capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "reference"
