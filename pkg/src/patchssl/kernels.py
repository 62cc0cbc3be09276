"""Hot numeric kernels: convolution, pooling and fixed-order matmul.

Every kernel exists twice: a loop version compiled with numba's @njit and a
vectorized pure-numpy version. The active backend is chosen once at import
time from the PATCHSSL_BACKEND environment variable ("numba" or "numpy");
unset means numba when importable, numpy otherwise. Both backends are
deterministic run-to-run; they may differ from each other in the last float
bits because accumulation order differs. ``benchmarks/bench_kernels.py``
compares the two.

All convolutions here are stride 1. conv3x3 uses zero padding of 1 so the
spatial size is preserved; avgpool2x2 has stride 2 and requires even input.
"""

from __future__ import annotations

import os

import numpy as np

_choice = os.environ.get("PATCHSSL_BACKEND", "").strip().lower()
if _choice not in ("", "numba", "numpy"):
    raise ValueError(
        f"PATCHSSL_BACKEND must be 'numba' or 'numpy', got {_choice!r}"
    )

if _choice == "numpy":
    _njit = None
else:
    try:
        from numba import njit as _njit
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("PATCHSSL_BACKEND=numba but numba is not installed")
        _njit = None

BACKEND = "numpy" if _njit is None else "numba"


# ---------------------------------------------------------------------------
# loop kernels (compiled when the numba backend is active)

def _matmul_loops(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):  # ascending inner index: fixed accumulation order
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def _pad1_loops(x):
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2))
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(wd):
                    xp[ni, ci, i + 1, j + 1] = x[ni, ci, i, j]
    return xp


def _conv3x3_forward_loops(x, w, b):
    # scalar weight hoisted out of contiguous row loops so the jit can SIMD
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = _pad1_loops(x)
    out = np.empty((n, f, h, wd))
    for ni in range(n):
        for fi in range(f):
            for i in range(h):
                for j in range(wd):
                    out[ni, fi, i, j] = b[fi]
            for ci in range(c):
                for di in range(3):
                    for dj in range(3):
                        wv = w[fi, ci, di, dj]
                        for i in range(h):
                            for j in range(wd):
                                out[ni, fi, i, j] += wv * xp[ni, ci, i + di, j + dj]
    return out


def _conv3x3_backward_loops(x, w, dy):
    # gather-style with zero padding: branch-free inner loops jit cleanly
    n, c, h, wd = x.shape
    f = w.shape[0]
    xp = _pad1_loops(x)
    dyp = _pad1_loops(dy)
    dx = np.empty((n, c, h, wd))
    dw = np.zeros(w.shape)
    db = np.zeros(f)
    for fi in range(f):
        s = 0.0
        for ni in range(n):
            for i in range(h):
                for j in range(wd):
                    s += dy[ni, fi, i, j]
        db[fi] = s
    for ni in range(n):
        for fi in range(f):
            for ci in range(c):
                for di in range(3):
                    for dj in range(3):
                        s = 0.0
                        for i in range(h):
                            for j in range(wd):
                                s += dy[ni, fi, i, j] * xp[ni, ci, i + di, j + dj]
                        dw[fi, ci, di, dj] += s
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(wd):
                    dx[ni, ci, i, j] = 0.0
            for fi in range(f):
                for di in range(3):
                    for dj in range(3):
                        wv = w[fi, ci, di, dj]
                        for i in range(h):
                            for j in range(wd):
                                dx[ni, ci, i, j] += wv * dyp[ni, fi, i + 2 - di, j + 2 - dj]
    return dx, dw, db


def _conv1x1_forward_loops(x, w, b):
    n, c, h, wd = x.shape
    f = w.shape[0]
    out = np.empty((n, f, h, wd))
    for ni in range(n):
        for fi in range(f):
            for i in range(h):
                for j in range(wd):
                    out[ni, fi, i, j] = b[fi]
            for ci in range(c):
                wv = w[fi, ci]
                for i in range(h):
                    for j in range(wd):
                        out[ni, fi, i, j] += wv * x[ni, ci, i, j]
    return out


def _conv1x1_backward_loops(x, w, dy):
    n, c, h, wd = x.shape
    f = w.shape[0]
    dx = np.zeros((n, c, h, wd))
    dw = np.zeros(w.shape)
    db = np.zeros(f)
    for fi in range(f):
        s = 0.0
        for ni in range(n):
            for i in range(h):
                for j in range(wd):
                    s += dy[ni, fi, i, j]
        db[fi] = s
    for ni in range(n):
        for fi in range(f):
            for ci in range(c):
                wv = w[fi, ci]
                s = 0.0
                for i in range(h):
                    for j in range(wd):
                        dx[ni, ci, i, j] += wv * dy[ni, fi, i, j]
                        s += dy[ni, fi, i, j] * x[ni, ci, i, j]
                dw[fi, ci] += s
    return dx, dw, db


def _avgpool2x2_forward_loops(x):
    n, c, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    out = np.empty((n, c, ho, wo))
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    out[ni, ci, i, j] = 0.25 * (
                        x[ni, ci, 2 * i, 2 * j]
                        + x[ni, ci, 2 * i, 2 * j + 1]
                        + x[ni, ci, 2 * i + 1, 2 * j]
                        + x[ni, ci, 2 * i + 1, 2 * j + 1]
                    )
    return out


def _avgpool2x2_backward_loops(dy, h, wd):
    n, c, ho, wo = dy.shape
    dx = np.zeros((n, c, h, wd))
    for ni in range(n):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    g = 0.25 * dy[ni, ci, i, j]
                    dx[ni, ci, 2 * i, 2 * j] = g
                    dx[ni, ci, 2 * i, 2 * j + 1] = g
                    dx[ni, ci, 2 * i + 1, 2 * j] = g
                    dx[ni, ci, 2 * i + 1, 2 * j + 1] = g
    return dx


# ---------------------------------------------------------------------------
# vectorized numpy kernels

def _matmul_numpy(a, b):
    return a @ b


def _pad1(x):
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _conv3x3_forward_numpy(x, w, b):
    n, c, h, wd = x.shape
    xp = _pad1(x)
    out = np.zeros((n, w.shape[0], h, wd))
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di:di + h, dj:dj + wd]
            out += np.einsum("nchw,fc->nfhw", xs, w[:, :, di, dj])
    return out + b[None, :, None, None]


def _conv3x3_backward_numpy(x, w, dy):
    n, c, h, wd = x.shape
    xp = _pad1(x)
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for di in range(3):
        for dj in range(3):
            xs = xp[:, :, di:di + h, dj:dj + wd]
            dw[:, :, di, dj] = np.tensordot(dy, xs, axes=([0, 2, 3], [0, 2, 3]))
            dxp[:, :, di:di + h, dj:dj + wd] += np.einsum(
                "nfhw,fc->nchw", dy, w[:, :, di, dj]
            )
    db = dy.sum(axis=(0, 2, 3))
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _conv1x1_forward_numpy(x, w, b):
    return np.einsum("nchw,fc->nfhw", x, w) + b[None, :, None, None]


def _conv1x1_backward_numpy(x, w, dy):
    dx = np.einsum("nfhw,fc->nchw", dy, w)
    dw = np.tensordot(dy, x, axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dx, dw, db


def _avgpool2x2_forward_numpy(x):
    n, c, h, wd = x.shape
    return x.reshape(n, c, h // 2, 2, wd // 2, 2).mean(axis=(3, 5))


def _avgpool2x2_backward_numpy(dy, h, wd):
    n, c = dy.shape[:2]
    g = np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25
    return np.ascontiguousarray(g)


if BACKEND == "numba":
    _jit = _njit(cache=True)
    _pad1_loops = _jit(_pad1_loops)
    matmul = _jit(_matmul_loops)
    conv3x3_forward = _jit(_conv3x3_forward_loops)
    conv3x3_backward = _jit(_conv3x3_backward_loops)
    conv1x1_forward = _jit(_conv1x1_forward_loops)
    conv1x1_backward = _jit(_conv1x1_backward_loops)
    avgpool2x2_forward = _jit(_avgpool2x2_forward_loops)
    avgpool2x2_backward = _jit(_avgpool2x2_backward_loops)
else:
    matmul = _matmul_numpy
    conv3x3_forward = _conv3x3_forward_numpy
    conv3x3_backward = _conv3x3_backward_numpy
    conv1x1_forward = _conv1x1_forward_numpy
    conv1x1_backward = _conv1x1_backward_numpy
    avgpool2x2_forward = _avgpool2x2_forward_numpy
    avgpool2x2_backward = _avgpool2x2_backward_numpy
