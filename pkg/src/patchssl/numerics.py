"""Dense-tensor helpers and deterministic randomness.

A Tensor is simply a C-contiguous float64 numpy array (row-major, as numpy
stores it). The functions here wrap the few array operations the rest of the
package builds on, adding the shape and finiteness checks the other modules
rely on. No broadcasting is offered beyond what callers do themselves.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes do not fit the operation."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where only finite values are allowed."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce to a finite, C-contiguous float64 array, optionally reshaped."""
    t = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if shape is not None:
        t = t.reshape(shape)
    check_finite(t, "as_tensor")
    return t


def check_finite(t: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(t)):
        idx = int(np.flatnonzero(~np.isfinite(t.ravel()))[0])
        raise NumericError(f"non-finite value at flat index {idx} in {where}")
    return t


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D tensors with a fixed accumulation order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = kernels.matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))
    return check_finite(out, "matmul")


def map_elementwise(t: np.ndarray, f) -> np.ndarray:
    """Apply a unary scalar function elementwise, preserving shape."""
    t = np.asarray(t, dtype=np.float64)
    flat = t.ravel()
    out = np.fromiter((f(v) for v in flat), dtype=np.float64, count=flat.size)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        raise NumericError(f"map_elementwise produced non-finite value at flat index {int(bad[0])}")
    return out.reshape(t.shape)


def reduce(t: np.ndarray, axes: Iterable[int], mode: str) -> np.ndarray | float:
    """Reduce over the given axes with mean or max; reduced axes are dropped."""
    t = np.asarray(t, dtype=np.float64)
    axes = tuple(sorted(set(int(a) for a in axes)))
    for a in axes:
        if a < 0 or a >= t.ndim:
            raise ShapeError(f"axis {a} invalid for shape {t.shape}")
        if t.shape[a] == 0:
            raise ShapeError(f"empty reduction extent on axis {a} of shape {t.shape}")
    if mode == "mean":
        out = t.mean(axis=axes)
    elif mode == "max":
        out = t.max(axis=axes)
    else:
        raise ValueError(f"unknown reduce mode {mode!r}")
    if np.ndim(out) == 0:
        return float(out)
    return check_finite(out, "reduce")


def derive_seed(root: int, *labels: str) -> int:
    """Derive a 64-bit sub-seed from a root seed and a purpose label chain.

    SHA-256 over the decimal root followed by each label, '/'-separated;
    the first 8 digest bytes read little-endian give the seed.
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode("ascii"))
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


class Rng:
    """Deterministic random stream (numpy PCG64 under the hood).

    Equal seeds give equal draw sequences across runs and platforms at the
    level of this API. An Rng must have a single owner; use spawn() to hand
    independent streams to sub-tasks.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._g = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, size=None):
        return self._g.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._g.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._g.uniform(low, high, size)

    def integers(self, low, high, size=None):
        return self._g.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._g.permutation(n)

    def spawn(self, *labels: str) -> "Rng":
        return Rng(derive_seed(self.seed, *labels))
