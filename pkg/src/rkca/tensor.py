"""Dense 3-way tensor primitives.

A 3-way tensor is represented as a ``numpy.ndarray`` of shape ``(m, n, N)``
and dtype float64.  The canonical linear layout is column-major: entry
``(i, j, k)`` sits at flat position ``i + m*j + m*n*k``.  All unfoldings,
vectorisations and the binary file format follow that ordering, so modes are
numbered 1..3 and the first index always varies fastest.

Unfoldings are explicit copies, never views.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "unfold",
    "fold",
    "vectorize",
    "mode_product",
    "kronecker",
    "reconstruct",
    "frobenius",
    "l1",
    "inner",
    "as_tensor3",
    "as_matrix",
]


def as_tensor3(data, name="tensor"):
    """Coerce external input to a float64 3-way tensor, checking finiteness.

    Raises ValueError if the array is not 3-dimensional or contains NaN/Inf.
    """
    t = np.asarray(data, dtype=np.float64)
    if t.ndim != 3:
        raise ValueError(f"{name} must be 3-way, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite entries")
    return t


def as_matrix(data, name="matrix"):
    """Coerce external input to a float64 matrix, checking finiteness."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def unfold(t, mode):
    """Mode-n unfolding of a 3-way tensor.

    Returns the matrix of shape ``(I_mode, prod of other dims)`` whose columns
    are the mode-``mode`` fibers, ordered with the earlier remaining index
    varying fastest (column-major fiber ordering).
    """
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected 3-way tensor, got shape {t.shape}")
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    ax = mode - 1
    return np.reshape(
        np.moveaxis(t, ax, 0), (t.shape[ax], -1), order="F"
    ).copy(order="F")


def fold(mat, mode, dims):
    """Inverse of :func:`unfold`: rebuild the tensor of shape ``dims``."""
    mat = np.asarray(mat)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    m, n, N = dims
    ax = mode - 1
    rest = [d for i, d in enumerate(dims) if i != ax]
    if mat.ndim != 2 or mat.shape[0] != dims[ax] or mat.shape[1] != rest[0] * rest[1]:
        raise ValueError(
            f"matrix shape {mat.shape} inconsistent with dims {dims} and mode {mode}"
        )
    stacked = np.reshape(mat, (dims[ax], rest[0], rest[1]), order="F")
    return np.ascontiguousarray(np.moveaxis(stacked, 0, ax))


def vectorize(t):
    """Column-major flattening: index (i, j, k) maps to i + m*j + m*n*k."""
    return np.asarray(t).reshape(-1, order="F")


def mode_product(t, u, mode):
    """Mode-n product: every mode-``mode`` fiber of ``t`` is multiplied by ``u``.

    ``u`` must have as many columns as ``t`` has entries along ``mode``; the
    result replaces that dimension by ``u.shape[0]``.
    """
    t = np.asarray(t)
    u = np.asarray(u)
    if mode not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    if u.ndim != 2 or u.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"matrix shape {u.shape} does not match tensor dim {t.shape[mode - 1]} "
            f"along mode {mode}"
        )
    new_dims = list(t.shape)
    new_dims[mode - 1] = u.shape[0]
    return fold(u @ unfold(t, mode), mode, tuple(new_dims))


def kronecker(a, b):
    """Kronecker product a (x) b, block layout a[i,j] * b."""
    return np.kron(np.asarray(a), np.asarray(b))


def reconstruct(a, core, b):
    """Assemble the low-rank tensor with frontal slices ``a @ core_k @ b.T``.

    ``a`` is (m, r), ``b`` is (n, r) and ``core`` is (r, r, N); the result
    equals ``core x_1 a x_2 b`` and has shape (m, n, N).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    core = np.asarray(core)
    if core.ndim != 3 or a.ndim != 2 or b.ndim != 2:
        raise ValueError("reconstruct expects two matrices and a 3-way core")
    if a.shape[1] != core.shape[0] or b.shape[1] != core.shape[1]:
        raise ValueError(
            f"incompatible shapes: a {a.shape}, b {b.shape}, core {core.shape}"
        )
    slices = np.moveaxis(core, 2, 0)  # (N, r, r)
    out = a @ slices @ b.T  # (N, m, n)
    return np.ascontiguousarray(np.moveaxis(out, 0, 2))


def frobenius(x):
    """Frobenius norm of a matrix or tensor."""
    return float(np.linalg.norm(np.asarray(x).ravel()))


def l1(x):
    """Entrywise l1 norm of a matrix or tensor."""
    return float(np.sum(np.abs(x)))


def inner(a, b):
    """Euclidean inner product of two same-shaped arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))
