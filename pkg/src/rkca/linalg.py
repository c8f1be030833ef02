"""Proximal operators and structured linear solvers shared by the solvers.

The Stein solver exploits that both coefficient matrices are symmetric in
every call the solvers make: diagonalise both, divide elementwise, rotate
back.  A dense vectorised solver over the r^2 unknowns is kept both as a test
oracle and as a runtime fallback for small systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "SteinSingularError",
    "soft_shrink",
    "selective_shrink",
    "frobenius_prox",
    "schatten_prox",
    "SteinProblem",
    "stein_factors",
    "stein_apply",
    "stein_solve",
    "stein_solve_dense",
    "top_singular_value",
    "symmetric_eig",
    "svd",
]

SYMMETRY_ATOL = 1e-12
# Relative gap below which the pencil 1 - f_i*g_j counts as singular.
PENCIL_RTOL = 1e-13

# Dimension up to which the dense vectorised Stein solve is cheap enough to
# serve as a runtime fallback.
DENSE_FALLBACK_DIM = 8


class NumericalError(RuntimeError):
    """A numeric kernel failed to produce a usable result."""


class SteinSingularError(NumericalError):
    """The Stein pencil is (numerically) singular: some 1 - f_i*g_j ~ 0."""


def soft_shrink(x, tau):
    """Elementwise soft thresholding sign(x) * max(|x| - tau, 0)."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def selective_shrink(x, tau, mask):
    """Soft-shrink the entries flagged by ``mask``; pass the rest through."""
    x = np.asarray(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ValueError(f"mask shape {mask.shape} does not match {x.shape}")
    return np.where(mask, soft_shrink(x, tau), x)


def frobenius_prox(x, tau):
    """Block soft threshold: max(1 - tau/||x||_F, 0) * x."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    x = np.asarray(x)
    nrm = np.linalg.norm(x.ravel())
    if nrm <= tau:
        return np.zeros_like(x)
    return (1.0 - tau / nrm) * x


def schatten_prox(x, tau, p):
    """Proximal operator of tau * (Schatten-p norm), p in {1, 2}.

    p = 1 soft-shrinks the singular values (singular value thresholding);
    p = 2 coincides with :func:`frobenius_prox`.
    """
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    if p == 2:
        return frobenius_prox(x, tau)
    if p != 1:
        raise ValueError(f"only p in {{1, 2}} is supported, got {p}")
    u, s, vt = _svd_raw(np.asarray(x))
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vt


@dataclass(frozen=True)
class SteinProblem:
    """Data for the Stein equation K - F @ K @ G = H with symmetric F, G."""

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=np.float64)
        G = np.asarray(self.G, dtype=np.float64)
        H = np.asarray(self.H, dtype=np.float64)
        for name, mat in (("F", F), ("G", G)):
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got shape {mat.shape}")
            if np.max(np.abs(mat - mat.T), initial=0.0) > SYMMETRY_ATOL:
                raise ValueError(f"{name} is not symmetric to {SYMMETRY_ATOL}")
        if H.shape != (F.shape[0], G.shape[0]):
            raise ValueError(
                f"H shape {H.shape} inconsistent with F {F.shape}, G {G.shape}"
            )
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "H", H)


def stein_factors(F, G):
    """Eigendecompose the two symmetric coefficient matrices once.

    Returns ``(f, Qf, g, Qg, denom)`` with ``denom[i, j] = 1 - f[i]*g[j]``,
    ready to solve any number of right-hand sides via :func:`stein_apply`.
    Raises :class:`SteinSingularError` if the pencil is numerically singular.
    """
    f, qf = symmetric_eig(F)
    g, qg = symmetric_eig(G)
    prod = np.outer(f, g)
    denom = 1.0 - prod
    if np.any(np.abs(denom) < PENCIL_RTOL * (1.0 + np.abs(prod))):
        raise SteinSingularError(
            "singular Stein pencil: an eigenvalue pair satisfies f*g ~ 1"
        )
    return f, qf, g, qg, denom


def stein_apply(factors, H):
    """Solve K - F K G = H given precomputed :func:`stein_factors`."""
    _, qf, _, qg, denom = factors
    h_rot = qf.T @ np.asarray(H) @ qg
    return qf @ (h_rot / denom) @ qg.T


def stein_solve(prob):
    """Solve the Stein equation K - F K G = H of a :class:`SteinProblem`.

    Diagonalises F and G (both symmetric), divides elementwise and rotates
    back; exact up to round-off in O(r^3).  If the residual check fails on a
    small system, falls back to the dense vectorised solve.
    """
    factors = stein_factors(prob.F, prob.G)
    K = stein_apply(factors, prob.H)
    r = prob.F.shape[0]
    if r <= DENSE_FALLBACK_DIM:
        scale = max(1.0, float(np.linalg.norm(prob.H)))
        resid = np.linalg.norm(K - prob.F @ K @ prob.G - prob.H)
        if resid > 1e-9 * scale:
            K = stein_solve_dense(prob)
    return K


def stein_solve_dense(prob):
    """Dense oracle: solve (I - G (x) F) vec(K) = vec(H) over r^2 unknowns."""
    F, G, H = prob.F, prob.G, prob.H
    rf, rg = F.shape[0], G.shape[0]
    system = np.eye(rf * rg) - np.kron(G, F)
    try:
        vec_k = np.linalg.solve(system, H.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SteinSingularError(f"dense Stein solve failed: {exc}") from exc
    return vec_k.reshape((rf, rg), order="F")


_POWER_SEED = 0x5EED


def top_singular_value(x, tol=1e-8):
    """Largest singular value via power iteration on the Gram matrix.

    Deterministic: the start vector comes from a fixed-seed generator.  The
    iteration count is capped at 10 * max(dims); a zero matrix returns 0.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {x.shape}")
    if not np.any(x):
        return 0.0
    # Iterate on the smaller Gram matrix.
    gram = x.T @ x if x.shape[1] <= x.shape[0] else x @ x.T
    rng = np.random.default_rng(_POWER_SEED)
    v = rng.standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(10 * max(x.shape)):
        w = gram @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # Start vector landed in the null space; reseed deterministically.
            v = rng.standard_normal(gram.shape[0])
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
        lam_new = float(v @ (gram @ v))
        if abs(lam_new - lam) <= tol * max(lam_new, np.finfo(float).tiny):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))


def symmetric_eig(x):
    """Eigendecomposition of a symmetric matrix: X = Q diag(w) Q^T.

    Eigenvalues ascend; Q has orthonormal columns.  The input must be
    symmetric up to tiny round-off and is symmetrised before factorisation.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {x.shape}")
    scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))
    if np.max(np.abs(x - x.T), initial=0.0) > SYMMETRY_ATOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        w, q = np.linalg.eigh(0.5 * (x + x.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    return w, q


def _svd_raw(x):
    try:
        return np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed to converge: {exc}") from exc


def svd(x):
    """Thin SVD returning (U, s, V) with X = U diag(s) V^T, s descending."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {x.shape}")
    u, s, vt = _svd_raw(x)
    return u, s, vt.T
