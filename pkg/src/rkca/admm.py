"""ADMM-with-substitution solver for the degree-2 regularised decomposition.

Solves, over the frontal slices of a 3-way observation tensor X,

    min  alpha*||R||_1 + lambda*||E||_1 + (||A||_F^2 + ||B||_F^2)/2
    s.t. X = K x_1 A x_2 B + E,   R = K,

by alternating exact block updates: elementwise shrinkage for E and R,
normal-equation solves for the two bases, one Stein equation per slice for
the split core K, then dual ascent with a capped geometric penalty schedule.
An observation mask switches the E step to selective shrinkage, which leaves
unobserved entries untouched and turns the solver into a robust completion
method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import linalg, tensor
from .model import FactorModel, IterationRecord, RunReport

__all__ = [
    "ETA_INIT",
    "SolverAbort",
    "SolverState",
    "initialize",
    "update_E",
    "update_A",
    "update_B",
    "update_K",
    "update_R",
    "update_duals",
    "residuals",
    "solve",
]

# Scaling coefficient for the initial penalty parameters.
ETA_INIT = 1.25

COND_WARN_THRESHOLD = 1e12


class SolverAbort(linalg.NumericalError):
    """Non-finite values appeared mid-run; carries the partial report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolverState:
    """All primal/dual variables of one ADMM run."""

    model: FactorModel
    E: np.ndarray
    K: np.ndarray
    Lam: np.ndarray
    Y: np.ndarray
    mu: float
    mu_K: float
    mu_cap: float
    mu_K_cap: float
    iters: int = 0


def _sym(mat):
    # Bitwise-symmetric version of a numerically symmetric product.
    return 0.5 * (mat + mat.T)


def _slices(t):
    # View of a (m, n, N) tensor as a (N, m, n) batch.
    return np.moveaxis(t, 2, 0)


def _stack(batch):
    return np.ascontiguousarray(np.moveaxis(batch, 0, 2))


def _slice_sq_norms(t):
    return np.sum(np.square(_slices(t)), axis=(1, 2))


def initialize(X, cfg):
    """Spectral initialisation from per-slice SVDs.

    Each slice contributes its top-r singular triplet: the core slice is the
    truncated singular-value block, the bases average the per-slice singular
    vectors.  Zero slices contribute nothing.  Initial penalties are
    eta*N / sum of slice norms, falling back to eta for all-zero input.
    """
    m, n, N = X.shape
    r = cfg.rank
    a = np.zeros((m, r))
    b = np.zeros((n, r))
    core = np.zeros((r, r, N))
    core_norm_sum = 0.0
    x_norm_sum = 0.0
    for i in range(N):
        slice_i = X[:, :, i]
        nrm = np.linalg.norm(slice_i)
        x_norm_sum += nrm
        if nrm == 0.0:
            continue
        try:
            u, s, vt = np.linalg.svd(slice_i, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise linalg.NumericalError(
                f"initialisation SVD failed on slice {i}: {exc}"
            ) from exc
        core[:, :, i] = np.diag(s[:r])
        core_norm_sum += float(np.linalg.norm(s[:r]))
        a += u[:, :r]
        b += vt[:r, :].T
    a /= N
    b /= N
    mu = ETA_INIT * N / x_norm_sum if x_norm_sum > 0 else ETA_INIT
    mu_K = ETA_INIT * N / core_norm_sum if core_norm_sum > 0 else ETA_INIT
    model = FactorModel(a, b, core)
    return SolverState(
        model=model,
        E=np.zeros_like(X),
        K=core.copy(),
        Lam=np.zeros_like(X),
        Y=np.zeros_like(core),
        mu=mu,
        mu_K=mu_K,
        mu_cap=cfg.mu_cap_factor * mu,
        mu_K_cap=cfg.mu_cap_factor * mu_K,
    )


def update_E(state, X, cfg):
    """Shrink the residual X - K x_1 A x_2 B + Lam/mu at level lambda/mu."""
    lam = cfg.resolved_lambda(X.shape)
    resid = X - tensor.reconstruct(state.model.a, state.K, state.model.b)
    resid += state.Lam / state.mu
    if cfg.mask is not None:
        return linalg.selective_shrink(resid, lam / state.mu, cfg.mask)
    return linalg.soft_shrink(resid, lam / state.mu)


def _solve_spd_right(system, rhs, report, label, iteration):
    """Solve Z @ system = rhs for Z with a symmetric positive definite system."""
    if report is not None:
        cond = np.linalg.cond(system)
        if not np.isfinite(cond) or cond > COND_WARN_THRESHOLD:
            message = f"{label}-update system ill-conditioned (cond={cond:.3e})"
            if iteration is not None:
                message += f" at iteration {iteration}"
            if not any(w.startswith(f"{label}-update") for w in report.warnings):
                report.warn(message)
    try:
        cho = scipy.linalg.cho_factor(system, lower=True)
        return scipy.linalg.cho_solve(cho, rhs.T).T
    except scipy.linalg.LinAlgError:
        return np.linalg.solve(system, rhs.T).T


def update_A(state, x_tilde, cfg, report=None):
    """Exact minimiser of the A block: a normal-equation solve over r x r."""
    mu = state.mu
    k_t = _slices(state.K)
    gram_b = _sym(state.model.b.T @ state.model.b)
    system = np.eye(cfg.rank) + mu * _sym(
        np.sum(k_t @ gram_b @ k_t.transpose(0, 2, 1), axis=0)
    )
    p_t = _slices(mu * x_tilde + state.Lam)
    rhs = np.sum((p_t @ state.model.b) @ k_t.transpose(0, 2, 1), axis=0)
    return _solve_spd_right(system, rhs, report, "A", state.iters)


def update_B(state, x_tilde, cfg, report=None):
    """Exact minimiser of the B block, using the freshly updated A."""
    mu = state.mu
    k_t = _slices(state.K)
    gram_a = _sym(state.model.a.T @ state.model.a)
    system = np.eye(cfg.rank) + mu * _sym(
        np.sum(k_t.transpose(0, 2, 1) @ gram_a @ k_t, axis=0)
    )
    p_t = _slices(mu * x_tilde + state.Lam)
    rhs = np.sum(p_t.transpose(0, 2, 1) @ (state.model.a @ k_t), axis=0)
    return _solve_spd_right(system, rhs, report, "B", state.iters)


def update_K(state, x_tilde, cfg):
    """Solve one Stein equation per slice for the split core.

    Slice i satisfies mu_K*K_i + mu*A^T A K_i B^T B = A^T(Lam_i + mu*Xt_i)B
    + mu_K*R_i + Y_i; both coefficient Grams are diagonalised once and reused
    across slices.
    """
    a, b = state.model.a, state.model.b
    mu, mu_K = state.mu, state.mu_K
    F = -(mu / mu_K) * _sym(a.T @ a)
    G = _sym(b.T @ b)
    factors = linalg.stein_factors(F, G)
    _, qf, _, qg, denom = factors
    p_t = _slices(state.Lam + mu * x_tilde)
    h_t = (a.T @ p_t @ b + _slices(state.Y)) / mu_K + _slices(state.model.core)
    h_rot = qf.T @ h_t @ qg
    k_t = qf @ (h_rot / denom) @ qg.T
    return _stack(k_t)


def update_R(state, cfg):
    """Shrink K - Y/mu_K at level alpha/mu_K."""
    return linalg.soft_shrink(state.K - state.Y / state.mu_K, cfg.alpha / state.mu_K)


def update_duals(state, x_tilde, cfg):
    """Dual ascent on both constraints, then grow the capped penalties."""
    recon = tensor.reconstruct(state.model.a, state.K, state.model.b)
    state.Lam = state.Lam + state.mu * (x_tilde - recon)
    state.Y = state.Y + state.mu_K * (state.model.core - state.K)
    state.mu = min(state.mu_cap, cfg.rho * state.mu)
    state.mu_K = min(state.mu_K_cap, cfg.rho * state.mu_K)
    return state


def _max_ratio(num, den):
    # Per-slice squared-norm ratios; zero denominators fall back to the
    # absolute squared norm so all-zero slices never produce NaN.
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
    return float(np.max(out)) if out.size else 0.0


def residuals(state, X):
    """Primal-feasibility errors (err_rec, err_R), worst slice of each."""
    recon = state.model.reconstruct()
    err_rec = _max_ratio(
        _slice_sq_norms(X - recon - state.E), _slice_sq_norms(X)
    )
    err_core = _max_ratio(
        _slice_sq_norms(state.model.core - state.K),
        _slice_sq_norms(state.model.core),
    )
    return err_rec, err_core


def _objective_terms(state, cfg, lam):
    sparse = state.E
    if cfg.mask is not None:
        sparse = np.where(cfg.mask, state.E, 0.0)
    return {
        "l1_core": cfg.alpha * tensor.l1(state.model.core),
        "l1_sparse": lam * tensor.l1(sparse),
        "basis": 0.5
        * (tensor.frobenius(state.model.a) ** 2 + tensor.frobenius(state.model.b) ** 2),
    }


def _check_finite(state, report):
    for name, arr in (
        ("A", state.model.a),
        ("B", state.model.b),
        ("R", state.model.core),
        ("K", state.K),
        ("E", state.E),
        ("Lam", state.Lam),
        ("Y", state.Y),
    ):
        if not np.all(np.isfinite(arr)):
            report.termination = "abort"
            raise SolverAbort(
                f"non-finite values in {name} at iteration {state.iters}", report
            )


def solve(X, cfg):
    """Run the full degree-2 ADMM loop; returns (model, E, report).

    Iterates the Algorithm-order updates (E, A, B, K, R, duals) until the
    worst primal-feasibility error drops below ``cfg.tol`` or ``max_iters``
    is reached.  Deterministic for fixed inputs.
    """
    X = tensor.as_tensor3(X, "X")
    cfg.validate_for(X.shape)
    if cfg.variant != "admm2":
        raise ValueError(f"admm.solve handles the admm2 variant, got {cfg.variant!r}")
    lam = cfg.resolved_lambda(X.shape)
    report = RunReport(variant=cfg.variant, config=cfg.resolved(X.shape))
    state = initialize(X, cfg)
    for it in range(1, cfg.max_iters + 1):
        t0 = time.perf_counter()
        state.iters = it
        state.E = update_E(state, X, cfg)
        if not np.all(np.isfinite(state.E)):
            report.termination = "abort"
            raise SolverAbort(f"non-finite values in E at iteration {it}", report)
        x_tilde = X - state.E
        state.model.a = update_A(state, x_tilde, cfg, report)
        state.model.b = update_B(state, x_tilde, cfg, report)
        state.K = update_K(state, x_tilde, cfg)
        state.model.core = update_R(state, cfg)
        update_duals(state, x_tilde, cfg)
        err_rec, err_core = residuals(state, X)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        report.append(
            IterationRecord(
                iter=it,
                err_rec=err_rec,
                err_R=err_core,
                mu=state.mu,
                mu_K=state.mu_K,
                elapsed_ms=elapsed_ms,
                objective=_objective_terms(state, cfg, lam),
            )
        )
        _check_finite(state, report)
        if not (np.isfinite(err_rec) and np.isfinite(err_core)):
            report.termination = "abort"
            raise SolverAbort(f"non-finite residuals at iteration {it}", report)
        if max(err_rec, err_core) <= cfg.tol:
            report.termination = "tol"
            break
    else:
        report.termination = "max_iters"
    return state.model, state.E, report
