"""Degree-2 ADMM solver tests: block updates against closed forms and
plug-back oracles, initialisation, residuals and the full loop."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from rkca import admm, tensor
from rkca.data import SynthSpec, synth_generate
from rkca.model import FactorModel, SolverConfig

from conftest import rel_error


def make_state(rng, m=6, n=5, N=3, r=3, mu=0.7, mu_K=1.3):
    model = FactorModel(
        a=rng.standard_normal((m, r)),
        b=rng.standard_normal((n, r)),
        core=rng.standard_normal((r, r, N)),
    )
    return admm.SolverState(
        model=model,
        E=rng.standard_normal((m, n, N)),
        K=rng.standard_normal((r, r, N)),
        Lam=rng.standard_normal((m, n, N)),
        Y=rng.standard_normal((r, r, N)),
        mu=mu,
        mu_K=mu_K,
        mu_cap=mu * 1e7,
        mu_K_cap=mu_K * 1e7,
    )


def test_initialize_zero_input():
    X = np.zeros((6, 5, 3))
    cfg = SolverConfig(rank=2)
    state = admm.initialize(X, cfg)
    assert not state.model.a.any() and not state.model.b.any()
    assert not state.model.core.any() and not state.K.any()
    assert state.mu == admm.ETA_INIT and state.mu_K == admm.ETA_INIT


def test_initialize_diagonal_slice():
    X = np.zeros((4, 4, 1))
    X[:, :, 0] = np.diag([4.0, 3.0, 2.0, 1.0])
    cfg = SolverConfig(rank=2)
    state = admm.initialize(X, cfg)
    assert_allclose(state.model.core[:, :, 0], np.diag([4.0, 3.0]), atol=1e-12)
    assert_allclose(np.abs(state.model.a), np.eye(4)[:, :2], atol=1e-12)
    assert_allclose(np.abs(state.model.b), np.eye(4)[:, :2], atol=1e-12)


def test_initialize_matches_per_slice_svd():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((8, 6, 4))
    cfg = SolverConfig(rank=3)
    state = admm.initialize(X, cfg)
    a_sum = np.zeros((8, 3))
    norm_sum = 0.0
    for i in range(4):
        u, s, vt = np.linalg.svd(X[:, :, i], full_matrices=False)
        a_sum += u[:, :3]
        norm_sum += np.linalg.norm(X[:, :, i])
        assert_allclose(state.model.core[:, :, i], np.diag(s[:3]), atol=1e-12)
    assert_allclose(state.model.a, a_sum / 4, atol=1e-12)
    assert state.mu == pytest.approx(admm.ETA_INIT * 4 / norm_sum)
    assert np.array_equal(state.K, state.model.core)
    assert not state.E.any() and not state.Lam.any() and not state.Y.any()


def test_update_E_zero_residual_and_scalar():
    rng = np.random.default_rng(1)
    state = make_state(rng)
    cfg = SolverConfig(rank=3, lam=0.5)
    X = tensor.reconstruct(state.model.a, state.K, state.model.b)
    state.Lam = np.zeros_like(X)
    assert_allclose(admm.update_E(state, X, cfg), np.zeros_like(X))

    scalar = admm.SolverState(
        model=FactorModel(a=np.ones((1, 1)), b=np.ones((1, 1)),
                          core=np.zeros((1, 1, 1))),
        E=np.zeros((1, 1, 1)),
        K=np.zeros((1, 1, 1)),
        Lam=np.zeros((1, 1, 1)),
        Y=np.zeros((1, 1, 1)),
        mu=1.0, mu_K=1.0, mu_cap=1e7, mu_K_cap=1e7,
    )
    X1 = np.full((1, 1, 1), 1.0)
    out = admm.update_E(scalar, X1, SolverConfig(rank=1, lam=0.3))
    assert out[0, 0, 0] == pytest.approx(0.7)


def test_update_E_masked_passthrough():
    rng = np.random.default_rng(2)
    state = make_state(rng)
    X = rng.standard_normal(state.E.shape)
    mask = rng.random(X.shape) < 0.5
    cfg = SolverConfig(rank=3, lam=0.4, mask=mask)
    raw = (
        X
        - tensor.reconstruct(state.model.a, state.K, state.model.b)
        + state.Lam / state.mu
    )
    out = admm.update_E(state, X, cfg)
    assert np.array_equal(out[~mask], raw[~mask])


def test_update_A_zero_and_closed_form():
    rng = np.random.default_rng(3)
    state = make_state(rng)
    cfg = SolverConfig(rank=3)
    state.K = np.zeros_like(state.K)
    state.Lam = np.zeros_like(state.Lam)
    x_tilde = np.zeros_like(state.E)
    assert_allclose(admm.update_A(state, x_tilde, cfg), np.zeros_like(state.model.a))

    # N=1, B=I, K=I, Lam=0, square: A = mu/(1+mu) * Xt.
    r = 3
    model = FactorModel(a=np.zeros((r, r)), b=np.eye(r), core=np.zeros((r, r, 1)))
    state = admm.SolverState(
        model=model,
        E=np.zeros((r, r, 1)),
        K=np.eye(r)[:, :, None],
        Lam=np.zeros((r, r, 1)),
        Y=np.zeros((r, r, 1)),
        mu=2.0, mu_K=1.0, mu_cap=1e7, mu_K_cap=1e7,
    )
    x_tilde = rng.standard_normal((r, r, 1))
    out = admm.update_A(state, x_tilde, SolverConfig(rank=r))
    assert_allclose(out, (2.0 / 3.0) * x_tilde[:, :, 0], atol=1e-12)


def lagrangian_a_terms(a, state, x_tilde):
    total = 0.5 * np.sum(a**2)
    for i in range(x_tilde.shape[2]):
        resid = x_tilde[:, :, i] - a @ state.K[:, :, i] @ state.model.b.T
        total += np.sum(state.Lam[:, :, i] * resid)
        total += 0.5 * state.mu * np.sum(resid**2)
    return total


def grad_a(a, state, x_tilde):
    g = a.copy()
    for i in range(x_tilde.shape[2]):
        resid = x_tilde[:, :, i] - a @ state.K[:, :, i] @ state.model.b.T
        g -= (state.Lam[:, :, i] + state.mu * resid) @ state.model.b @ state.K[:, :, i].T
    return g


def test_update_A_stationarity_oracle():
    rng = np.random.default_rng(4)
    state = make_state(rng)
    cfg = SolverConfig(rank=3)
    x_tilde = rng.standard_normal(state.E.shape)

    # Validate the gradient formula by finite differences at a random point.
    a0 = rng.standard_normal(state.model.a.shape)
    g = grad_a(a0, state, x_tilde)
    h = 1e-6
    for _ in range(5):
        d = rng.standard_normal(a0.shape)
        d /= np.linalg.norm(d)
        fd = (
            lagrangian_a_terms(a0 + h * d, state, x_tilde)
            - lagrangian_a_terms(a0 - h * d, state, x_tilde)
        ) / (2 * h)
        assert fd == pytest.approx(np.sum(g * d), rel=1e-5)

    # The update must zero that gradient.
    a_new = admm.update_A(state, x_tilde, cfg)
    assert np.linalg.norm(grad_a(a_new, state, x_tilde)) <= 1e-8 * (
        1.0 + np.linalg.norm(a_new)
    )


def test_update_B_stationarity():
    rng = np.random.default_rng(5)
    state = make_state(rng)
    cfg = SolverConfig(rank=3)
    x_tilde = rng.standard_normal(state.E.shape)
    b_new = admm.update_B(state, x_tilde, cfg)
    g = b_new.copy()
    for i in range(x_tilde.shape[2]):
        resid = x_tilde[:, :, i] - state.model.a @ state.K[:, :, i] @ b_new.T
        g -= (state.Lam[:, :, i] + state.mu * resid).T @ state.model.a @ state.K[:, :, i]
    assert np.linalg.norm(g) <= 1e-8 * (1.0 + np.linalg.norm(b_new))


def test_update_K_trivial_cases():
    rng = np.random.default_rng(6)
    state = make_state(rng)
    cfg = SolverConfig(rank=3)
    x_tilde = rng.standard_normal(state.E.shape)
    state.model.a = np.zeros_like(state.model.a)
    out = admm.update_K(state, x_tilde, cfg)
    assert_allclose(out, state.model.core + state.Y / state.mu_K, atol=1e-10)

    r = 3
    model = FactorModel(
        a=np.eye(r), b=np.eye(r), core=rng.standard_normal((r, r, 2))
    )
    state = admm.SolverState(
        model=model,
        E=np.zeros((r, r, 2)),
        K=np.zeros((r, r, 2)),
        Lam=rng.standard_normal((r, r, 2)),
        Y=rng.standard_normal((r, r, 2)),
        mu=1.0, mu_K=1.0, mu_cap=1e7, mu_K_cap=1e7,
    )
    x_tilde = rng.standard_normal((r, r, 2))
    out = admm.update_K(state, x_tilde, SolverConfig(rank=r))
    expected = (state.Lam + x_tilde + model.core + state.Y) / 2.0
    assert_allclose(out, expected, atol=1e-10)


def k_plugback_residual(state, x_tilde, K):
    """Worst relative residual of the per-slice core stationarity equation."""
    a, b = state.model.a, state.model.b
    worst = 0.0
    for i in range(x_tilde.shape[2]):
        rhs = (
            a.T @ (state.Lam[:, :, i] + state.mu * x_tilde[:, :, i]) @ b
            + state.mu_K * state.model.core[:, :, i]
            + state.Y[:, :, i]
        )
        lhs = state.mu_K * K[:, :, i] + state.mu * a.T @ a @ K[:, :, i] @ (b.T @ b)
        worst = max(worst, np.linalg.norm(lhs - rhs) / max(1.0, np.linalg.norm(rhs)))
    return worst


def test_update_K_plugback():
    rng = np.random.default_rng(7)
    state = make_state(rng, r=4)
    cfg = SolverConfig(rank=4)
    x_tilde = rng.standard_normal(state.E.shape)
    K = admm.update_K(state, x_tilde, cfg)
    assert k_plugback_residual(state, x_tilde, K) <= 1e-8


def test_update_R_cases():
    rng = np.random.default_rng(8)
    state = make_state(rng)
    state.Y = np.zeros_like(state.Y)
    cfg = SolverConfig(rank=3, alpha=1e-12)
    out = admm.update_R(state, cfg)
    assert_allclose(out, state.K, atol=1e-10)

    state.K = 1e-3 * rng.standard_normal(state.K.shape)
    state.Y = np.zeros_like(state.Y)
    cfg = SolverConfig(rank=3, alpha=1.0)
    assert not admm.update_R(state, cfg).any()

    state = make_state(rng)
    cfg = SolverConfig(rank=3, alpha=0.3)
    out = admm.update_R(state, cfg)
    arg = state.K - state.Y / state.mu_K
    thr = 0.3 / state.mu_K
    expected = np.sign(arg) * np.maximum(np.abs(arg) - thr, 0.0)
    assert np.array_equal(out, expected)


def test_update_duals_reevaluation():
    rng = np.random.default_rng(9)
    state = make_state(rng)
    cfg = SolverConfig(rank=3, rho=1.4)
    x_tilde = rng.standard_normal(state.E.shape)
    lam_old, y_old = state.Lam.copy(), state.Y.copy()
    mu_old, mu_k_old = state.mu, state.mu_K
    recon = tensor.reconstruct(state.model.a, state.K, state.model.b)
    admm.update_duals(state, x_tilde, cfg)
    assert_allclose(state.Lam, lam_old + mu_old * (x_tilde - recon), atol=1e-12)
    assert_allclose(state.Y, y_old + mu_k_old * (state.model.core - state.K), atol=1e-12)
    assert state.mu == pytest.approx(1.4 * mu_old)
    assert state.mu_K == pytest.approx(1.4 * mu_k_old)


def test_update_duals_feasible_and_capped():
    rng = np.random.default_rng(10)
    state = make_state(rng)
    cfg = SolverConfig(rank=3)
    state.model.core = state.K.copy()
    x_tilde = tensor.reconstruct(state.model.a, state.K, state.model.b)
    lam_old, y_old = state.Lam.copy(), state.Y.copy()
    state.mu_cap = state.mu  # already at cap
    admm.update_duals(state, x_tilde, cfg)
    assert_allclose(state.Lam, lam_old, atol=1e-12)
    assert_allclose(state.Y, y_old, atol=1e-12)
    assert state.mu == state.mu_cap


def test_residuals_formula():
    rng = np.random.default_rng(11)
    state = make_state(rng)
    X = state.model.reconstruct() + state.E
    err_rec, err_core = admm.residuals(state, X)
    assert err_rec <= 1e-24

    X = rng.standard_normal(state.E.shape)
    err_rec, err_core = admm.residuals(state, X)
    recon = state.model.reconstruct()
    expect_rec = max(
        np.sum((X[:, :, i] - recon[:, :, i] - state.E[:, :, i]) ** 2)
        / np.sum(X[:, :, i] ** 2)
        for i in range(X.shape[2])
    )
    expect_core = max(
        np.sum((state.model.core[:, :, i] - state.K[:, :, i]) ** 2)
        / np.sum(state.model.core[:, :, i] ** 2)
        for i in range(X.shape[2])
    )
    assert err_rec == pytest.approx(expect_rec)
    assert err_core == pytest.approx(expect_core)


def test_residuals_sparse_absorbs_everything():
    # A zero model with E = X is perfectly feasible for the data constraint.
    rng = np.random.default_rng(14)
    X = rng.standard_normal((6, 5, 3))
    state = admm.SolverState(
        model=FactorModel(a=np.zeros((6, 2)), b=np.zeros((5, 2)),
                          core=np.zeros((2, 2, 3))),
        E=X.copy(),
        K=np.zeros((2, 2, 3)),
        Lam=np.zeros_like(X),
        Y=np.zeros((2, 2, 3)),
        mu=1.0, mu_K=1.0, mu_cap=1e7, mu_K_cap=1e7,
    )
    err_rec, err_core = admm.residuals(state, X)
    assert err_rec == 0.0 and err_core == 0.0


def test_residuals_zero_denominator():
    rng = np.random.default_rng(12)
    state = make_state(rng)
    X = np.zeros(state.E.shape)
    err_rec, _ = admm.residuals(state, X)
    recon = state.model.reconstruct()
    assert np.isfinite(err_rec)
    expect = max(
        np.sum((recon[:, :, i] + state.E[:, :, i]) ** 2) for i in range(X.shape[2])
    )
    assert err_rec == pytest.approx(expect)


def test_solve_zero_input():
    cfg = SolverConfig(rank=2)
    model, E, report = admm.solve(np.zeros((6, 5, 3)), cfg)
    assert report.n_iterations == 1 and report.termination == "tol"
    assert not model.reconstruct().any() and not E.any()


def test_solve_exact_low_rank_no_noise():
    spec = SynthSpec(m=20, n=20, n_slices=6, rank_a=3, rank_b=3, p_clean=1.0, seed=5)
    low_rank, _, X = synth_generate(spec)
    cfg = SolverConfig(rank=5, lam=1e4, tol=1e-12, max_iters=500)
    model, E, report = admm.solve(X, cfg)
    assert rel_error(model.reconstruct(), low_rank) <= 1e-5
    assert np.abs(E).max() <= 1e-6 * np.abs(low_rank).max()


def test_solve_penalty_monotone_and_capped():
    spec = SynthSpec(m=15, n=12, n_slices=4, rank_a=2, rank_b=2, p_clean=0.8, seed=6)
    _, _, X = synth_generate(spec)
    cfg = SolverConfig(rank=4, tol=1e-12, max_iters=250, mu_cap_factor=100.0)
    _, _, report = admm.solve(X, cfg)
    mus = [rec.mu for rec in report.iterations]
    assert all(b >= a for a, b in zip(mus, mus[1:]))
    assert max(mus) <= 100.0 * mus[0] + 1e-12
    mu_ks = [rec.mu_K for rec in report.iterations]
    assert all(b >= a for a, b in zip(mu_ks, mu_ks[1:]))


def test_solve_deterministic():
    spec = SynthSpec(m=15, n=12, n_slices=4, rank_a=2, rank_b=2, p_clean=0.8, seed=7)
    _, _, X = synth_generate(spec)
    cfg = SolverConfig(rank=4, tol=1e-8, max_iters=200)
    model1, e1, rep1 = admm.solve(X, cfg)
    model2, e2, rep2 = admm.solve(X, cfg)
    assert np.array_equal(model1.a, model2.a)
    assert np.array_equal(model1.core, model2.core)
    assert np.array_equal(e1, e2)
    for r1, r2 in zip(rep1.iterations, rep2.iterations):
        assert (r1.err_rec, r1.err_R, r1.mu, r1.mu_K) == (
            r2.err_rec, r2.err_R, r2.mu, r2.mu_K,
        )


def test_plugback_holds_across_sweeps():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((10, 8, 3))
    cfg = SolverConfig(rank=3, lam=0.2)
    state = admm.initialize(X, cfg)
    for it in range(1, 6):
        state.iters = it
        state.E = admm.update_E(state, X, cfg)
        x_tilde = X - state.E
        state.model.a = admm.update_A(state, x_tilde, cfg)
        state.model.b = admm.update_B(state, x_tilde, cfg)
        K = admm.update_K(state, x_tilde, cfg)
        assert k_plugback_residual(state, x_tilde, K) <= 1e-8
        state.K = K
        state.model.core = admm.update_R(state, cfg)
        admm.update_duals(state, x_tilde, cfg)


def test_solve_abort_on_nonfinite():
    # Entries are finite but slice norms overflow, driving mu to zero and the
    # first shrinkage to NaN; the solver must abort with a diagnostic report.
    X = np.full((4, 4, 2), 1e160)
    cfg = SolverConfig(rank=2, max_iters=5)
    with np.errstate(all="ignore"), pytest.raises(admm.SolverAbort) as excinfo:
        admm.solve(X, cfg)
    assert excinfo.value.report is not None
    assert excinfo.value.report.termination == "abort"


def test_solve_rejects_bad_inputs():
    with pytest.raises(ValueError):
        admm.solve(np.zeros((4, 4, 2)), SolverConfig(rank=5))
    bad = np.zeros((3, 3, 2))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        admm.solve(bad, SolverConfig(rank=2))
