"""CG on the stacked normal equations, Lanczos extraction, and Ritz filtering."""

import os

import numpy as np
import pytest

from helpers import dense_stacked, dense_tikhonov_solution, tikhonov_system
from iterreg.krylov import (CgBreakdownError, CgConfig, RitzPair,
                            pcg_solve, reorthogonalize_basis,
                            reorthogonalize_indexed, ritz_from_trace,
                            select_ritz, tridiagonal_from_trace)
from iterreg.operators import ContractError
from iterreg.preconditioner import SpectralPreconditioner


def test_identity_system_converges_in_one_iteration():
    # A = 0 and gamma = 1 make G^T G the identity; CG must land on the
    # prior right-hand side after exactly one step.
    b = np.array([2.0, -1.0, 0.5])
    sys = tikhonov_system(np.zeros((4, 3)), 1.0, rhs_prior=b)
    h, trace = pcg_solve(sys)
    np.testing.assert_allclose(h, b, rtol=1e-14)
    assert trace.iterations == 1
    assert trace.converged


def test_zero_rhs_returns_zero_without_iterating():
    sys = tikhonov_system(np.zeros((4, 3)), 1.0)
    h, trace = pcg_solve(sys)
    np.testing.assert_array_equal(h, np.zeros(3))
    assert trace.iterations == 0
    assert trace.converged


def test_cg_accuracy_contract_loose_and_tight():
    # Stop test ||r|| <= eps * gamma * ||h|| guarantees relative error
    # eps / (1 - eps) against the dense Tikhonov solution.
    rng = np.random.default_rng(21)
    for trial in range(10):
        n, m = 12, 8
        a = rng.standard_normal((n, m))
        gamma = float(rng.uniform(0.05, 2.0))
        data = rng.standard_normal(n)
        prior = rng.standard_normal(m)
        sys = tikhonov_system(a, gamma, data, prior)
        exact = dense_tikhonov_solution(a, gamma, data, prior)
        for eps in (1.0 / 3.0, 1e-9):
            h, trace = pcg_solve(sys, cfg=CgConfig(epsilon=eps))
            assert trace.converged
            bound = eps / (1.0 - eps) * np.linalg.norm(exact)
            # allow a whisker of float fuzz on top of the analytic bound
            assert np.linalg.norm(h - exact) <= bound + 1e-12 * np.linalg.norm(exact)


def test_full_spectrum_preconditioner_one_iteration():
    # With every eigenpair of A^T A captured, M equals G^T G and the
    # preconditioned operator is the identity: one CG iteration suffices.
    rng = np.random.default_rng(4)
    a = rng.standard_normal((10, 6))
    gamma = 0.7
    w, v = np.linalg.eigh(a.T @ a)
    precond = SpectralPreconditioner(gamma, w[::-1].copy(), v[:, ::-1].copy())
    sys = tikhonov_system(a, gamma, rhs_data=rng.standard_normal(10))
    h, trace = pcg_solve(sys, precond)
    assert trace.iterations == 1
    exact = dense_tikhonov_solution(a, gamma, sys.rhs_data, np.zeros(6))
    np.testing.assert_allclose(h, exact, rtol=1e-10, atol=1e-12)


def test_iteration_cap_flags_not_converged():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((15, 10))
    sys = tikhonov_system(a, 1e-4, rhs_data=rng.standard_normal(15))
    h, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-12, max_iterations=3))
    assert trace.iterations == 3
    assert not trace.converged


def test_misfit_norms_monotone():
    rng = np.random.default_rng(13)
    for trial in range(5):
        a = rng.standard_normal((20, 12))
        sys = tikhonov_system(a, 0.01, rhs_data=rng.standard_normal(20),
                              rhs_prior=rng.standard_normal(12))
        _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-9))
        mis = np.asarray(trace.misfit_norms)
        assert np.all(mis[1:] <= mis[:-1] * (1.0 + 1e-10) + 1e-300)


def test_lanczos_basis_orthonormal():
    rng = np.random.default_rng(34)
    a = rng.standard_normal((40, 30))
    sys = tikhonov_system(a, 1e-6, rhs_data=rng.standard_normal(40))
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-11, max_iterations=30))
    z = np.column_stack(trace.z_basis)
    gram = z.T @ z
    assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < 1e-10


def test_tridiagonal_matches_projected_operator():
    # Two routes to T_l: CG coefficient recurrences vs explicit projection
    # Z^T (G^T G) Z of the dense operator onto the Lanczos basis.
    rng = np.random.default_rng(55)
    a = rng.standard_normal((18, 12))
    gamma = 0.3
    sys = tikhonov_system(a, gamma, rhs_data=rng.standard_normal(18))
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-10, max_iterations=8))
    t = tridiagonal_from_trace(trace)
    z = np.column_stack(trace.z_basis)
    gtg = a.T @ a + gamma * np.eye(12)
    projected = z.T @ gtg @ z
    dense_t = np.diag(t.diag) + np.diag(t.offdiag, 1) + np.diag(t.offdiag, -1)
    np.testing.assert_allclose(dense_t, projected, atol=1e-8)


def test_single_iteration_ritz_data():
    # After l = 1 iterations: theta = 1/alpha_1, vector = z~^0, and the
    # residual bound is sqrt(beta_1)/alpha_1.
    rng = np.random.default_rng(2)
    a = np.diag([2.0, 1.0])
    sys = tikhonov_system(a, 1.0, rhs_data=rng.standard_normal(2))
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-14, max_iterations=1))
    assert trace.iterations == 1
    pairs = ritz_from_trace(trace)
    assert len(pairs) == 1
    pair = pairs[0]
    assert pair.theta == pytest.approx(1.0 / trace.alphas[0], rel=1e-14)
    np.testing.assert_allclose(np.abs(pair.vector), np.abs(trace.z_basis[0]),
                               rtol=1e-14)
    assert pair.residual_bound == pytest.approx(trace.final_beta_over_alpha,
                                                rel=1e-14)


def test_ritz_residual_identity_dense_oracle():
    # || G^T G (Z w) - theta (Z w) || equals (sqrt(beta_l)/alpha_l) |w(l)|
    # exactly for the Euclidean Lanczos basis; verify against a dense matvec.
    rng = np.random.default_rng(77)
    a = rng.standard_normal((25, 15))
    gamma = 0.05
    gtg = a.T @ a + gamma * np.eye(15)
    sys = tikhonov_system(a, gamma, rhs_data=rng.standard_normal(25))
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-13, max_iterations=6))
    for pair in ritz_from_trace(trace):
        direct = np.linalg.norm(gtg @ pair.vector - pair.theta * pair.vector)
        assert direct == pytest.approx(pair.residual_bound, abs=1e-9)


def test_ritz_pairs_sorted_and_inside_spectrum():
    rng = np.random.default_rng(91)
    a = rng.standard_normal((30, 20))
    gamma = 0.01
    sys = tikhonov_system(a, gamma, rhs_data=rng.standard_normal(30))
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-12, max_iterations=12))
    pairs = ritz_from_trace(trace)
    thetas = [p.theta for p in pairs]
    assert thetas == sorted(thetas, reverse=True)
    w = np.linalg.eigvalsh(a.T @ a + gamma * np.eye(20))
    assert thetas[0] <= w[-1] * (1.0 + 1e-10)
    assert thetas[-1] >= w[0] * (1.0 - 1e-10)


def test_select_ritz_separation_threshold():
    pairs = [RitzPair(5.0, np.array([1.0]), 0.0),
             RitzPair(1.05, np.array([1.0]), 0.0),
             RitzPair(1.0, np.array([1.0]), 0.0)]
    kept = select_ritz(pairs, separation_threshold=1.1, residual_tolerance=1.0)
    assert [p.theta for p in kept] == [5.0]


def test_select_ritz_residual_tolerance():
    # theta = 2 with bound 0.5 fails the relative test 0.5 <= 0.1 * 2.
    loose = RitzPair(2.0, np.array([1.0]), 0.5)
    tight = RitzPair(2.0, np.array([1.0]), 0.05)
    assert select_ritz([loose], 1.1, 0.1) == []
    assert select_ritz([tight], 1.1, 0.1) == [tight]


def test_reorthogonalize_nearly_dependent_pair():
    e1 = np.array([1.0, 0.0, 0.0])
    nearly = np.array([1.0, 1e-3, 0.0])
    basis = reorthogonalize_basis([e1, nearly])
    assert len(basis) == 2
    np.testing.assert_allclose(np.abs(basis[0]), [1.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(basis[1]), [0.0, 1.0, 0.0], atol=1e-12)
    gram = np.array(basis) @ np.array(basis).T
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-14)


def test_reorthogonalize_drops_duplicates():
    v = np.array([3.0, 4.0])
    kept, indices = reorthogonalize_indexed([v, v.copy()])
    assert len(kept) == 1
    assert indices == [0]


def test_reorthogonalize_input_validation():
    with pytest.raises(ContractError):
        reorthogonalize_basis([])
    with pytest.raises(ContractError):
        reorthogonalize_basis([np.zeros(3), np.zeros(3)])
    with pytest.raises(ContractError):
        reorthogonalize_basis([np.ones(3), np.ones(2)])


def test_breakdown_on_indefinite_preconditioner():
    class NegatingPrecond:
        def apply_inverse(self, r):
            return -r

    sys = tikhonov_system(np.eye(3), 1.0, rhs_data=np.ones(3))
    with pytest.raises(CgBreakdownError) as info:
        pcg_solve(sys, NegatingPrecond())
    assert info.value.trace is not None
    assert not info.value.trace.converged


def test_cg_config_validation():
    with pytest.raises(ContractError):
        CgConfig(epsilon=0.0)
    with pytest.raises(ContractError):
        CgConfig(epsilon=1.0)
    with pytest.raises(ContractError):
        CgConfig(max_iterations=0)


def test_trace_csv_dump(tmp_path):
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 4))
    sys = tikhonov_system(a, 0.5, rhs_data=rng.standard_normal(6))
    path = os.path.join(tmp_path, "trace.csv")
    _, trace = pcg_solve(sys, cfg=CgConfig(epsilon=1e-9, trace_path=path))
    with open(path) as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "l,residual_norm,alpha,beta"
    assert len(lines) == trace.iterations + 1


def test_ritz_requires_lanczos_collection():
    sys = tikhonov_system(np.eye(3), 1.0, rhs_data=np.ones(3))
    _, trace = pcg_solve(sys, cfg=CgConfig(collect_lanczos=False))
    with pytest.raises(ContractError):
        ritz_from_trace(trace)
