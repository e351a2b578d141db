"""Synthetic exponentially ill-posed test problems, noise generation, and a
dense brute-force oracle against which the matrix-free code is verified.

Three model families: a linear map with prescribed exponentially decaying
singular values (cosine domain basis, random data basis), a periodic
Gaussian convolution (whose cosine/sine mode pairs force double
eigenvalues), and a nonlinear composite F(x) = K s(x) with the pointwise
cubic s(t) = t + c3 t^3 wrapped around either linear map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .operators import ContractError, ForwardModel, as_vector

DENSE_ORACLE_MAX_DIM = 300

_SIGMA_FLOOR = 1e-14


class OracleRefusal(ValueError):
    """A dense-oracle computation was requested above the feasibility cap."""


@dataclass
class Problem:
    """A shipped test problem: model, ground truth, and oracle access.

    ``matrix`` is the dense operator for linear problems; nonlinear problems
    provide ``dense_jacobian`` (x -> dense A_x) instead. ``params`` records
    enough to reconstruct the instance.
    """

    model: ForwardModel
    truth: np.ndarray
    kind: str
    params: dict
    matrix: np.ndarray | None = None
    dense_jacobian: Callable | None = None

    def describe(self):
        """Compact provenance snapshot for experiment records."""
        out = {"kind": self.kind, "domain_dim": self.model.domain_dim,
               "range_dim": self.model.range_dim}
        out.update(self.params)
        return out

    def jacobian_matrix(self, x=None):
        """Dense Jacobian at x (or the operator itself when linear)."""
        if self.matrix is not None:
            return self.matrix
        if self.dense_jacobian is None:
            raise OracleRefusal("problem carries no dense operator access")
        if x is None:
            raise ContractError("nonlinear problem needs a linearization point")
        return self.dense_jacobian(np.asarray(x, dtype=float))


def two_bump_profile(m, centers=(0.30, 0.72), widths=(0.12, 0.09),
                     heights=(1.0, 0.8)):
    """Smooth sum-of-two-Gaussians profile sampled on a length-m grid."""
    t = (np.arange(m) + 0.5) / m
    out = np.zeros(m)
    for c, w, h in zip(centers, widths, heights):
        out += h * np.exp(-(((t - c) / w) ** 2))
    return out


def random_orthogonal(dim, rng):
    """Haar-ish orthogonal matrix via QR with a deterministic sign fix."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def cosine_basis(m):
    """Orthonormal cosine (DCT-II) basis; column j oscillates j times."""
    t = np.arange(m) + 0.5
    u = np.cos(np.pi * np.outer(t, np.arange(m)) / m)
    u[:, 0] *= np.sqrt(1.0 / m)
    u[:, 1:] *= np.sqrt(2.0 / m)
    return u


def make_diagonal_problem(m=100, n=200, decay_a=0.25, scale=1.0, seed=0,
                          singular_values=None):
    """Linear model with prescribed SVD A = V diag(sigma) U^T.

    sigma_j = scale * exp(-decay_a * j), floored at 1e-14 * sigma_0 so the
    operator keeps full rank. The domain basis U is the frequency-ordered
    cosine basis, so the map damps oscillatory components exponentially the
    way a smoothing operator does; the data-side basis V is seeded random.
    The truth is the smooth two-bump profile, whose cosine coefficients
    decay fast, so it is genuinely recoverable from low-index content.
    """
    if m < 1 or n < m:
        raise ContractError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    if singular_values is None:
        if not decay_a > 0:
            raise ContractError("decay_a must be positive")
        sigma = scale * np.exp(-decay_a * np.arange(m))
    else:
        sigma = np.asarray(singular_values, dtype=float)
        if sigma.shape != (m,) or np.any(sigma <= 0) or np.any(np.diff(sigma) > 0):
            raise ContractError(
                "singular_values must be m positive nonincreasing reals")
    sigma = np.maximum(sigma, _SIGMA_FLOOR * sigma[0])

    u = cosine_basis(m)
    v = random_orthogonal(n, rng)[:, :m]
    a = (v * sigma) @ u.T
    truth = two_bump_profile(m)

    def linearize(_x):
        return (lambda vec: a @ vec), (lambda w: a.T @ w)

    model = ForwardModel(m, n, lambda x: a @ x, linearize, name="diagonal")
    return Problem(
        model=model, truth=truth, kind="diagonal",
        params={"m": m, "n": n, "decay_a": decay_a, "scale": scale,
                "seed": seed},
        matrix=a,
    )


def make_convolution_problem(n=64, kernel_width=0.05, seed=0):
    """Periodic Gaussian convolution on n grid points (M = N = n).

    The operator is a symmetric circulant, so its eigenvalues are the real
    Fourier symbol values and every non-constant, non-Nyquist mode comes as
    a cosine/sine pair with a doubly degenerate eigenvalue. The symbol is
    floored at 1e-14 of its peak to keep full rank.
    """
    if n < 8:
        raise ContractError(f"grid size must be at least 8, got {n}")
    if not kernel_width > 0:
        raise ContractError("kernel_width must be positive")
    rng = np.random.default_rng(seed)

    idx = np.arange(n)
    dist = np.minimum(idx, n - idx) / n
    kernel = np.exp(-0.5 * (dist / kernel_width) ** 2)
    kernel /= kernel.sum()
    symbol = np.fft.rfft(kernel).real
    symbol = np.maximum(symbol, _SIGMA_FLOOR * symbol.max())
    kernel_eff = np.fft.irfft(symbol, n)

    def apply(x):
        return np.fft.irfft(np.fft.rfft(x) * symbol, n)

    def linearize(_x):
        return apply, apply

    jitter = rng.uniform(-0.03, 0.03, size=2)
    truth = two_bump_profile(n, centers=(0.30 + jitter[0], 0.72 + jitter[1]))

    model = ForwardModel(n, n, apply, linearize, name="convolution")
    return Problem(
        model=model, truth=truth, kind="convolution",
        params={"n": n, "kernel_width": kernel_width, "seed": seed},
        matrix=scipy.linalg.circulant(kernel_eff),
    )


def convolution_symbol(problem: Problem):
    """Fourier symbol (eigenvalues by frequency) of a convolution problem."""
    if problem.kind != "convolution":
        raise ContractError("not a convolution problem")
    n = problem.model.domain_dim
    return np.fft.rfft(problem.matrix[:, 0]).real


def make_nonlinear_composite(base: Problem, c3=0.1, truth=None):
    """Nonlinear model F(x) = K s(x) with s(t) = t + c3 t^3 around a linear K.

    The Jacobian is A_x = K diag(s'(x)) with s'(t) = 1 + 3 c3 t^2, applied
    and adjointed matrix-free. c3 = 0 degenerates to the base model exactly.
    The default c3 = 0.1 keeps a frozen linearization usable across the
    build schedule; much stronger cubics make stale Jacobians diverge under
    small regularization.
    """
    if base.matrix is None:
        raise ContractError("composite needs a linear base problem")
    if c3 < 0:
        raise ContractError("c3 must be nonnegative")
    k_mat = base.matrix
    m = base.model.domain_dim
    n = base.model.range_dim
    c3 = float(c3)

    def evaluate(x):
        return k_mat @ (x + c3 * x ** 3)

    def linearize(x):
        sp = 1.0 + 3.0 * c3 * x ** 2

        def apply(v):
            return k_mat @ (sp * v)

        def adjoint(w):
            return sp * (k_mat.T @ w)

        return apply, adjoint

    model = ForwardModel(m, n, evaluate, linearize,
                         name=f"{base.model.name}+cubic")
    params = {"c3": c3, "base": base.kind}
    params.update({f"base_{k}": v for k, v in base.params.items()})
    return Problem(
        model=model,
        truth=base.truth.copy() if truth is None else as_vector(truth, m, "truth"),
        kind=f"nonlinear-{base.kind}",
        params=params,
        dense_jacobian=lambda x: k_mat * (1.0 + 3.0 * c3 * x ** 2),
    )


def generate_noise(sigma, dim, count=1, seed=0):
    """``count`` independent mean-zero Gaussian vectors with component std sigma."""
    if sigma < 0:
        raise ContractError("sigma must be nonnegative")
    if count < 1:
        raise ContractError("count must be at least 1")
    rng = np.random.default_rng(seed)
    return [sigma * rng.standard_normal(dim) for _ in range(count)]


def noise_sigma_for_level(y, level):
    """Component std giving a relative noise level ||eps||/||y|| ~= level."""
    y = np.asarray(y, dtype=float)
    return level * np.linalg.norm(y) / np.sqrt(y.shape[0])


class DenseOracle:
    """Direct dense computations: exact Tikhonov solves, spectra, traces.

    Deliberately refuses domains above DENSE_ORACLE_MAX_DIM; everything here
    is O(dim^3) and exists only to check the matrix-free code.
    """

    def __init__(self, matrix):
        a = np.asarray(matrix, dtype=float)
        if a.ndim != 2:
            raise ContractError("oracle needs a dense 2-D operator")
        if a.shape[1] > DENSE_ORACLE_MAX_DIM:
            raise OracleRefusal(
                f"domain dimension {a.shape[1]} exceeds the dense cap "
                f"{DENSE_ORACLE_MAX_DIM}")
        self.a = a
        self.gram = a.T @ a
        self._eig = None

    @classmethod
    def for_problem(cls, problem: Problem, x=None):
        return cls(problem.jacobian_matrix(x))

    def gram_spectrum(self):
        """Eigenvalues (descending) and eigenvectors of A^T A."""
        if self._eig is None:
            w, v = scipy.linalg.eigh(self.gram)
            self._eig = (w[::-1].copy(), v[:, ::-1].copy())
        return self._eig

    def tikhonov_solve(self, gamma, y_part, prior=None):
        """Direct factorization solve of (A^T A + gamma I) h = A^T y + gamma b."""
        if not gamma > 0:
            raise ContractError("gamma must be positive")
        y_part = as_vector(y_part, self.a.shape[0], "data part")
        rhs = self.a.T @ y_part
        if prior is not None:
            rhs = rhs + gamma * as_vector(prior, self.a.shape[1], "prior part")
        c, low = scipy.linalg.cho_factor(
            self.gram + gamma * np.eye(self.a.shape[1]))
        return scipy.linalg.cho_solve((c, low), rhs)

    def r_matrix(self, gamma):
        """Exact regularized inverse R = (A^T A + gamma I)^{-1} A^T."""
        if not gamma > 0:
            raise ContractError("gamma must be positive")
        c, low = scipy.linalg.cho_factor(
            self.gram + gamma * np.eye(self.a.shape[1]))
        return scipy.linalg.cho_solve((c, low), self.a.T)

    def trace_phi(self, sigma, gamma):
        """Exact sqrt(E ||R eps||^2) = sigma * sqrt(trace(R R^T)) for white noise."""
        r = self.r_matrix(gamma)
        return float(sigma * np.sqrt(np.sum(r * r)))

    def trace_phi_cov(self, cov, gamma):
        """General-covariance exact value sqrt(trace(R Cov R^T))."""
        r = self.r_matrix(gamma)
        return float(np.sqrt(np.trace(r @ np.asarray(cov, dtype=float) @ r.T)))

    def preconditioned_gram_spectrum(self, precond_dense, gamma):
        """Eigenvalues of M^{-1}(A^T A + gamma I) via the generalized problem.

        Solves the pencil (A^T A + gamma I) x = mu M x, which is the second,
        independent route to the preconditioned spectrum (the first being the
        symmetric similarity transform in the preconditioner module).
        """
        gtg = self.gram + gamma * np.eye(self.a.shape[1])
        return scipy.linalg.eigh(gtg, np.asarray(precond_dense, dtype=float),
                                 eigvals_only=True)
