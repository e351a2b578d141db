"""Conjugate gradients on regularized normal equations, with Lanczos extraction.

Solves G^T G h = G^T g for a stacked Tikhonov operator G accessed only through
apply/adjoint calls, optionally preconditioned, with complete
reorthogonalization of the direction vectors. The CG coefficients double as a
Lanczos tridiagonalization of the (preconditioned) normal operator, from which
Ritz pairs are extracted together with an exact residual bound
||G^T G (Z w_i) - theta_i (Z w_i)|| = (sqrt(beta_l)/alpha_l) |w_i(l)|.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .operators import ContractError, as_vector


class CgBreakdownError(RuntimeError):
    """CG lost positive definiteness or produced a non-finite coefficient.

    Carries the partial solution and trace so a caller can salvage the run.
    """

    def __init__(self, message, solution=None, trace=None):
        super().__init__(message)
        self.solution = solution
        self.trace = trace


@dataclass
class CgConfig:
    """Tolerances and switches for ``pcg_solve``.

    ``epsilon`` enters the stop test ``||r^l|| <= epsilon * stop_scale *
    ||h^l||``; when ``stop_scale`` is a lower bound for the spectrum of the
    normal operator this guarantees relative accuracy ``epsilon/(1-epsilon)``
    against the exact solution.
    """

    epsilon: float = 1.0 / 3.0
    max_iterations: int = 200
    reorthogonalize: bool = True
    collect_lanczos: bool = True
    trace_path: str | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ContractError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.max_iterations < 1:
            raise ContractError("max_iterations must be at least 1")


@dataclass
class CgTrace:
    """Per-solve ledger: CG coefficients, Lanczos basis, and norm histories.

    ``alphas`` holds alpha_1..alpha_l and ``betas`` holds beta_1..beta_{l-1};
    the stray beta_l of the last iteration only enters
    ``final_beta_over_alpha`` = sqrt(beta_l)/alpha_l, the scale of the Ritz
    residual bounds. ``z_basis`` stores the normalized direction vectors
    z~^0..z~^{l-1} (orthonormal in the M inner product).
    """

    alphas: list
    betas: list
    z_basis: list | None
    final_beta_over_alpha: float
    iterations: int
    converged: bool
    residual_norms: list
    misfit_norms: list


class HouseholderBasis:
    """Orthonormal basis grown one vector at a time via Householder reflectors.

    Keeping the reflector chain instead of raw Gram-Schmidt factors makes the
    projection onto the orthogonal complement exact up to round-off even for
    nearly dependent input.
    """

    def __init__(self, dim):
        self.dim = int(dim)
        self._reflectors = []

    @property
    def count(self):
        return len(self._reflectors)

    def _forward(self, x):
        for v in self._reflectors:
            x = x - (2.0 * (v @ x)) * v
        return x

    def _backward(self, x):
        for v in reversed(self._reflectors):
            x = x - (2.0 * (v @ x)) * v
        return x

    def project_out(self, x):
        """Component of ``x`` orthogonal to the current basis."""
        x = np.asarray(x, dtype=float)
        if not self._reflectors:
            return x.copy()
        y = self._forward(x.copy())
        y[: self.count] = 0.0
        return self._backward(y)

    def add(self, x, drop_tol=1e-12):
        """Extend the basis with the normalized complement of ``x``.

        Returns ``(q, pnorm)`` where q is the new exactly-orthonormal basis
        vector aligned with the complement of x and pnorm its unnormalized
        length, or ``(None, pnorm)`` when x is numerically dependent on the
        basis (``pnorm <= drop_tol * ||x||``) or the space is exhausted.
        """
        x = np.asarray(x, dtype=float)
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0 or self.count >= self.dim:
            return None, 0.0
        y = self._forward(x.copy())
        k = self.count
        tail = y[k:]
        pnorm = float(np.linalg.norm(tail))
        if pnorm <= drop_tol * xnorm:
            return None, pnorm
        alpha = -np.copysign(pnorm, tail[0])
        w = tail.copy()
        w[0] -= alpha
        v = np.zeros(self.dim)
        v[k:] = w / np.linalg.norm(w)
        self._reflectors.append(v)
        q = np.zeros(self.dim)
        q[k] = 1.0
        q = self._backward(q)
        if alpha < 0.0:
            q = -q
        return q, pnorm


def reorthogonalize_indexed(vectors, drop_tol=1e-12):
    """Householder-QR orthonormalization, reporting which inputs survived.

    Returns ``(kept, indices)``: orthonormal vectors spanning the input space
    and the positions of the inputs that contributed them. Vectors whose
    component orthogonal to the preceding ones falls below
    ``drop_tol * ||vector||`` are dropped.
    """
    vectors = [as_vector(v, name="basis vector") for v in vectors]
    if not vectors:
        raise ContractError("cannot orthonormalize an empty vector set")
    if all(np.linalg.norm(v) == 0.0 for v in vectors):
        raise ContractError("cannot orthonormalize an all-zero vector set")
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise ContractError("basis vectors have mixed lengths")
    basis = HouseholderBasis(dims.pop())
    kept, indices = [], []
    for i, v in enumerate(vectors):
        q, _ = basis.add(v, drop_tol=drop_tol)
        if q is not None:
            kept.append(q)
            indices.append(i)
    return kept, indices


def reorthogonalize_basis(vectors, drop_tol=1e-12):
    """Orthonormal set spanning the same subspace as ``vectors``."""
    kept, _ = reorthogonalize_indexed(vectors, drop_tol=drop_tol)
    return kept


@dataclass
class Tridiagonal:
    """Symmetric tridiagonal Lanczos matrix T_l recovered from CG coefficients."""

    diag: np.ndarray
    offdiag: np.ndarray

    def eigh(self):
        """Eigenvalues (ascending) and eigenvectors of T_l."""
        if self.diag.shape[0] == 1:
            return self.diag.copy(), np.ones((1, 1))
        return scipy.linalg.eigh_tridiagonal(self.diag, self.offdiag)


def tridiagonal_from_trace(trace: CgTrace) -> Tridiagonal:
    """Assemble T_l: diag = (1/a_1, 1/a_{j+1} + b_j/a_j), offdiag = -sqrt(b_j)/a_j."""
    if trace.iterations < 1:
        raise ContractError("trace holds no completed CG iterations")
    a = np.asarray(trace.alphas, dtype=float)
    b = np.asarray(trace.betas, dtype=float)
    diag = np.empty(a.shape[0])
    diag[0] = 1.0 / a[0]
    if a.shape[0] > 1:
        diag[1:] = 1.0 / a[1:] + b / a[:-1]
    offdiag = -np.sqrt(b) / a[:-1] if a.shape[0] > 1 else np.empty(0)
    return Tridiagonal(diag, offdiag)


@dataclass
class RitzPair:
    """Approximate eigenpair of the (preconditioned) normal operator.

    ``residual_bound`` is the exact value of ||G^T G (Z w) - theta (Z w)||
    when the basis is Euclidean-orthonormal (identity preconditioner).
    """

    theta: float
    vector: np.ndarray
    residual_bound: float


def ritz_from_trace(trace: CgTrace):
    """Ritz pairs of the normal operator from a Lanczos-collecting CG run.

    Returns pairs sorted by descending theta. Requires the trace to carry the
    z basis; raises a diagnostic error when T_l fails to be positive definite,
    which signals lost orthogonality.
    """
    if trace.z_basis is None or len(trace.z_basis) != trace.iterations:
        raise ContractError("trace was collected without a complete Lanczos basis")
    t = tridiagonal_from_trace(trace)
    theta, vecs = t.eigh()
    if theta[0] <= 0.0:
        raise ContractError(
            "tridiagonal matrix is not positive definite; "
            "orthogonality was lost during CG"
        )
    z = np.column_stack(trace.z_basis)
    l = trace.iterations
    pairs = []
    for i in range(l - 1, -1, -1):
        pairs.append(RitzPair(
            theta=float(theta[i]),
            vector=z @ vecs[:, i],
            residual_bound=float(trace.final_beta_over_alpha * abs(vecs[l - 1, i])),
        ))
    return pairs


def select_ritz(pairs, separation_threshold, residual_tolerance):
    """Keep pairs separated from the cluster at 1 and converged tightly enough.

    A pair survives iff ``theta >= separation_threshold`` and
    ``residual_bound <= residual_tolerance * theta``. Order is preserved.
    """
    if separation_threshold <= 0.0 or residual_tolerance <= 0.0:
        raise ContractError("selection thresholds must be positive")
    return [
        p for p in pairs
        if p.theta >= separation_threshold
        and p.residual_bound <= residual_tolerance * p.theta
    ]


def _dump_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["l", "residual_norm", "alpha", "beta"])
        betas_all = list(trace.betas) + [np.nan]
        for i, alpha in enumerate(trace.alphas):
            beta = betas_all[i] if i < len(trace.betas) else np.nan
            writer.writerow([i + 1, repr(trace.residual_norms[i + 1]),
                             repr(alpha), repr(beta)])


def pcg_solve(sys, precond=None, rhs=None, cfg: CgConfig | None = None):
    """Preconditioned CG on the normal equations G^T G h = G^T g.

    Parameters
    ----------
    sys : stacked system
        Provides ``apply``, ``apply_adjoint``, ``stacked_rhs``, ``domain_dim``
        and ``stop_scale`` (a lower bound of the spectrum of G^T G; the
        Tikhonov system exposes gamma).
    precond : SpectralPreconditioner or None
        Applied from the left through its ``apply_inverse``. ``None`` runs
        plain CGNE; symmetric two-sided preconditioning is achieved by
        wrapping ``sys`` instead, which keeps reorthogonalization Euclidean.
    rhs : array, optional
        Stacked right-hand side g; defaults to ``sys.stacked_rhs()``.
    cfg : CgConfig

    Returns
    -------
    (h, trace) : solution estimate and a CgTrace. Hitting the iteration cap
    flags ``trace.converged = False`` instead of raising; genuine breakdowns
    raise ``CgBreakdownError`` carrying the partial results.

    Notes
    -----
    The loop runs while ``||r^l|| > epsilon * stop_scale * ||h^l||``; with
    h^0 = 0 the first iteration always executes. Left-preconditioned runs
    reorthogonalize in the M inner product via stored (z~, r~) pairs; plain
    runs use the Householder basis, which keeps the stored z~ vectors exactly
    orthonormal.
    """
    if cfg is None:
        cfg = CgConfig()
    g = sys.stacked_rhs() if rhs is None else as_vector(rhs, sys.range_dim, "rhs")
    m_dim = sys.domain_dim
    stop_scale = float(getattr(sys, "stop_scale", 1.0))

    alphas, betas_all = [], []
    residual_norms, misfit_norms = [], []
    normalized = []

    h = np.zeros(m_dim)
    d = g.copy()
    r = sys.apply_adjoint(d)

    euclidean = precond is None
    basis = HouseholderBasis(m_dim) if (euclidean and cfg.reorthogonalize) else None
    zt_store, rt_store = [], []

    def finalize(converged):
        if alphas:
            fba = float(np.sqrt(max(betas_all[-1], 0.0)) / alphas[-1])
            tr_betas = betas_all[:-1]
        else:
            fba = 0.0
            tr_betas = []
        zb = list(normalized[: len(alphas)]) if cfg.collect_lanczos else None
        trace = CgTrace(
            alphas=list(alphas), betas=list(tr_betas), z_basis=zb,
            final_beta_over_alpha=fba, iterations=len(alphas),
            converged=converged, residual_norms=list(residual_norms),
            misfit_norms=list(misfit_norms),
        )
        if cfg.trace_path:
            _dump_trace(cfg.trace_path, trace)
        return trace

    # iteration-0 quantities: z^0 = M^{-1} r^0, rho_0 = <r^0, z^0>
    if euclidean:
        if basis is not None:
            q0, pnorm0 = basis.add(r)
            if q0 is None:
                return h, finalize(True)
            z = pnorm0 * q0
            r = z
            rho = pnorm0 * pnorm0
            normalized.append(q0)
        else:
            z = r.copy()
            rho = float(r @ r)
            if rho > 0.0 and cfg.collect_lanczos:
                normalized.append(r / np.sqrt(rho))
        r_norm = float(np.sqrt(max(rho, 0.0)))
    else:
        z = precond.apply_inverse(r)
        rho = float(r @ z)
        r_norm = float(np.linalg.norm(r))
        if rho > 0.0:
            s = 1.0 / np.sqrt(rho)
            zt_store.append(z * s)
            rt_store.append(r * s)
            normalized.append(zt_store[-1])

    residual_norms.append(r_norm)
    misfit_norms.append(float(np.linalg.norm(d)))
    if r_norm == 0.0:
        return h, finalize(True)
    if not np.isfinite(rho) or rho <= 0.0:
        raise CgBreakdownError(
            f"initial <r, z> = {rho} is not positive; preconditioner is not SPD",
            solution=h, trace=finalize(False))

    p = z.copy()
    h_norm = 0.0
    converged = False

    while True:
        if r_norm <= cfg.epsilon * stop_scale * h_norm:
            converged = True
            break
        if len(alphas) >= cfg.max_iterations:
            converged = False
            break

        q = sys.apply(p)
        qq = float(q @ q)
        if qq == 0.0 or not np.isfinite(qq):
            raise CgBreakdownError(
                "search direction collapsed: ||G p||^2 = " + repr(qq),
                solution=h, trace=finalize(False))
        alpha = rho / qq
        if not (0.0 < alpha < 1e16):
            raise CgBreakdownError(
                f"CG coefficient alpha = {alpha} outside (0, 1e16)",
                solution=h, trace=finalize(False))
        h = h + alpha * p
        d = d - alpha * q
        r = sys.apply_adjoint(d)

        if euclidean:
            if basis is not None:
                qvec, pnorm = basis.add(r)
                if qvec is None:
                    # Krylov space exhausted: the residual is numerically
                    # dependent on swept directions, i.e. converged.
                    z = np.zeros(m_dim)
                    r = z
                    rho_new = 0.0
                else:
                    z = pnorm * qvec
                    r = z
                    rho_new = pnorm * pnorm
                    normalized.append(qvec)
            else:
                z = r
                rho_new = float(r @ r)
                if rho_new > 0.0 and cfg.collect_lanczos:
                    normalized.append(r / np.sqrt(rho_new))
            r_norm_new = float(np.sqrt(max(rho_new, 0.0)))
        else:
            z = precond.apply_inverse(r)
            if cfg.reorthogonalize and zt_store:
                for _ in range(2):
                    for zt, rt in zip(zt_store, rt_store):
                        c = float(rt @ z)
                        z = z - c * zt
                        r = r - c * rt
            rho_new = float(r @ z)
            if not np.isfinite(rho_new) or rho_new < 0.0:
                raise CgBreakdownError(
                    f"<r, z> = {rho_new} lost positivity",
                    solution=h, trace=finalize(False))
            if rho_new > 0.0:
                s = 1.0 / np.sqrt(rho_new)
                zt_store.append(z * s)
                rt_store.append(r * s)
                normalized.append(zt_store[-1])
            r_norm_new = float(np.linalg.norm(r))

        beta = rho_new / rho
        alphas.append(alpha)
        betas_all.append(beta)
        rho = rho_new
        r_norm = r_norm_new
        h_norm = float(np.linalg.norm(h))
        p = z + beta * p

        residual_norms.append(r_norm)
        misfit = float(np.linalg.norm(d))
        if misfit > misfit_norms[-1] * (1.0 + 1e-10) + 1e-300:
            warnings.warn(
                "CG data misfit increased between iterations; "
                "round-off is degrading the run", RuntimeWarning)
        misfit_norms.append(misfit)
        if rho == 0.0:
            converged = True
            break

    return h, finalize(converged)
