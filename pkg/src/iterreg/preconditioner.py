"""Spectral preconditioners assembled from approximate eigenpairs.

M = gamma I + sum_j lambda_j u_j u_j^T with orthonormal u_j maps the captured
eigenvalues of the regularized normal operator G^T G = A^T A + gamma I onto
the cluster at 1 and leaves the remaining spectrum at 1 + lambda/gamma.
Inverse and square roots are available in closed form, so applications cost
O(#pairs * dim) with no factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .krylov import reorthogonalize_indexed
from .operators import ContractError, as_vector

# Newcomers whose component orthogonal to the existing span is below this
# fraction duplicate a known direction and are dropped on merge.
MERGE_DROP_TOL = 2e-5

_RELATIVE_LAMBDA_FLOOR = 1e-14


class SpectralPreconditioner:
    """Immutable low-rank spectral shift M = gamma I + sum lambda_j u_j u_j^T.

    Parameters
    ----------
    gamma : float
        Positive shift; every eigenvalue of M is at least gamma.
    lambdas : array-like, shape (J,)
        Positive eigenvalue estimates. Values below 1e-14 times the largest
        are discarded together with their vectors.
    vectors : array-like, shape (dim, J), or list of vectors
        Orthonormal columns u_j.
    left_vectors : list of arrays or None, optional
        Per-pair normalized data-space images w_j = A u_j / ||A u_j||, used by
        the propagated-noise estimators. Entries may be None until
        ``attach_left_vectors`` fills them in.
    """

    def __init__(self, gamma, lambdas, vectors, left_vectors=None, validate=True):
        if not (gamma > 0 and np.isfinite(gamma)):
            raise ContractError(f"gamma must be positive and finite, got {gamma}")
        self.gamma = float(gamma)

        lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
            # asarray keeps with_gamma alias-sharing the pair arrays
            u = np.asarray(vectors, dtype=float)
        elif len(lam) == 0:
            u = np.zeros((self._infer_dim(vectors), 0))
        else:
            u = np.column_stack([as_vector(v, name="eigenvector") for v in vectors])
        if u.shape[1] != lam.shape[0]:
            raise ContractError(
                f"{lam.shape[0]} values for {u.shape[1]} vectors")
        if left_vectors is not None and len(left_vectors) != lam.shape[0]:
            raise ContractError("left_vectors length must match the pair count")

        if lam.shape[0]:
            if validate and (np.any(lam <= 0) or not np.all(np.isfinite(lam))):
                raise ContractError("all lambda values must be positive and finite")
            keep = lam >= _RELATIVE_LAMBDA_FLOOR * lam.max()
            if not np.all(keep):
                lam = lam[keep]
                u = u[:, keep]
                if left_vectors is not None:
                    left_vectors = [w for w, k in zip(left_vectors, keep) if k]
        if validate and lam.shape[0]:
            gram = u.T @ u
            defect = np.max(np.abs(gram - np.eye(lam.shape[0])))
            if defect > 1e-8:
                raise ContractError(
                    f"eigenvectors are not orthonormal (defect {defect:.2e})")
            if left_vectors is not None:
                for w in left_vectors:
                    if w is not None and abs(np.linalg.norm(w) - 1.0) > 1e-8:
                        raise ContractError("left vectors must be normalized")

        self.lambdas = lam
        self.vectors = u
        self.left_vectors = list(left_vectors) if left_vectors is not None else None

    @staticmethod
    def _infer_dim(vectors):
        for v in vectors:
            return np.asarray(v).shape[0]
        raise ContractError("cannot infer dimension from an empty vector set")

    @classmethod
    def empty(cls, gamma, dim):
        """Pair-free preconditioner M = gamma I."""
        return cls(gamma, np.empty(0), np.zeros((int(dim), 0)), validate=False)

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def pair_count(self):
        return int(self.lambdas.shape[0])

    @property
    def pairs(self):
        return [(float(l), self.vectors[:, j]) for j, l in enumerate(self.lambdas)]

    @property
    def has_left_vectors(self):
        return (self.left_vectors is not None
                and all(w is not None for w in self.left_vectors))

    def with_gamma(self, gamma):
        """Same pair set under a different shift (the per-step gamma_k)."""
        return SpectralPreconditioner(gamma, self.lambdas, self.vectors,
                                      self.left_vectors, validate=False)

    def _shifted_apply(self, x, base, weights):
        x = as_vector(x, self.dim, "input")
        if self.pair_count == 0:
            return base * x
        coeff = self.vectors.T @ x
        return base * x + self.vectors @ (weights * coeff)

    def apply(self, x):
        """M x = gamma x + sum lambda_j <x, u_j> u_j."""
        return self._shifted_apply(x, self.gamma, self.lambdas)

    def apply_inverse(self, x):
        """M^{-1} x = x/gamma + sum (1/(lambda_j+gamma) - 1/gamma) <x,u_j> u_j."""
        return self._shifted_apply(
            x, 1.0 / self.gamma,
            1.0 / (self.lambdas + self.gamma) - 1.0 / self.gamma)

    def apply_inv_sqrt(self, x):
        g = np.sqrt(self.gamma)
        return self._shifted_apply(
            x, 1.0 / g, 1.0 / np.sqrt(self.lambdas + self.gamma) - 1.0 / g)

    def apply_sqrt(self, x):
        g = np.sqrt(self.gamma)
        return self._shifted_apply(
            x, g, np.sqrt(self.lambdas + self.gamma) - g)

    def dense(self):
        """Materialized M, for oracle-scale verification only."""
        m = self.gamma * np.eye(self.dim)
        if self.pair_count:
            m = m + (self.vectors * self.lambdas) @ self.vectors.T
        return m

    def attach_left_vectors(self, jac):
        """Fill in missing w_j = A u_j / ||A u_j|| via one Jacobian apply each."""
        current = self.left_vectors or [None] * self.pair_count
        out = []
        for j, w in enumerate(current):
            if w is not None:
                out.append(w)
                continue
            img = jac.apply(self.vectors[:, j])
            norm = np.linalg.norm(img)
            if norm == 0.0:
                raise ContractError(
                    "captured eigenvector lies in the Jacobian null space")
            out.append(img / norm)
        return SpectralPreconditioner(self.gamma, self.lambdas, self.vectors,
                                      out, validate=False)

    def save(self, path):
        """Text snapshot: header with dims, then gamma, lambdas, vectors."""
        left_ok = self.has_left_vectors and self.pair_count > 0
        left_dim = len(self.left_vectors[0]) if left_ok else 0
        lines = [
            "spectral-preconditioner v1",
            f"dim={self.dim} pairs={self.pair_count} left_dim={left_dim}",
            f"gamma={self.gamma!r}",
        ]
        for l in self.lambdas:
            lines.append(f"lambda={float(l)!r}")
        for j in range(self.pair_count):
            lines.append(" ".join(repr(float(v)) for v in self.vectors[:, j]))
        if left_ok:
            for w in self.left_vectors:
                lines.append(" ".join(repr(float(v)) for v in w))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "spectral-preconditioner v1":
            raise ContractError(f"{path} is not a preconditioner snapshot")
        header = dict(part.split("=") for part in lines[1].split())
        dim = int(header["dim"])
        pairs = int(header["pairs"])
        left_dim = int(header["left_dim"])
        gamma = float(lines[2].split("=", 1)[1])
        lam = [float(lines[3 + j].split("=", 1)[1]) for j in range(pairs)]
        base = 3 + pairs
        vecs = np.zeros((dim, pairs))
        for j in range(pairs):
            vecs[:, j] = [float(tok) for tok in lines[base + j].split()]
        left = None
        if left_dim:
            left = []
            for j in range(pairs):
                left.append(np.array(
                    [float(tok) for tok in lines[base + pairs + j].split()]))
        return cls(gamma, np.asarray(lam), vecs, left, validate=False)


class TwoSidedSystem:
    """Stacked system conjugated by M^{-1/2} on both sides.

    CG on G M^{-1/2} runs in the plain Euclidean inner product (so
    reorthogonalization stays exact) and its normal operator
    M^{-1/2} G^T G M^{-1/2} has spectrum bounded below by 1 for exact pairs,
    hence ``stop_scale`` is 1. Solutions pull back via h = M^{-1/2} h~.
    """

    stop_scale = 1.0

    def __init__(self, sys, precond):
        if precond.dim != sys.domain_dim:
            raise ContractError("preconditioner dimension mismatch")
        self.sys = sys
        self.precond = precond

    @property
    def domain_dim(self):
        return self.sys.domain_dim

    @property
    def range_dim(self):
        return self.sys.range_dim

    def apply(self, v):
        return self.sys.apply(self.precond.apply_inv_sqrt(v))

    def apply_adjoint(self, d):
        return self.precond.apply_inv_sqrt(self.sys.apply_adjoint(d))

    def stacked_rhs(self):
        return self.sys.stacked_rhs()

    def pull_back(self, h_transformed):
        """Map the transformed solution back: h = M^{-1/2} h~."""
        return self.precond.apply_inv_sqrt(h_transformed)


def ritz_to_eigenpair(mu, gamma, u):
    """Back-map a preconditioned Ritz value: (mu, u) -> (gamma*(mu-1), u).

    Values mu <= 1 belong to the cluster of already-captured directions and
    carry no spectral information; they are rejected.
    """
    if not mu > 1.0:
        raise ContractError(
            f"Ritz value {mu} is not separated from the cluster at 1")
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    return gamma * (mu - 1.0), u


def merge_pairs(existing: SpectralPreconditioner, new_pairs, new_gamma):
    """Union of the existing pair set with newly harvested pairs.

    The stacked vectors are reorthogonalized (existing ones first, so they
    pass through unchanged); each retained vector keeps the lambda of the
    pair that contributed it, and newcomers numerically dependent on the span
    are dropped together with their values. Existing left vectors survive;
    newcomers get a None slot for ``attach_left_vectors`` to fill.
    """
    lambdas = [float(l) for l in existing.lambdas]
    vectors = [existing.vectors[:, j] for j in range(existing.pair_count)]
    lefts = (list(existing.left_vectors) if existing.left_vectors is not None
             else [None] * existing.pair_count)
    for lam, u in new_pairs:
        if not lam > 0:
            raise ContractError(f"merged eigenvalue must be positive, got {lam}")
        lambdas.append(float(lam))
        vectors.append(as_vector(u, existing.dim, "merged eigenvector"))
        lefts.append(None)
    if not vectors:
        return SpectralPreconditioner.empty(new_gamma, existing.dim)
    kept, indices = reorthogonalize_indexed(vectors, drop_tol=MERGE_DROP_TOL)
    return SpectralPreconditioner(
        new_gamma,
        np.array([lambdas[i] for i in indices]),
        np.column_stack(kept),
        [lefts[i] for i in indices],
        validate=False,
    )


@dataclass
class SpectrumReport:
    """Observed vs predicted spectrum of the preconditioned normal operator."""

    observed: np.ndarray
    expected: np.ndarray
    max_abs_error: float
    ok: bool


def preconditioned_spectrum_check(precond, dense_a, tol=1e-9):
    """Verify sigma(M^{-1} G^T G) = {1 + lambda_j/gamma : j not captured} + {1}.

    Computes the spectrum through the symmetric form
    M^{-1/2} (A^T A + gamma I) M^{-1/2} and compares it against the
    prediction built from the dense eigenvalues of A^T A, with the captured
    values matched greedily. Only meaningful when the captured pairs are
    (near-)exact eigenpairs; larger deviations are flagged, not raised.
    """
    a = np.asarray(dense_a, dtype=float)
    gamma = precond.gamma
    gtg = a.T @ a + gamma * np.eye(a.shape[1])
    inv_sqrt = np.column_stack(
        [precond.apply_inv_sqrt(col) for col in np.eye(a.shape[1])])
    sym = inv_sqrt @ gtg @ inv_sqrt
    observed = scipy.linalg.eigh((sym + sym.T) / 2.0, eigvals_only=True)

    gram_eigs = list(scipy.linalg.eigh(a.T @ a, eigvals_only=True))
    for lam in precond.lambdas:
        nearest = min(range(len(gram_eigs)), key=lambda i: abs(gram_eigs[i] - lam))
        gram_eigs.pop(nearest)
    expected = np.sort(np.array(
        [1.0 + l / gamma for l in gram_eigs] + [1.0] * precond.pair_count))
    err = float(np.max(np.abs(observed - expected))) if expected.size else 0.0
    scale = max(1.0, float(expected.max())) if expected.size else 1.0
    return SpectrumReport(observed=observed, expected=expected,
                          max_abs_error=err, ok=err <= tol * scale)
