"""Matrix-free forward models, frozen Jacobian handles, and stacked Tikhonov systems.

A forward model is a nonlinear map F: R^M -> R^N accessed only through
evaluations and through Jacobian/adjoint matrix-vector products. Each call
is counted in "model units" (one unit per evaluation, Jacobian apply, or
adjoint apply), the hardware-independent cost currency used by all
benchmarks in this package.
"""

from __future__ import annotations

import threading
from typing import Callable

import numpy as np

LEVENBERG_MARQUARDT = "levenberg-marquardt"
IRGNM = "irgnm"

_RHS_KINDS = (LEVENBERG_MARQUARDT, IRGNM)


class ContractError(ValueError):
    """Raised when an operator contract is violated (dimensions, finiteness)."""


def as_vector(x, dim=None, name="vector"):
    """Coerce ``x`` to a finite 1-D float64 array, checking its length.

    Raises
    ------
    ContractError
        If the array is not 1-D, contains NaN/Inf, or has the wrong length.
    """
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ContractError(f"{name} has length {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains non-finite entries")
    return v


class CostCounter:
    """Thread-safe call counter. One increment per counted operation."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self, n=1):
        with self._lock:
            self._count += n

    @property
    def count(self):
        with self._lock:
            return self._count


class ModelCost:
    """Running totals of forward-model work, in model units.

    One model unit is one evaluation of F, one Jacobian apply, or one
    adjoint apply.
    """

    def __init__(self):
        self.evaluations = CostCounter()
        self.jacobian_applies = CostCounter()
        self.adjoint_applies = CostCounter()

    @property
    def total(self) -> int:
        return (
            self.evaluations.count
            + self.jacobian_applies.count
            + self.adjoint_applies.count
        )


class JacobianHandle:
    """Frozen linearization of a forward model at a fixed point.

    The handle stays valid after the Newton iterate moves on, which is what
    semi-frozen Newton schemes rely on. ``apply`` and ``apply_adjoint`` are
    safe for concurrent read-only use; the cost counters use locked
    increments.

    Parameters
    ----------
    apply_fn, adjoint_fn : callable
        v -> A v (R^M -> R^N) and w -> A^T w (R^N -> R^M).
    domain_dim, range_dim : int
        M and N.
    point_id : int
        Opaque token identifying the linearization point.
    model_cost : ModelCost, optional
        Shared cost ledger of the owning model; incremented alongside the
        handle-local counters.
    """

    def __init__(self, apply_fn, adjoint_fn, domain_dim, range_dim,
                 point_id, model_cost=None):
        self._apply = apply_fn
        self._adjoint = adjoint_fn
        self.domain_dim = int(domain_dim)
        self.range_dim = int(range_dim)
        self.linearization_point_id = point_id
        self.applies = CostCounter()
        self.adjoints = CostCounter()
        self._model_cost = model_cost

    def apply(self, v):
        v = as_vector(v, self.domain_dim, "Jacobian input")
        out = as_vector(self._apply(v), self.range_dim, "Jacobian output")
        self.applies.increment()
        if self._model_cost is not None:
            self._model_cost.jacobian_applies.increment()
        return out

    def apply_adjoint(self, w):
        w = as_vector(w, self.range_dim, "adjoint input")
        out = as_vector(self._adjoint(w), self.domain_dim, "adjoint output")
        self.adjoints.increment()
        if self._model_cost is not None:
            self._model_cost.adjoint_applies.increment()
        return out


class ForwardModel:
    """Nonlinear map F: R^M -> R^N with matrix-free Jacobian access.

    Parameters
    ----------
    domain_dim, range_dim : int
        Dimensions M and N.
    evaluate_fn : callable
        x -> F(x).
    linearize_fn : callable
        x -> (apply_fn, adjoint_fn) for the Jacobian at x. The returned
        pair must implement the exact adjoint; there is no automatic
        differentiation here.
    name : str, optional
        Label used in reports.
    """

    def __init__(self, domain_dim, range_dim, evaluate_fn, linearize_fn,
                 name="model"):
        self.domain_dim = int(domain_dim)
        self.range_dim = int(range_dim)
        self._evaluate = evaluate_fn
        self._linearize = linearize_fn
        self.name = name
        self.cost = ModelCost()
        self._point_counter = 0
        self._point_lock = threading.Lock()

    def evaluate(self, x):
        x = as_vector(x, self.domain_dim, "model input")
        y = as_vector(self._evaluate(x), self.range_dim, "model output")
        self.cost.evaluations.increment()
        return y

    def linearize(self, x) -> JacobianHandle:
        """Return a frozen Jacobian handle at ``x``. Minting one is free."""
        x = as_vector(x, self.domain_dim, "linearization point")
        apply_fn, adjoint_fn = self._linearize(x)
        with self._point_lock:
            self._point_counter += 1
            token = self._point_counter
        return JacobianHandle(apply_fn, adjoint_fn, self.domain_dim,
                              self.range_dim, token, self.cost)


class TikhonovSystem:
    """Stacked operator G = [A; sqrt(gamma) I] and right-hand side, matrix-free.

    Encodes the regularized normal equations G^T G h = G^T g with
    g = (rhs_data; sqrt(gamma) * rhs_prior) without materializing G.

    Attributes
    ----------
    jac : JacobianHandle
        The frozen linearization A.
    gamma : float
        Regularization parameter, > 0.
    rhs_data : ndarray, shape (N,)
        Data-space part of g (the residual y_obs - F(x_k)).
    rhs_prior : ndarray, shape (M,)
        Prior offset b_k (zero for Levenberg-Marquardt).
    """

    def __init__(self, jac: JacobianHandle, gamma: float, rhs_data, rhs_prior):
        if not (gamma > 0 and np.isfinite(gamma)):
            raise ContractError(f"gamma must be positive and finite, got {gamma}")
        self.jac = jac
        self.gamma = float(gamma)
        self.rhs_data = as_vector(rhs_data, jac.range_dim, "rhs_data")
        self.rhs_prior = as_vector(rhs_prior, jac.domain_dim, "rhs_prior")
        self._sqrt_gamma = np.sqrt(self.gamma)

    @property
    def domain_dim(self):
        return self.jac.domain_dim

    @property
    def range_dim(self):
        return self.jac.range_dim + self.jac.domain_dim

    @property
    def stop_scale(self):
        # Lower bound of the spectrum of G^T G, used in the CG stop test.
        return self.gamma

    def apply(self, v):
        """Return G v = (A v; sqrt(gamma) v). Costs exactly one Jacobian apply."""
        v = as_vector(v, self.domain_dim, "input")
        return np.concatenate([self.jac.apply(v), self._sqrt_gamma * v])

    def apply_adjoint(self, d):
        """Return G^T d = A^T d_head + sqrt(gamma) d_tail."""
        d = as_vector(d, self.range_dim, "stacked input")
        n = self.jac.range_dim
        return self.jac.apply_adjoint(d[:n]) + self._sqrt_gamma * d[n:]

    def stacked_rhs(self):
        """Return g = (rhs_data; sqrt(gamma) rhs_prior)."""
        return np.concatenate([self.rhs_data, self._sqrt_gamma * self.rhs_prior])


def stacked_apply(sys: TikhonovSystem, v):
    return sys.apply(v)


def stacked_adjoint_apply(sys: TikhonovSystem, d):
    return sys.apply_adjoint(d)


def build_rhs(kind: str, x0, x_k, residual):
    """Assemble the right-hand-side fields for one Newton step.

    ``kind`` selects the prior offset: zero for ``"levenberg-marquardt"``,
    x0 - x_k for ``"irgnm"``. Returns ``(rhs_data, rhs_prior)``.
    """
    if kind not in _RHS_KINDS:
        raise ContractError(f"unknown rhs kind {kind!r}, expected one of {_RHS_KINDS}")
    x0 = as_vector(x0, name="x0")
    x_k = as_vector(x_k, x0.shape[0], "x_k")
    residual = as_vector(residual, name="residual")
    if kind == LEVENBERG_MARQUARDT:
        prior = np.zeros_like(x0)
    else:
        prior = x0 - x_k
    return residual, prior


def adjoint_mismatch(jac: JacobianHandle, rng, trials=100):
    """Largest normalized adjoint defect |<Av,w> - <v,A^T w>| over random pairs.

    The defect is normalized by ||Av|| ||w|| + ||v|| ||A^T w||; exact adjoint
    pairs give values at round-off level.
    """
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(jac.domain_dim)
        w = rng.standard_normal(jac.range_dim)
        av = jac.apply(v)
        atw = jac.apply_adjoint(w)
        scale = np.linalg.norm(av) * np.linalg.norm(w) \
            + np.linalg.norm(v) * np.linalg.norm(atw)
        if scale == 0.0:
            continue
        worst = max(worst, abs(av @ w - v @ atw) / scale)
    return worst


def jacobian_fd_order(model: ForwardModel, x, direction,
                      steps=(1e-3, 1e-4, 1e-5)):
    """Observed order of the finite-difference Jacobian check.

    Compares (F(x + t v) - F(x)) / t against A_x v over the given step
    sizes and returns ``(order, errors)`` where ``order`` is the fitted
    slope of log error against log t. For exactly linear models the errors
    sit at round-off; the order is then reported as inf.
    """
    x = as_vector(x, model.domain_dim, "x")
    v = as_vector(direction, model.domain_dim, "direction")
    jac = model.linearize(x)
    av = jac.apply(v)
    fx = model.evaluate(x)
    errors = []
    for t in steps:
        fd = (model.evaluate(x + t * v) - fx) / t
        errors.append(np.linalg.norm(fd - av))
    errors = np.asarray(errors)
    # Cancellation in the difference quotient leaves ~eps * |F| / t noise,
    # so the round-off floor grows as the step shrinks.
    scale = max(np.linalg.norm(av), np.linalg.norm(fx), 1.0)
    floors = 64.0 * np.finfo(float).eps * scale / np.asarray(steps)
    if np.all(errors <= floors):
        return np.inf, errors
    logt = np.log(np.asarray(steps))
    loge = np.log(np.maximum(errors, 1e-300))
    order = np.polyfit(logt, loge, 1)[0]
    return order, errors
