"""Outer iterations: semi-frozen spectrally preconditioned regularized Newton
(IRGNM / Levenberg-Marquardt), plus Landweber and truncated Newton-CG
baselines.

One Newton step solves the Tikhonov-regularized normal equations
G^T G h = G^T g with G = [A_m; sqrt(gamma_k) I] by CG, where the Jacobian
A_m stays frozen across several steps. A spectral preconditioner is (re)built
from Lanczos Ritz pairs on a square-number schedule and incrementally updated
when the inner iteration count degrades; builds solve accurately
(eps = 1e-9) through the symmetric two-sided form so the harvested pairs are
trustworthy, ordinary steps solve loosely (eps = 1/3).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .krylov import (CgBreakdownError, CgConfig, pcg_solve, ritz_from_trace,
                     select_ritz)
from .operators import (IRGNM, LEVENBERG_MARQUARDT, ContractError,
                        TikhonovSystem, as_vector, build_rhs)
from .preconditioner import (SpectralPreconditioner, TwoSidedSystem,
                             merge_pairs, ritz_to_eigenpair)

EVENT_RECOMPUTE = "Recompute"
EVENT_UPDATE = "Update"
EVENT_PLAIN = "Plain"
EVENT_BASELINE = "Baseline"
EVENT_FINAL = "Final"

TERMINAL_STOP = "StopRule"
TERMINAL_MAX = "MaxNewton"
TERMINAL_BREAKDOWN = "Breakdown"

# Residual blow-up past this multiple of the starting residual ends the run
# with a Breakdown record instead of letting iterates overflow.
DIVERGENCE_FACTOR = 10.0


@dataclass
class NewtonConfig:
    """Knobs of the regularized Newton outer loop.

    gamma0 = None resolves to a power-iteration estimate of ||A_0^T A_0|| at
    run start. eps_accurate governs preconditioner (re)build solves,
    eps_standard all other steps. Negative guard thresholds disable the
    corresponding inner-iteration guard (useful for schedule tests).
    """

    gamma0: float | None = None
    gamma_factor: float = 1.5
    rhs_kind: str = IRGNM
    eps_standard: float = 1.0 / 3.0
    eps_accurate: float = 1e-9
    update_age_min: int = 4
    update_inner_min: int = 5
    recompute_inner_min: int = 8
    ritz_separation: float = 1.1
    ritz_residual_tol: float = 1e-6
    max_newton: int = 25
    max_inner: int = 200
    use_preconditioner: bool = True
    enable_updates: bool = True
    initial_phase: str = "none"
    initial_phase_steps: int = 0
    initial_phase_rel_step: float = 0.1
    initial_phase_rho: float = 0.6

    def __post_init__(self):
        if not self.gamma_factor > 1.0:
            raise ContractError("gamma_factor must exceed 1")
        if not 0.0 < self.eps_accurate <= self.eps_standard < 1.0:
            raise ContractError(
                "need 0 < eps_accurate <= eps_standard < 1")
        if self.rhs_kind not in (IRGNM, LEVENBERG_MARQUARDT):
            raise ContractError(f"unknown rhs_kind {self.rhs_kind!r}")
        if self.initial_phase not in ("none", "newton-cg"):
            raise ContractError(f"unknown initial_phase {self.initial_phase!r}")
        if self.max_newton < 1 or self.max_inner < 1:
            raise ContractError("iteration caps must be positive")


@dataclass
class RunRecord:
    """Per-Newton-step ledger row.

    ``x_k`` is the iterate the step departs from; ``inner_iterations`` the CG
    work spent leaving it (0 on the terminal row); ``event`` one of
    Recompute/Update/Plain/Baseline, or Final for the terminal row.
    """

    k: int
    m: int
    gamma_k: float | None
    x_k: np.ndarray
    residual_norm: float
    inner_iterations: int
    cumulative_cost: int
    phi_k: float | None
    event: str
    error: float | None = None
    wall_time_s: float = 0.0


@dataclass
class RunHistory:
    """Complete record of one outer run."""

    records: list
    terminal_reason: str
    method: str
    stop_index: int | None = None
    meta: dict = field(default_factory=dict)

    def iterates(self):
        return [r.x_k for r in self.records]

    def residual_norms(self):
        return [r.residual_norm for r in self.records]

    def errors(self):
        return [r.error for r in self.records]

    def phis(self):
        return [r.phi_k for r in self.records]

    def events(self):
        return [r.event for r in self.records]

    def inner_counts(self):
        return [r.inner_iterations for r in self.records]

    def total_inner(self):
        return sum(r.inner_iterations for r in self.records)

    def final_x(self):
        if not self.records:
            raise ContractError("empty history")
        return self.records[-1].x_k

    def total_cost(self):
        return self.records[-1].cumulative_cost if self.records else 0


def schedule_gamma(cfg: NewtonConfig, k):
    """Geometric regularization schedule gamma_k = gamma0 * gamma_factor^(-k)."""
    if cfg.gamma0 is None:
        raise ContractError("gamma0 is unresolved; run the solver or set it")
    if k < 0:
        raise ContractError("k must be nonnegative")
    return cfg.gamma0 * cfg.gamma_factor ** (-k)


def estimate_gram_norm(jac, iterations=10, seed=0):
    """Power-iteration estimate of ||A^T A|| (largest eigenvalue)."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(jac.domain_dim)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(iterations):
        w = jac.apply_adjoint(jac.apply(v))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        value = float(v @ w)
        v = w / norm
    return max(value, np.finfo(float).tiny)


def _guard(prev_inner, threshold):
    if threshold < 0:
        return True
    return prev_inner is not None and prev_inner > threshold


def should_recompute(k, m, prev_inner_iterations, cfg: NewtonConfig):
    """Square-number schedule: rebuild when sqrt(k+1) >= sqrt(m+1) + 1 and the
    last standard step was expensive. k = 0 always builds."""
    if k == 0:
        return True
    if k < m:
        raise ContractError("Newton index precedes the linearization point")
    due = np.sqrt(k + 1.0) + 1e-12 >= np.sqrt(m + 1.0) + 1.0
    return due and _guard(prev_inner_iterations, cfg.recompute_inner_min)


def must_update(k, last_build_step, prev_inner_iterations, cfg: NewtonConfig):
    """Incremental update once the last build is stale and steps got expensive."""
    if k < last_build_step:
        raise ContractError("Newton index precedes the last build")
    return (k - last_build_step) >= cfg.update_age_min \
        and _guard(prev_inner_iterations, cfg.update_inner_min)


def _resolve_gamma0(cfg, model, x0):
    if cfg.gamma0 is not None:
        return cfg
    jac = model.linearize(x0)
    return replace(cfg, gamma0=estimate_gram_norm(jac))


def _make_system(jac, gamma_k, residual_vec, rhs_kind, x0, x):
    rhs_data, rhs_prior = build_rhs(rhs_kind, x0, x, residual_vec)
    return TikhonovSystem(jac, gamma_k, rhs_data, rhs_prior)


def _truncated_cgne(jac, b_vec, rho, max_iterations):
    """CG on A^T A h = A^T b, stopped when ||b - A h|| <= rho * ||b||.

    The truncation index, not a Tikhonov term, provides the regularization.
    Returns (h, iterations).
    """
    target = rho * np.linalg.norm(b_vec)
    h = np.zeros(jac.domain_dim)
    d = b_vec.copy()
    r = jac.apply_adjoint(d)
    rho_c = float(r @ r)
    p = r.copy()
    iterations = 0
    while np.linalg.norm(d) > target and rho_c > 0.0 \
            and iterations < max_iterations:
        q = jac.apply(p)
        qq = float(q @ q)
        if qq == 0.0 or not np.isfinite(qq):
            break
        a = rho_c / qq
        h = h + a * p
        d = d - a * q
        r = jac.apply_adjoint(d)
        rho_new = float(r @ r)
        p = r + (rho_new / rho_c) * p
        rho_c = rho_new
        iterations += 1
    return h, iterations


def _harvest(trace, base_precond, gamma_k, separation, residual_tol):
    """Back-map selected Ritz pairs of the two-sided operator to eigenpairs
    (lambda, u) of A_m^T A_m."""
    if trace.iterations < 1:
        return []
    pairs = ritz_from_trace(trace)
    out = []
    for p in select_ritz(pairs, separation, residual_tol):
        u_raw = base_precond.apply_inv_sqrt(p.vector)
        norm = np.linalg.norm(u_raw)
        if norm == 0.0 or not p.theta > 1.0:
            continue
        lam, u = ritz_to_eigenpair(p.theta, gamma_k, u_raw / norm)
        out.append((lam, u))
    return out


def irgnm_run(model, y_obs, x0, cfg: NewtonConfig | None = None, stop=None,
              phi_estimator=None, truth=None, method_name=None):
    """Semi-frozen spectrally preconditioned regularized Newton iteration.

    Per step k: evaluate F(x_k), consult the stop driver, then either
    (re)build the preconditioner (fresh Jacobian, accurate two-sided solve,
    Ritz harvest), update it (frozen Jacobian, accurate two-sided solve with
    the current pairs, harvest and merge), or take an ordinary
    left-preconditioned step at standard tolerance. With
    ``use_preconditioner`` off every step relinearizes and runs plain CG.

    Returns a RunHistory whose last record (event Final) carries the
    terminal iterate; ``phi_estimator`` (an object with
    ``evaluate(gamma_k, precond)``) fills the phi column using the pair set
    current at each step.
    """
    cfg = NewtonConfig() if cfg is None else cfg
    x0 = as_vector(x0, model.domain_dim, "x0")
    y_obs = as_vector(y_obs, model.range_dim, "y_obs")
    if truth is not None:
        truth = as_vector(truth, model.domain_dim, "truth")
    cost_start = model.cost.total
    t_start = time.perf_counter()
    cfg = _resolve_gamma0(cfg, model, x0)

    if method_name is None:
        method_name = "irgnm-prec" if cfg.use_preconditioner else "irgnm-plain"
    x = x0.copy()
    jac = None
    m = -1
    precond = None
    last_build = -1
    prev_plain_inner = None
    in_initial_phase = cfg.initial_phase == "newton-cg"
    records = []
    terminal = TERMINAL_MAX
    stop_index = None
    meta = {"gamma0": cfg.gamma0, "gamma_factor": cfg.gamma_factor,
            "rhs_kind": cfg.rhs_kind}

    def snap(k, gamma_k, rn, inner, phi_k, event, err, cost_now):
        # cumulative_cost is the model-unit meter reading when x_k was
        # evaluated, so (cost, error) rows pair up in work-precision tables.
        return RunRecord(
            k=k, m=(m if m >= 0 else k), gamma_k=gamma_k, x_k=x.copy(),
            residual_norm=rn, inner_iterations=inner,
            cumulative_cost=cost_now, phi_k=phi_k,
            event=event, error=err,
            wall_time_s=time.perf_counter() - t_start)

    for k in range(cfg.max_newton + 1):
        fx = model.evaluate(x)
        cost_now = model.cost.total - cost_start
        residual_vec = y_obs - fx
        rn = float(np.linalg.norm(residual_vec))
        gamma_k = schedule_gamma(cfg, k)
        phi_k = None
        if phi_estimator is not None:
            live = precond.with_gamma(gamma_k) if precond is not None else None
            phi_k = float(phi_estimator.evaluate(gamma_k, live))
        err = float(np.linalg.norm(x - truth)) if truth is not None else None

        fired = stop is not None and stop(k=k, x=x, residual_norm=rn, phi=phi_k)
        if fired or k == cfg.max_newton:
            records.append(snap(k, gamma_k, rn, 0, phi_k, EVENT_FINAL, err,
                                cost_now))
            if fired:
                terminal = TERMINAL_STOP
                stop_index = k
            break
        if records and rn > DIVERGENCE_FACTOR * records[0].residual_norm:
            records.append(snap(k, gamma_k, rn, 0, phi_k, EVENT_FINAL, err,
                                cost_now))
            terminal = TERMINAL_BREAKDOWN
            break

        try:
            if in_initial_phase:
                jac = model.linearize(x)
                m = k
                h, inner = _truncated_cgne(jac, residual_vec,
                                           cfg.initial_phase_rho, cfg.max_inner)
                event = EVENT_BASELINE
                rel = np.linalg.norm(h) / max(np.linalg.norm(x + h), 1e-300)
                forced = cfg.initial_phase_steps and \
                    k + 1 >= cfg.initial_phase_steps
                if forced or rel < cfg.initial_phase_rel_step:
                    in_initial_phase = False
                prev_plain_inner = None
            elif not cfg.use_preconditioner:
                jac = model.linearize(x)
                m = k
                sys = _make_system(jac, gamma_k, residual_vec, cfg.rhs_kind,
                                   x0, x)
                h, trace = pcg_solve(sys, None, cfg=CgConfig(
                    epsilon=cfg.eps_standard, max_iterations=cfg.max_inner,
                    collect_lanczos=False))
                inner = trace.iterations
                event = EVENT_PLAIN
            else:
                recompute = should_recompute(k, max(m, 0), prev_plain_inner, cfg)
                update = (not recompute and cfg.enable_updates
                          and precond is not None
                          and must_update(k, last_build, prev_plain_inner, cfg))
                if recompute or update:
                    if recompute:
                        jac = model.linearize(x)
                        m = k
                        base = SpectralPreconditioner.empty(
                            gamma_k, model.domain_dim)
                    else:
                        base = precond.with_gamma(gamma_k)
                    sys = _make_system(jac, gamma_k, residual_vec,
                                       cfg.rhs_kind, x0, x)
                    tsys = TwoSidedSystem(sys, base)
                    h_t, trace = pcg_solve(tsys, None, cfg=CgConfig(
                        epsilon=cfg.eps_accurate,
                        max_iterations=cfg.max_inner, collect_lanczos=True))
                    h = tsys.pull_back(h_t)
                    new_pairs = _harvest(trace, base, gamma_k,
                                         cfg.ritz_separation,
                                         cfg.ritz_residual_tol)
                    if recompute:
                        if new_pairs:
                            precond = SpectralPreconditioner(
                                gamma_k,
                                np.array([lam for lam, _ in new_pairs]),
                                np.column_stack([u for _, u in new_pairs]))
                        else:
                            precond = SpectralPreconditioner.empty(
                                gamma_k, model.domain_dim)
                    else:
                        precond = merge_pairs(precond, new_pairs, gamma_k)
                    if phi_estimator is not None and \
                            getattr(phi_estimator, "needs_left_vectors", False):
                        precond = precond.attach_left_vectors(jac)
                    last_build = k
                    prev_plain_inner = None
                    inner = trace.iterations
                    event = EVENT_RECOMPUTE if recompute else EVENT_UPDATE
                else:
                    sys = _make_system(jac, gamma_k, residual_vec,
                                       cfg.rhs_kind, x0, x)
                    live = precond.with_gamma(gamma_k) \
                        if precond is not None and precond.pair_count else None
                    h, trace = pcg_solve(sys, live, cfg=CgConfig(
                        epsilon=cfg.eps_standard,
                        max_iterations=cfg.max_inner, collect_lanczos=False))
                    inner = trace.iterations
                    prev_plain_inner = trace.iterations
                    event = EVENT_PLAIN
        except CgBreakdownError as exc:
            partial = exc.trace.iterations if exc.trace is not None else 0
            records.append(snap(k, gamma_k, rn, partial, phi_k,
                                EVENT_FINAL, err, cost_now))
            terminal = TERMINAL_BREAKDOWN
            meta["breakdown"] = str(exc)
            break

        records.append(snap(k, gamma_k, rn, inner, phi_k, event, err,
                            cost_now))
        x = x + h

    return RunHistory(records=records, terminal_reason=terminal,
                      method=method_name, stop_index=stop_index, meta=meta)


def landweber_run(model, y_obs, x0, mu=None, stop=None, max_steps=2000,
                  truth=None):
    """Gradient descent x_{k+1} = x_k + mu A_k^T (y - F(x_k)).

    mu = None picks 0.95 / (power-iteration estimate of ||A_0^T A_0||).
    Each step costs one evaluation plus one adjoint apply. Aborts with a
    Breakdown terminal if the residual grows tenfold above its start.
    """
    x0 = as_vector(x0, model.domain_dim, "x0")
    y_obs = as_vector(y_obs, model.range_dim, "y_obs")
    if truth is not None:
        truth = as_vector(truth, model.domain_dim, "truth")
    cost_start = model.cost.total
    t_start = time.perf_counter()
    if mu is None:
        mu = 0.95 / estimate_gram_norm(model.linearize(x0))
    if not mu >= 0:
        raise ContractError("mu must be nonnegative")

    x = x0.copy()
    records = []
    terminal = TERMINAL_MAX
    stop_index = None
    initial_rn = None

    for k in range(max_steps + 1):
        fx = model.evaluate(x)
        residual_vec = y_obs - fx
        rn = float(np.linalg.norm(residual_vec))
        err = float(np.linalg.norm(x - truth)) if truth is not None else None
        record = RunRecord(
            k=k, m=k, gamma_k=None, x_k=x.copy(), residual_norm=rn,
            inner_iterations=0,
            cumulative_cost=model.cost.total - cost_start,
            phi_k=None, event=EVENT_BASELINE, error=err,
            wall_time_s=time.perf_counter() - t_start)
        if initial_rn is None:
            initial_rn = rn
        fired = stop is not None and stop(k=k, x=x, residual_norm=rn, phi=None)
        if fired or k == max_steps:
            record.event = EVENT_FINAL
            records.append(record)
            if fired:
                terminal = TERMINAL_STOP
                stop_index = k
            break
        if rn > DIVERGENCE_FACTOR * initial_rn:
            record.event = EVENT_FINAL
            records.append(record)
            terminal = TERMINAL_BREAKDOWN
            break
        records.append(record)
        jac = model.linearize(x)
        x = x + mu * jac.apply_adjoint(residual_vec)

    return RunHistory(records=records, terminal_reason=terminal,
                      method="landweber", stop_index=stop_index,
                      meta={"mu": float(mu)})


def newton_cg_run(model, y_obs, x0, inner_rho=0.8, stop=None, max_newton=25,
                  max_inner=200, truth=None):
    """Newton iteration with truncated-CG inner solves and no Tikhonov term.

    The inner loop on A_k^T A_k h = A_k^T (y - F(x_k)) stops once the inner
    data misfit drops below inner_rho times the outer residual; truncation is
    the sole regularization.
    """
    if not 0.0 < inner_rho < 1.0:
        raise ContractError("inner_rho must lie in (0, 1)")
    x0 = as_vector(x0, model.domain_dim, "x0")
    y_obs = as_vector(y_obs, model.range_dim, "y_obs")
    if truth is not None:
        truth = as_vector(truth, model.domain_dim, "truth")
    cost_start = model.cost.total
    t_start = time.perf_counter()

    x = x0.copy()
    records = []
    terminal = TERMINAL_MAX
    stop_index = None

    for k in range(max_newton + 1):
        fx = model.evaluate(x)
        cost_now = model.cost.total - cost_start
        residual_vec = y_obs - fx
        rn = float(np.linalg.norm(residual_vec))
        err = float(np.linalg.norm(x - truth)) if truth is not None else None
        fired = stop is not None and stop(k=k, x=x, residual_norm=rn, phi=None)
        if fired or k == max_newton:
            records.append(RunRecord(
                k=k, m=k, gamma_k=None, x_k=x.copy(), residual_norm=rn,
                inner_iterations=0, cumulative_cost=cost_now, phi_k=None,
                event=EVENT_FINAL, error=err,
                wall_time_s=time.perf_counter() - t_start))
            if fired:
                terminal = TERMINAL_STOP
                stop_index = k
            break
        if records and rn > DIVERGENCE_FACTOR * records[0].residual_norm:
            records.append(RunRecord(
                k=k, m=k, gamma_k=None, x_k=x.copy(), residual_norm=rn,
                inner_iterations=0, cumulative_cost=cost_now, phi_k=None,
                event=EVENT_FINAL, error=err,
                wall_time_s=time.perf_counter() - t_start))
            terminal = TERMINAL_BREAKDOWN
            break
        jac = model.linearize(x)
        h, inner = _truncated_cgne(jac, residual_vec, inner_rho, max_inner)
        records.append(RunRecord(
            k=k, m=k, gamma_k=None, x_k=x.copy(), residual_norm=rn,
            inner_iterations=inner, cumulative_cost=cost_now, phi_k=None,
            event=EVENT_BASELINE, error=err,
            wall_time_s=time.perf_counter() - t_start))
        x = x + h

    return RunHistory(records=records, terminal_reason=terminal,
                      method="newton-cg", stop_index=stop_index,
                      meta={"inner_rho": float(inner_rho)})
