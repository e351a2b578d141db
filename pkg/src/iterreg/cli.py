"""Command-line front end: configure problems, solvers, and stopping rules
from an INI file, run single inversions or multi-sample experiments, and emit
deterministic CSV/JSON tables.

Verbs: ``solve`` (one inversion), ``work-precision`` (error-vs-cost rows for
several methods on shared data), ``stopping-study`` (stop-rule comparison
over noise replicas), ``check`` (invariant suite on a configured problem).
Exit codes: 0 success, 2 configuration error, 3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .krylov import CgBreakdownError, CgConfig, pcg_solve
from .operators import adjoint_mismatch, jacobian_fd_order
from .solvers import (TERMINAL_BREAKDOWN, NewtonConfig, irgnm_run,
                      landweber_run, newton_cg_run)
from .stopping import (DeterministicPhi, DiscrepancyDriver, FixedIndexDriver,
                       PhiBudgetDriver, SampledPhi, WhiteNoisePhi,
                       discrepancy_stop, lepskii_from_history)
from .testbed import (DenseOracle, OracleRefusal, generate_noise,
                      make_convolution_problem, make_diagonal_problem,
                      make_nonlinear_composite, noise_sigma_for_level)

RUN_CSV_HEADER = ("k", "m", "gamma", "residual_norm", "error",
                  "inner_iterations", "cumulative_cost", "phi", "event")
WP_CSV_HEADER = ("method", "checkpoint", "model_units", "wall_time_s", "error")
SAMPLES_CSV_HEADER = ("sample_id", "rule", "stop_index", "error_at_stop")
SUMMARY_CSV_HEADER = ("rule", "samples_used", "mean_stop_index",
                      "std_stop_index", "mean_error", "std_error")

STUDY_RULES = ("discrepancy", "lepskii", "oracle-optimal")

_METHODS = ("irgnm-prec", "irgnm-plain", "newton-cg", "landweber")
_RULES = ("discrepancy", "lepskii", "fixed-K", "oracle-optimal", "none")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


# Schema: section -> key -> (type, default). Type "float?" admits the string
# "auto" (stored as None); required-when-used keys default to None.
_SCHEMA = {
    "problem": {
        "kind": ("choice", "nonlinear-diagonal",
                 ("diagonal", "convolution", "nonlinear-diagonal",
                  "nonlinear-convolution")),
        "m": ("int", 100),
        "n": ("int", 200),
        "decay_a": ("float", 0.25),
        "scale": ("float", 1.0),
        "kernel_width": ("float", 0.05),
        "c3": ("float", 0.1),
        "seed": ("int", 1),
    },
    "solver": {
        "method": ("choice", "irgnm-prec", _METHODS),
        "methods": ("str", ""),
        "gamma0": ("float?", None),
        "gamma_factor": ("float", 1.5),
        "rhs_kind": ("choice", "irgnm", ("irgnm", "levenberg-marquardt")),
        "eps_standard": ("float", 1.0 / 3.0),
        "eps_accurate": ("float", 1e-9),
        "max_newton": ("int", 25),
        "max_inner": ("int", 200),
        "update_age_min": ("int", 4),
        "update_inner_min": ("int", 5),
        "recompute_inner_min": ("int", 8),
        "ritz_separation": ("float", 1.1),
        "ritz_residual_tol": ("float", 1e-6),
        "enable_updates": ("bool", True),
        "landweber_mu": ("float?", None),
        "landweber_steps": ("int", 2000),
        "newton_cg_rho": ("float", 0.8),
    },
    "noise": {
        "kind": ("choice", "white", ("white", "none")),
        "level": ("float", 0.02),
        "sigma": ("float?", None),
        "seed": ("int", 7),
        "samples": ("int", 1),
    },
    "stopping": {
        "rule": ("choice", "discrepancy", _RULES),
        "tau": ("float", 2.0),
        "rho": ("float", 4.1),
        "r_bound": ("float?", None),
        "k_fixed": ("int", 10),
        "phi": ("choice", "white", ("deterministic", "white", "sampled")),
        "phi_samples": ("int", 50),
    },
}


def _parse_value(section, key, kind, raw, choices=None):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float?":
            return None if raw.lower() in ("", "auto", "none") else float(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "choice":
            if raw not in choices:
                raise ConfigError(
                    f"[{section}] {key}: invalid value {raw!r} "
                    f"(choices: {', '.join(choices)})")
            return raw
        return raw
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(
            f"[{section}] {key}: cannot parse {raw!r} as {kind}") from None


def _serialize_value(kind, value):
    if value is None:
        return "auto"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("float", "float?"):
        return repr(float(value))
    return str(value)


@dataclass
class ExperimentConfig:
    """Typed view of the four INI sections; a config plus the package version
    uniquely determines every run output."""

    problem: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    stopping: dict = field(default_factory=dict)

    def __post_init__(self):
        for section, keys in _SCHEMA.items():
            store = getattr(self, section)
            for key, spec in keys.items():
                if key not in store:
                    store[key] = spec[1]

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser):
        data = {section: {} for section in _SCHEMA}
        for section in cp.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(
                        f"unknown field {key!r} in section [{section}]")
                spec = _SCHEMA[section][key]
                choices = spec[2] if spec[0] == "choice" else None
                data[section][key] = _parse_value(section, key, spec[0], raw,
                                                  choices)
        return cls(**data)

    @classmethod
    def from_ini(cls, path):
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        return cls.from_parser(cp)

    @classmethod
    def from_text(cls, text):
        cp = configparser.ConfigParser()
        cp.read_string(text)
        return cls.from_parser(cp)

    def serialize(self):
        lines = []
        for section, keys in _SCHEMA.items():
            lines.append(f"[{section}]")
            store = getattr(self, section)
            for key, spec in keys.items():
                lines.append(f"{key} = {_serialize_value(spec[0], store[key])}")
            lines.append("")
        return "\n".join(lines)

    def to_ini(self, path):
        with open(path, "w") as fh:
            fh.write(self.serialize())

    def as_dict(self):
        return {"problem": dict(self.problem), "solver": dict(self.solver),
                "noise": dict(self.noise), "stopping": dict(self.stopping)}

    def validate(self, methods=None):
        methods = methods or [self.solver["method"]]
        rule = self.stopping["rule"]
        if rule == "lepskii" and self.stopping["r_bound"] is None:
            raise ConfigError(
                "[stopping] r_bound: the balancing rule needs an explicit "
                "error budget R, a reasonable upper bound on the distance "
                "between the initial guess and the solution (same units as "
                "the unknown); it is problem knowledge, not a computed "
                "default")
        if rule == "fixed-K" and self.stopping["k_fixed"] < 0:
            raise ConfigError("[stopping] k_fixed: must be nonnegative")
        if self.noise["kind"] == "white" and self.noise["sigma"] is None \
                and self.noise["level"] < 0:
            raise ConfigError("[noise] level: must be nonnegative")
        for m in methods:
            if m not in _METHODS:
                raise ConfigError(
                    f"[solver] method: invalid value {m!r} "
                    f"(choices: {', '.join(_METHODS)})")


def build_problem(cfg: ExperimentConfig):
    p = cfg.problem
    if p["kind"] in ("diagonal", "nonlinear-diagonal"):
        base = make_diagonal_problem(m=p["m"], n=p["n"], decay_a=p["decay_a"],
                                     scale=p["scale"], seed=p["seed"])
    else:
        base = make_convolution_problem(n=p["n"],
                                        kernel_width=p["kernel_width"],
                                        seed=p["seed"])
    if p["kind"].startswith("nonlinear-"):
        return make_nonlinear_composite(base, c3=p["c3"])
    return base


def build_data(cfg: ExperimentConfig, problem, noise_seed=None):
    """Exact data, one noise realization, and the calibrated noise scales.

    Returns (y_obs, sigma, delta) with delta = sigma * sqrt(N), the expected
    noise norm used by the discrepancy test.
    """
    y_exact = problem.model.evaluate(problem.truth)
    n = y_exact.shape[0]
    if cfg.noise["kind"] == "none":
        return y_exact, 0.0, 0.0
    sigma = cfg.noise["sigma"]
    if sigma is None:
        sigma = noise_sigma_for_level(y_exact, cfg.noise["level"])
    seed = cfg.noise["seed"] if noise_seed is None else noise_seed
    eps = generate_noise(sigma, n, count=1, seed=seed)[0]
    return y_exact + eps, float(sigma), float(sigma * np.sqrt(n))


def build_phi_estimator(cfg: ExperimentConfig, sigma, delta, range_dim,
                        noise_seed):
    which = cfg.stopping["phi"]
    if which == "deterministic":
        return DeterministicPhi(delta)
    if which == "white":
        return WhiteNoisePhi(sigma)
    samples = generate_noise(sigma, range_dim, count=cfg.stopping["phi_samples"],
                             seed=noise_seed + 90001)
    return SampledPhi(samples)


def _newton_config(cfg: ExperimentConfig, method):
    s = cfg.solver
    return NewtonConfig(
        gamma0=s["gamma0"], gamma_factor=s["gamma_factor"],
        rhs_kind=s["rhs_kind"], eps_standard=s["eps_standard"],
        eps_accurate=s["eps_accurate"], update_age_min=s["update_age_min"],
        update_inner_min=s["update_inner_min"],
        recompute_inner_min=s["recompute_inner_min"],
        ritz_separation=s["ritz_separation"],
        ritz_residual_tol=s["ritz_residual_tol"], max_newton=s["max_newton"],
        max_inner=s["max_inner"],
        use_preconditioner=(method == "irgnm-prec"),
        enable_updates=s["enable_updates"])


def _stop_driver(cfg: ExperimentConfig, delta):
    rule = cfg.stopping["rule"]
    if rule == "discrepancy":
        return DiscrepancyDriver(cfg.stopping["tau"], delta)
    if rule == "lepskii":
        return PhiBudgetDriver(cfg.stopping["r_bound"])
    if rule == "fixed-K":
        return FixedIndexDriver(cfg.stopping["k_fixed"])
    return None


def run_method(cfg: ExperimentConfig, problem, y_obs, method=None, stop=None,
               phi_estimator=None):
    method = method or cfg.solver["method"]
    model = problem.model
    x0 = np.zeros(model.domain_dim)
    if method in ("irgnm-prec", "irgnm-plain"):
        return irgnm_run(model, y_obs, x0, _newton_config(cfg, method),
                         stop=stop, phi_estimator=phi_estimator,
                         truth=problem.truth, method_name=method)
    if method == "newton-cg":
        return newton_cg_run(model, y_obs, x0,
                             inner_rho=cfg.solver["newton_cg_rho"], stop=stop,
                             max_newton=cfg.solver["max_newton"],
                             max_inner=cfg.solver["max_inner"],
                             truth=problem.truth)
    if method == "landweber":
        return landweber_run(model, y_obs, x0, mu=cfg.solver["landweber_mu"],
                             stop=stop, max_steps=cfg.solver["landweber_steps"],
                             truth=problem.truth)
    raise ConfigError(f"[solver] method: invalid value {method!r} "
                      f"(choices: {', '.join(_METHODS)})")


def _fmt(value):
    if value is None:
        return ""
    return repr(float(value))


def write_run_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_CSV_HEADER)
        for r in history.records:
            writer.writerow([r.k, r.m, _fmt(r.gamma_k), _fmt(r.residual_norm),
                             _fmt(r.error), r.inner_iterations,
                             r.cumulative_cost, _fmt(r.phi_k), r.event])


def apply_stop_rule(cfg: ExperimentConfig, history, problem, delta):
    """Resolve the configured rule to (stop_index, error_at_stop, reached)."""
    rule = cfg.stopping["rule"]
    records = history.records
    if rule == "discrepancy":
        index = discrepancy_stop(history.residual_norms(),
                                 cfg.stopping["tau"], delta)
    elif rule == "lepskii":
        index = lepskii_from_history(history, cfg.stopping["rho"],
                                     cfg.stopping["r_bound"])
    elif rule == "fixed-K":
        index = min(cfg.stopping["k_fixed"], records[-1].k)
    elif rule == "oracle-optimal":
        if problem.truth is None or any(r.error is None for r in records):
            raise ConfigError(
                "[stopping] rule: oracle-optimal needs a problem with a "
                "known truth vector")
        index = int(np.argmin([r.error for r in records]))
    else:
        index = records[-1].k
    if index is None:
        return None, None, False
    return index, records[index].error, True


def run_single(cfg: ExperimentConfig, out_dir, noise_seed=None):
    """One configured inversion; writes run.csv and summary.json."""
    cfg.validate()
    t0 = time.perf_counter()
    problem = build_problem(cfg)
    y_obs, sigma, delta = build_data(cfg, problem, noise_seed=noise_seed)
    phi_estimator = build_phi_estimator(cfg, sigma, delta,
                                        problem.model.range_dim,
                                        cfg.noise["seed"])
    stop = _stop_driver(cfg, delta)
    history = run_method(cfg, problem, y_obs, stop=stop,
                         phi_estimator=phi_estimator)
    index, error_at_stop, reached = apply_stop_rule(cfg, history, problem,
                                                    delta)

    os.makedirs(out_dir, exist_ok=True)
    write_run_csv(os.path.join(out_dir, "run.csv"), history)
    summary = {
        "version": __version__,
        "config": cfg.as_dict(),
        "problem": problem.describe(),
        "method": history.method,
        "noise": {"sigma": sigma, "delta": delta},
        "terminal_reason": history.terminal_reason,
        "records": len(history.records),
        "total_cost": history.total_cost(),
        "final_error": history.records[-1].error,
        "stop_rule": {
            "rule": cfg.stopping["rule"],
            "stop_index": index,
            "error_at_stop": error_at_stop,
            "reached": reached,
        },
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return history, summary


def run_work_precision(configs, out_dir):
    """Error-vs-cost rows for several methods on identical problem and data.

    ``configs`` is a list of ExperimentConfig differing only in the solver
    section; shared problem and noise sections are enforced.
    """
    if not configs:
        raise ConfigError("work-precision needs at least one configuration")
    head = configs[0]
    for other in configs[1:]:
        if other.problem != head.problem or other.noise != head.noise:
            raise ConfigError(
                "work-precision configs must share [problem] and [noise]")
    histories = []
    for cfg in configs:
        method = cfg.solver["method"]
        cfg.validate([method])
        problem = build_problem(cfg)
        y_obs, sigma, delta = build_data(cfg, problem)
        history = run_method(cfg, problem, y_obs, method=method)
        histories.append(history)

    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "work_precision.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(WP_CSV_HEADER)
        for history in histories:
            for r in history.records:
                writer.writerow([history.method, r.k, r.cumulative_cost,
                                 repr(r.wall_time_s), _fmt(r.error)])
    summary = {
        "version": __version__,
        "config": head.as_dict(),
        "methods": [h.method for h in histories],
        "total_cost": {h.method: h.total_cost() for h in histories},
        "final_error": {h.method: h.records[-1].error for h in histories},
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return histories


def expand_methods(cfg: ExperimentConfig):
    """Per-method configs from the comma-separated [solver] methods field."""
    from dataclasses import replace

    names = [m.strip() for m in cfg.solver["methods"].split(",") if m.strip()]
    if not names:
        names = [cfg.solver["method"]]
    cfg.validate(names)
    out = []
    for name in names:
        solver = dict(cfg.solver)
        solver["method"] = name
        out.append(replace(cfg, problem=dict(cfg.problem), solver=solver,
                           noise=dict(cfg.noise),
                           stopping=dict(cfg.stopping)))
    return out


def _study_sample(cfg: ExperimentConfig, sample_id):
    """One noise replica of the stopping study; builds its own model."""
    problem = build_problem(cfg)
    noise_seed = cfg.noise["seed"] + sample_id
    y_obs, sigma, delta = build_data(cfg, problem, noise_seed=noise_seed)
    phi_estimator = build_phi_estimator(cfg, sigma, delta,
                                        problem.model.range_dim, noise_seed)
    stop = PhiBudgetDriver(cfg.stopping["r_bound"])
    history = run_method(cfg, problem, y_obs, stop=stop,
                         phi_estimator=phi_estimator)

    rows = []
    disc = discrepancy_stop(history.residual_norms(), cfg.stopping["tau"],
                            delta)
    rows.append((sample_id, "discrepancy", disc,
                 history.records[disc].error if disc is not None else None))
    bal = lepskii_from_history(history, cfg.stopping["rho"],
                               cfg.stopping["r_bound"])
    rows.append((sample_id, "lepskii", bal, history.records[bal].error))
    errors = [r.error for r in history.records]
    best = int(np.argmin(errors))
    rows.append((sample_id, "oracle-optimal", best, errors[best]))
    return rows


def run_stopping_study(cfg: ExperimentConfig, num_samples=None, jobs=1,
                       out_dir="."):
    """Stop-rule comparison over independent noise replicas.

    Each sample runs to K_max (the last index with Phi below the budget R),
    then the discrepancy, balancing, and oracle-optimal indices are read off
    the same history. Outputs per-sample rows and a mean/std summary per
    rule; samples that never meet a rule are reported with empty fields and
    excluded from the averages.
    """
    if cfg.stopping["r_bound"] is None:
        raise ConfigError(
            "[stopping] r_bound: the stopping study needs the error budget R "
            "(upper bound on the initial error); see the lepskii rule docs")
    cfg.validate()
    num_samples = cfg.noise["samples"] if num_samples is None else num_samples
    if num_samples < 2:
        raise ConfigError("[noise] samples: stopping study needs at least 2")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_study_sample, cfg, i)
                       for i in range(num_samples)]
            all_rows = [f.result() for f in futures]
    else:
        all_rows = [_study_sample(cfg, i) for i in range(num_samples)]
    rows = [row for sample in sorted(all_rows, key=lambda rs: rs[0][0])
            for row in sample]

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "stopping_samples.csv"), "w",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLES_CSV_HEADER)
        for sample_id, rule, index, error in rows:
            writer.writerow([sample_id, rule,
                             "" if index is None else index, _fmt(error)])

    summary_rows = []
    stats = {}
    for rule in STUDY_RULES:
        indices = [r[2] for r in rows if r[1] == rule and r[2] is not None]
        errors = [r[3] for r in rows if r[1] == rule and r[3] is not None]
        used = len(indices)
        mean_i = float(np.mean(indices)) if used else None
        std_i = float(np.std(indices, ddof=1)) if used > 1 else 0.0
        mean_e = float(np.mean(errors)) if used else None
        std_e = float(np.std(errors, ddof=1)) if used > 1 else 0.0
        summary_rows.append([rule, used, _fmt(mean_i), _fmt(std_i),
                             _fmt(mean_e), _fmt(std_e)])
        stats[rule] = {"samples_used": used, "mean_stop_index": mean_i,
                       "std_stop_index": std_i, "mean_error": mean_e,
                       "std_error": std_e}
    with open(os.path.join(out_dir, "stopping_summary.csv"), "w",
              newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_CSV_HEADER)
        writer.writerows(summary_rows)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump({"version": __version__, "config": cfg.as_dict(),
                   "num_samples": num_samples, "rules": stats},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rows, stats


def run_check(cfg: ExperimentConfig, out_dir="."):
    """Invariant suite on the configured problem; returns (report, all_ok)."""
    cfg.validate()
    problem = build_problem(cfg)
    model = problem.model
    rng = np.random.default_rng(12345)
    report = {}

    point = 0.5 * problem.truth
    jac = model.linearize(point)
    mismatch = adjoint_mismatch(jac, rng, trials=100)
    report["adjoint_mismatch"] = {"value": mismatch, "ok": mismatch <= 1e-10}

    direction = rng.standard_normal(model.domain_dim)
    order, _ = jacobian_fd_order(model, point, direction)
    report["jacobian_fd_order"] = {"value": None if order == np.inf else order,
                                   "ok": bool(order >= 0.9)}

    oracle = DenseOracle.for_problem(problem, point)
    gamma = float(np.median(oracle.gram_spectrum()[0]))
    gamma = max(gamma, 1e-12)
    y_part = rng.standard_normal(model.range_dim)
    h_exact = oracle.tikhonov_solve(gamma, y_part)
    residual = oracle.gram @ h_exact + gamma * h_exact - oracle.a.T @ y_part
    rel = float(np.linalg.norm(residual)
                / max(np.linalg.norm(oracle.a.T @ y_part), 1e-300))
    report["oracle_self_consistency"] = {"value": rel, "ok": rel <= 1e-10}

    from .operators import TikhonovSystem
    sys_k = TikhonovSystem(jac, gamma, y_part, np.zeros(model.domain_dim))
    h_cg, trace = pcg_solve(sys_k, None, cfg=CgConfig(epsilon=1.0 / 3.0))
    cg_rel = float(np.linalg.norm(h_cg - h_exact)
                   / max(np.linalg.norm(h_exact), 1e-300))
    report["cg_contract"] = {"value": cg_rel, "ok": cg_rel <= 0.5 + 1e-12}

    digests = []
    for _ in range(2):
        sub = ExperimentConfig(problem=dict(cfg.problem),
                               solver=dict(cfg.solver),
                               noise=dict(cfg.noise),
                               stopping=dict(cfg.stopping))
        sub.solver["max_newton"] = min(sub.solver["max_newton"], 6)
        tmp = os.path.join(out_dir, "_check_run")
        run_single(sub, tmp)
        with open(os.path.join(tmp, "run.csv"), "rb") as fh:
            digests.append(hashlib.sha256(fh.read()).hexdigest())
    report["determinism"] = {"value": digests[0][:16],
                             "ok": digests[0] == digests[1]}

    all_ok = all(entry["ok"] for entry in report.values())
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "check_report.json"), "w") as fh:
        json.dump({"version": __version__, "problem": problem.describe(),
                   "checks": report, "ok": all_ok},
                  fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return report, all_ok


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="iterreg",
        description="Matrix-free iterative regularization benchmarks")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("solve", "work-precision", "stopping-study", "check"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel noise samples (stopping-study)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the [noise] seed")
    args = parser.parse_args(argv)

    try:
        cfg = ExperimentConfig.from_ini(args.config)
        if args.seed is not None:
            cfg.noise["seed"] = args.seed

        if args.verb == "solve":
            history, summary = run_single(cfg, args.out)
            print(f"method={history.method} records={len(history.records)} "
                  f"terminal={history.terminal_reason} "
                  f"stop_index={summary['stop_rule']['stop_index']}")
            if history.terminal_reason == TERMINAL_BREAKDOWN:
                return 3
        elif args.verb == "work-precision":
            histories = run_work_precision(expand_methods(cfg), args.out)
            for h in histories:
                print(f"{h.method}: cost={h.total_cost()} "
                      f"final_error={h.records[-1].error}")
            if any(h.terminal_reason == TERMINAL_BREAKDOWN for h in histories):
                return 3
        elif args.verb == "stopping-study":
            _, stats = run_stopping_study(cfg, jobs=args.jobs,
                                          out_dir=args.out)
            for rule in STUDY_RULES:
                s = stats[rule]
                print(f"{rule}: used={s['samples_used']} "
                      f"mean_index={s['mean_stop_index']} "
                      f"mean_error={s['mean_error']}")
        else:
            report, all_ok = run_check(cfg, args.out)
            for name, entry in report.items():
                flag = "ok" if entry["ok"] else "FAIL"
                print(f"{name}: {flag} ({entry['value']})")
            if not all_ok:
                return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (configparser.Error, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CgBreakdownError, OracleRefusal) as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
